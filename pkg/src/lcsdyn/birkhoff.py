"""Birkhoff partial sums and averages, transfer potentials, envelope limits.

For a system (psi, h) the n-th partial sum is S_n(x) = sum_{i<n} h(psi^i x)
and the average is A_n = S_n / n.  The transfer potential
f_n = (1/n) sum_{i=1}^{n-1} S_i realizes A_n = h + f_n o psi - f_n, so every
averaged factor is a conjugate of h up to a coboundary.  Truncated envelopes
inf/sup_{n <= i <= n_max} A_i replace the (uncomputable) tail envelopes; being
monotone in n they approach the limit extrema from the correct side as n_max
grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .core import (
    FINITE,
    BudgetError,
    ConformalSystem,
    DEFAULT_MAX_ITERATIONS,
    ValidationError,
    eval_factor,
    step_points,
    table_factor,
)


@dataclass
class BirkhoffTable:
    """Per-point sums, averages and truncated envelopes for n = 1..n_max.

    Row n-1 of each table holds the values at order n; exact tables are
    nested lists of Fractions, float tables are (n_max, P) arrays.
    """

    sys_label: str
    system: ConformalSystem
    points: np.ndarray
    n_max: int
    sums: object
    averages: object
    env_minus: object
    env_plus: object
    extrema_per_n: dict
    exact: bool


@dataclass
class LimitEstimate:
    """Estimates of the limiting extrema of the truncated envelopes.

    ``exact`` is True on finite bijections, where both limits are cycle-mean
    extrema.  ``error_bound`` is a number only when the factor is a stored
    coboundary (telescoping bound); otherwise the string "heuristic".
    """

    L_minus: object
    L_plus: object
    n_used: int
    error_bound: object
    exact: bool
    stable: bool = True

    def to_json(self):
        return {
            "L_minus": _num_json(self.L_minus),
            "L_plus": _num_json(self.L_plus),
            "n_used": self.n_used,
            "error_bound": _num_json(self.error_bound),
            "exact": self.exact,
            "stable": self.stable,
        }


@dataclass
class AdmissibleSet:
    """Two open rays around the closed gap [L_minus, L_plus], minus {0}.

    The reported admissible sizes are ]-inf, L-[ u ]L+, +inf[ with 0 always
    excluded; ``tolerance`` widens the gap for float estimates.
    """

    gap_low: object
    gap_high: object
    exact: bool
    tolerance: float = 0.0

    def contains(self, k) -> bool:
        if k == 0:
            return False
        return k < self.gap_low - self.tolerance or k > self.gap_high + self.tolerance

    def classify(self, k) -> str:
        if k == 0:
            return "excluded_zero"
        if self.contains(k):
            return "admissible"
        if self.gap_low + self.tolerance <= k <= self.gap_high - self.tolerance:
            return "not_admissible"
        # within `tolerance` of a gap endpoint; decisive only for tolerance 0
        return "not_admissible" if self.tolerance == 0 else "boundary"

    def to_json(self):
        return {
            "gap": [_num_json(self.gap_low), _num_json(self.gap_high)],
            "rays": [["-inf", _num_json(self.gap_low)], [_num_json(self.gap_high), "+inf"]],
            "excludes_zero": True,
            "exact": self.exact,
            "tolerance": self.tolerance,
        }


def _num_json(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, str):
        return v
    return float(v)


def birkhoff_table(sys: ConformalSystem, points=None, n_max: int = 100,
                   max_iterations: int | None = None) -> BirkhoffTable:
    """Tabulate S_n, A_n and truncated envelopes for every sampled point.

    A single forward orbit of length n_max is walked per point; nothing is
    recomputed per n.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    budget = DEFAULT_MAX_ITERATIONS if max_iterations is None else max_iterations
    if n_max > budget:
        raise BudgetError(f"n_max = {n_max} exceeds iteration budget {budget}")
    pts = sys.space.sample_points(points)
    if len(pts) == 0:
        raise ValidationError("empty sample")
    if sys.exact:
        return _exact_table(sys, pts, n_max)
    return _float_table(sys, pts, n_max)


def _float_table(sys, pts, n_max):
    P = pts.shape[0]
    H = np.empty((n_max, P))
    cur = pts
    for i in range(n_max):
        H[i] = eval_factor(sys, cur)
        if i + 1 < n_max:
            cur = step_points(sys, cur)
    S = np.cumsum(H, axis=0)
    A = S / np.arange(1, n_max + 1, dtype=float)[:, None]
    env_minus = np.minimum.accumulate(A[::-1], axis=0)[::-1]
    env_plus = np.maximum.accumulate(A[::-1], axis=0)[::-1]
    extrema = {
        "min_avg": A.min(axis=1),
        "max_avg": A.max(axis=1),
        "inf_env_minus": env_minus.min(axis=1),
        "sup_env_plus": env_plus.max(axis=1),
    }
    return BirkhoffTable(sys.label, sys, pts, n_max, S, A, env_minus, env_plus,
                         extrema, exact=False)


def _exact_table(sys, pts, n_max):
    tbl = sys.perm_table
    hv = sys.factor_table
    states = [int(p) for p in pts]
    P = len(states)
    sums, averages = [], []
    acc = [Fraction(0)] * P
    cur = list(states)
    for n in range(1, n_max + 1):
        acc = [acc[p] + hv[cur[p]] for p in range(P)]
        cur = [tbl[c] for c in cur]
        sums.append(list(acc))
        averages.append([s / n for s in acc])
    env_minus = [row[:] for row in averages]
    env_plus = [row[:] for row in averages]
    for n in range(n_max - 2, -1, -1):
        for p in range(P):
            if env_minus[n + 1][p] < env_minus[n][p]:
                env_minus[n][p] = env_minus[n + 1][p]
            if env_plus[n + 1][p] > env_plus[n][p]:
                env_plus[n][p] = env_plus[n + 1][p]
    extrema = {
        "min_avg": [min(row) for row in averages],
        "max_avg": [max(row) for row in averages],
        "inf_env_minus": [min(row) for row in env_minus],
        "sup_env_plus": [max(row) for row in env_plus],
    }
    return BirkhoffTable(sys.label, sys, pts, n_max, sums, averages,
                         env_minus, env_plus, extrema, exact=True)


def transfer_potential(sys: ConformalSystem, n: int,
                       max_iterations: int | None = None):
    """The potential f_n = (1/n) sum_{i=1}^{n-1} S_i, as an evaluable function.

    Satisfies A_n(h) = h + f_n o psi - f_n; f_1 is identically 0.  On exact
    finite systems the returned values are Fractions.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    budget = DEFAULT_MAX_ITERATIONS if max_iterations is None else max_iterations
    if n > budget:
        raise BudgetError(f"n = {n} exceeds iteration budget {budget}")
    if n == 1:
        return lambda x: 0.0

    def f_n(x):
        # f_n(x) = (1/n) sum_{j=0}^{n-2} (n-1-j) h(psi^j x)
        y = sys.space.normalize(x)
        total = 0
        for j in range(n - 1):
            total = total + (n - 1 - j) * sys.factor(y)
            y = sys.forward(y)
        return total / n

    return f_n


def transfer_potential_values(sys: ConformalSystem, pts, n: int) -> np.ndarray:
    """Vectorized f_n over an array of points (float path)."""
    pts = np.asarray(pts)
    if n == 1:
        return np.zeros(pts.shape[0])
    weights = np.arange(n - 1, 0, -1, dtype=float)
    total = np.zeros(pts.shape[0])
    cur = pts
    for j in range(n - 1):
        total += weights[j] * eval_factor(sys, cur)
        if j + 1 < n - 1:
            cur = step_points(sys, cur)
    return total / n


def coboundary_residual(sys: ConformalSystem, n: int, points=None):
    """max_x |A_n(h)(x) - (h(x) + f_n(psi x) - f_n(x))| over sampled points.

    Exactly zero (Fraction) on exact finite systems; float rounding otherwise.
    """
    pts = sys.space.sample_points(points)
    if sys.exact:
        f_n = transfer_potential(sys, n)
        worst = Fraction(0)
        for p in pts:
            x = int(p)
            y = x
            s = Fraction(0)
            for _ in range(n):
                s += sys.factor(y)
                y = sys.forward(y)
            lhs = s / n
            rhs = sys.factor(x) + f_n(sys.forward(x)) - f_n(x)
            worst = max(worst, abs(lhs - rhs))
        return worst
    a_n = _average_values(sys, pts, n)
    h = eval_factor(sys, pts)
    f_here = transfer_potential_values(sys, pts, n)
    f_next = transfer_potential_values(sys, step_points(sys, pts), n)
    return float(np.max(np.abs(a_n - (h + f_next - f_here))))


def coboundary_residual_curve(sys: ConformalSystem, n_max: int, points=None) -> np.ndarray:
    """Residuals of the transfer identity for every n = 1..n_max (float path).

    Uses one orbit table per base grid (the grid and its image), so the whole
    curve costs a single length-(n_max+1) orbit sweep.
    """
    pts = sys.space.sample_points(points)

    def tables(base):
        P = base.shape[0]
        H = np.empty((n_max + 1, P))
        cur = base
        for i in range(n_max + 1):
            H[i] = eval_factor(sys, cur)
            if i < n_max:
                cur = step_points(sys, cur)
        S = np.cumsum(H, axis=0)  # S[j] = S_{j+1}
        CS = np.cumsum(S, axis=0)  # CS[j] = S_1 + ... + S_{j+1}
        return H, S, CS

    H1, S1, CS1 = tables(pts)
    H2, S2, CS2 = tables(step_points(sys, pts))
    out = np.empty(n_max)
    h = H1[0]
    for n in range(1, n_max + 1):
        a_n = S1[n - 1] / n
        # f_n = (1/n) sum_{i=1}^{n-1} S_i = CS[n-2]/n (CS[j] = S_1 + ... + S_{j+1})
        f_here = CS1[n - 2] / n if n > 1 else 0.0
        f_next = CS2[n - 2] / n if n > 1 else 0.0
        out[n - 1] = np.max(np.abs(a_n - (h + f_next - f_here)))
    return out


def _average_values(sys, pts, n):
    total = np.zeros(pts.shape[0])
    cur = pts
    for i in range(n):
        total += eval_factor(sys, cur)
        if i + 1 < n:
            cur = step_points(sys, cur)
    return total / n


def gauge_shifted_system(sys: ConformalSystem, f0) -> ConformalSystem:
    """The system with factor h + f0 o psi - f0 (same dynamics)."""
    if sys.space.kind == FINITE and sys.factor_table is not None:
        m = sys.space.size
        f_vals = [f0(i) for i in range(m)]
        vals = tuple(sys.factor_table[i] + f_vals[sys.perm_table[i]] - f_vals[i]
                     for i in range(m))
        return replace(sys, factor=table_factor(vals), factor_table=vals,
                       generating_f=None, label=f"{sys.label} + coboundary")

    base = sys.factor

    def h(x):
        if np.ndim(x):
            pts = np.asarray(x, dtype=float)
            nxt = step_points(sys, pts)
            return np.asarray(base(pts)) + np.asarray(f0(nxt)) - np.asarray(f0(pts))
        return base(x) + f0(sys.forward(x)) - f0(x)

    return replace(sys, factor=h, generating_f=None, label=f"{sys.label} + coboundary")


def limit_estimates(table: BirkhoffTable, stabilization_rtol: float = 1e-6,
                    window_fraction: float = 0.1) -> LimitEstimate:
    """Estimate the limiting envelope extrema from a completed table.

    Finite bijections are resolved exactly through the cycle-mean oracle.  On
    continuous kinds the monotone truncated envelopes at n_max are reported;
    the estimate is flagged unstable when the extrema still move (relatively)
    more than ``stabilization_rtol`` across the last ``window_fraction`` of
    orders.  Systems carrying a stored generating function get the
    telescoping error bound 2 (max f - min f) / n; everything else is marked
    "heuristic".
    """
    sys = table.system
    if sys.space.kind == FINITE and sys.perm_table is not None:
        from . import ergopt

        dec = ergopt.cycle_mean_extrema(sys)
        return LimitEstimate(
            L_minus=dec.min_mean,
            L_plus=dec.max_mean,
            n_used=table.n_max,
            error_bound=Fraction(0) if sys.exact else 0.0,
            exact=True,
            stable=True,
        )

    lo_curve = np.asarray(table.extrema_per_n["inf_env_minus"], dtype=float)
    hi_curve = np.asarray(table.extrema_per_n["sup_env_plus"], dtype=float)
    n_used = table.n_max
    start = max(0, n_used - max(1, math.ceil(window_fraction * n_used)))
    stable = True
    for curve in (lo_curve, hi_curve):
        win = curve[start:]
        span = float(win.max() - win.min())
        scale = max(1.0, float(np.max(np.abs(win))))
        if span / scale > stabilization_rtol:
            stable = False
    if sys.generating_f is not None:
        f_vals = eval_factor_like(sys.generating_f, table.points)
        bound = 2.0 * float(f_vals.max() - f_vals.min()) / n_used
    else:
        bound = "heuristic"
    return LimitEstimate(
        L_minus=float(lo_curve[-1]),
        L_plus=float(hi_curve[-1]),
        n_used=n_used,
        error_bound=bound,
        exact=False,
        stable=stable,
    )


def eval_factor_like(fn, pts) -> np.ndarray:
    """Evaluate a plain scalar/array function over points, as float64."""
    pts = np.asarray(pts)
    try:
        v = np.asarray(fn(pts), dtype=float)
        if v.shape == (pts.shape[0],):
            return v
    except Exception:
        pass
    return np.asarray([float(fn(p)) for p in pts])


def admissible_set(estimate: LimitEstimate, tolerance: float | None = None) -> AdmissibleSet:
    """Admissible-size presentation derived from a limit estimate.

    Sizes strictly outside the (tolerance-widened) gap are admissible; 0 is
    always excluded from the reported set because the admissible sizes form
    an open subset of the punctured line.
    """
    if tolerance is None:
        if estimate.exact:
            tolerance = 0.0
        elif isinstance(estimate.error_bound, (int, float)):
            tolerance = float(estimate.error_bound)
        else:
            tolerance = 0.0
    return AdmissibleSet(
        gap_low=estimate.L_minus,
        gap_high=estimate.L_plus,
        exact=estimate.exact,
        tolerance=float(tolerance),
    )


def table_to_csv(table: BirkhoffTable, path):
    """Dump the full table as CSV: point, n, S_n, A_n, env-, env+."""
    import csv

    def fmt_point(p):
        if table.system.space.kind == FINITE:
            return str(int(p))
        if np.ndim(p) == 0:
            return repr(float(p))
        return ":".join(repr(float(c)) for c in p)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "n", "S_n", "A_n", "env_minus", "env_plus"])
        for pi, p in enumerate(table.points):
            label = fmt_point(p)
            for n in range(1, table.n_max + 1):
                w.writerow([
                    label,
                    n,
                    _csv_num(table.sums[n - 1][pi]),
                    _csv_num(table.averages[n - 1][pi]),
                    _csv_num(table.env_minus[n - 1][pi]),
                    _csv_num(table.env_plus[n - 1][pi]),
                ])


def extrema_to_csv(table: BirkhoffTable, path):
    """Dump the extrema curves (one row per n) for plotting."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "min_avg", "max_avg", "inf_env_minus", "sup_env_plus"])
        ex = table.extrema_per_n
        for n in range(1, table.n_max + 1):
            w.writerow([n] + [_csv_num(ex[key][n - 1]) for key in
                              ("min_avg", "max_avg", "inf_env_minus", "sup_env_plus")])


def _csv_num(v):
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))
