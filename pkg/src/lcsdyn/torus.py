"""Mapping-torus Z-action on N x R and its explicit trivializing data.

The action of size k moves (x, t) to (psi(x), t + k - h(x)); its n-th power
has the closed form (psi^n(x), t + n(k - A_n(h)(x))).  When k avoids the
range of some averaged factor A_n(h), a smooth cutoff chi assembles a
function g on N x R with

    g(psi(x), t + 1) = g(x, t) - A_n(h)(x)   and   dt g + k one-signed,

which conjugates the size-1 action to the size-k action through
sigma(x, t) = (x, g(x, t) + t k + f_n(x)) and yields mu = -k (t o sigma^{-1})
with mu o rho = mu - k.  The properness probe watches orbits of the compact
band K whose t-extent is [-max(max h, k - min h), -min(min h, k - max h)]:
the band is wide enough that a drifting orbit cannot step across it without
landing inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.integrate import cumulative_simpson

from .core import (
    FINITE,
    BudgetError,
    ConformalSystem,
    DomainError,
    ValidationError,
    eval_factor,
    factor_range,
    mirrored_system,
    reference_points,
    step_points,
)

VERDICT_RECURRENT = "RecurrentEvidence"
VERDICT_ESCAPE = "EscapeCertified"
VERDICT_INCONCLUSIVE = "Inconclusive"


class NotFoundError(RuntimeError):
    """No usable averaging order was found within the scan budget."""


class InfeasibleError(ValueError):
    """The requested construction cannot exist with the given data."""


@dataclass(frozen=True)
class TorusAction:
    """The Z-action generator (x, t) -> (psi(x), t + k - h(x))."""

    sys: ConformalSystem
    k: object

    def __post_init__(self):
        if not math.isfinite(float(self.k)):
            raise ValidationError("size k must be finite")


def action_step(act: TorusAction, x, t):
    """One forward application of the action generator."""
    y = act.sys.space.normalize(x)
    return act.sys.forward(y), t + act.k - act.sys.factor(y)


def action_step_inverse(act: TorusAction, x, t):
    """One application of the inverse generator (via psi^{-1})."""
    y = act.sys.space.normalize(x)
    prev = act.sys.backward(y)
    return prev, t - act.k + act.sys.factor(prev)


def action_power(act: TorusAction, x, t, n: int, max_iterations: int = 1_000_000):
    """n-th power by the closed formula (psi^n x, t + n k - S_n(h)(x)), n >= 0."""
    if n < 0:
        raise ValidationError("action_power expects n >= 0")
    if n > max_iterations:
        raise BudgetError(f"n = {n} exceeds budget {max_iterations}")
    y = act.sys.space.normalize(x)
    s = 0
    for _ in range(n):
        s = s + act.sys.factor(y)
        y = act.sys.forward(y)
    return y, t + n * act.k - s


@dataclass
class Witness:
    start: object
    n: int
    t: float

    def to_json(self):
        start = self.start
        if isinstance(start, np.ndarray):
            start = [float(v) for v in start]
        elif isinstance(start, (np.integer, int)):
            start = int(start)
        else:
            start = float(start)
        return {"start": start, "n": int(self.n), "t": float(self.t)}


@dataclass
class ProbeReport:
    """Evidence about proper discontinuity of the size-k action.

    RecurrentEvidence: an orbit launched in the band K keeps re-entering it
    through the late part of the horizon (evidence against admissibility).
    EscapeCertified: a drift bound shows every sampled orbit leaves K for
    good after ``escape_bound`` steps (evidence for admissibility).
    Verdicts on continuous systems are evidence, not proof.
    """

    k: float
    band: tuple
    verdict: str
    witness: Witness | None
    escape_bound: int | None
    certificate: str
    heuristic: bool
    n_max: int
    n_starts: int

    def to_json(self):
        return {
            "k": float(self.k),
            "band": [float(self.band[0]), float(self.band[1])],
            "verdict": self.verdict,
            "witness": self.witness.to_json() if self.witness else None,
            "escape_bound": self.escape_bound,
            "certificate": self.certificate,
            "heuristic": self.heuristic,
            "n_max": self.n_max,
            "n_starts": self.n_starts,
        }


def band_interval(sys: ConformalSystem, k: float, points=None):
    """t-extent of the compact band K for size k (from sampled factor bounds)."""
    hmin, hmax = factor_range(sys, points)
    k = float(k)
    lo = -max(hmax, k - hmin)
    hi = -min(hmin, k - hmax)
    return lo, hi


def _cycle_residual_bound(sys: ConformalSystem):
    """Per-cycle means plus the sup of |S_n - n mean| (periodic residual)."""
    from . import ergopt

    dec = ergopt.cycle_mean_extrema(sys)
    hv = [float(v) for v in sys.factor_table]
    tbl = sys.perm_table
    means, R = [], 0.0
    for cyc, mean in dec.cycles:
        mean_f = float(mean)
        means.append(mean_f)
        for start in cyc:
            s = 0.0
            x = start
            for n in range(1, len(cyc)):
                s += hv[x]
                x = tbl[x]
                R = max(R, abs(s - n * mean_f))
    return means, R


def properness_probe(act: TorusAction, n_max: int = 1000, starts=None,
                     late_fraction: float = 0.5) -> ProbeReport:
    """Probe whether the size-k orbit of the band K escapes or keeps returning.

    Certificates are tried first: exact cycle drift on finite systems, the
    telescoping bound when the factor is a stored coboundary, then the
    truncated-envelope drift bound.  Without a certificate, orbits launched
    in K are scanned; returns that persist into the last ``late_fraction`` of
    the horizon count as recurrence evidence (early incidental returns alone
    are inconclusive, since even escaping orbits may brush the band first).
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    sys = act.sys
    k = float(act.k)
    if starts is None:
        starts = sys.space.size if sys.space.kind == FINITE else 64
    pts = sys.space.sample_points(starts)
    lo, hi = band_interval(sys, k)
    width = hi - lo
    n_starts = len(pts)
    heuristic = sys.space.kind != FINITE

    # --- certificates -----------------------------------------------------
    if sys.space.kind == FINITE and sys.perm_table is not None:
        means, R = _cycle_residual_bound(sys)
        gaps = [abs(k - m) for m in means]
        if min(gaps) > 1e-12:
            n0 = max(int(math.floor((width + R) / g)) + 1 for g in gaps)
            return ProbeReport(k, (lo, hi), VERDICT_ESCAPE, None, n0,
                               "cycle-exact", False, n_max, n_starts)
        # k is (numerically) a cycle mean: that cycle's band orbit is periodic
        idx = gaps.index(min(gaps))
        from . import ergopt

        dec = ergopt.cycle_mean_extrema(sys)
        cyc, _ = dec.cycles[idx]
        t0 = 0.0 if lo <= 0.0 <= hi else 0.5 * (lo + hi)
        wit = Witness(int(cyc[0]), len(cyc), t0 + len(cyc) * (k - means[idx]))
        return ProbeReport(k, (lo, hi), VERDICT_RECURRENT, wit, None,
                           "cycle-exact", False, n_max, n_starts)

    if sys.generating_f is not None and k != 0.0:
        from .birkhoff import eval_factor_like

        ref = reference_points(sys)
        fv = eval_factor_like(sys.generating_f, ref)
        V = float(fv.max() - fv.min())
        n0 = int(math.floor((width + V) / abs(k))) + 1
        return ProbeReport(k, (lo, hi), VERDICT_ESCAPE, None, n0,
                           "telescoping-bound", heuristic, n_max, n_starts)

    # envelope drift bound over the sampled starts
    from .birkhoff import birkhoff_table

    table = birkhoff_table(sys, pts, n_max)
    sup_env = np.asarray(table.extrema_per_n["sup_env_plus"], dtype=float)
    inf_env = np.asarray(table.extrema_per_n["inf_env_minus"], dtype=float)
    best = None
    ns = np.arange(1, n_max + 1)
    margin = 1e-12 * max(1.0, abs(k))  # float noise must not fake a drift
    up = sup_env < k - margin
    if np.any(up):
        cand = np.maximum(ns[up], np.floor(width / (k - sup_env[up])) + 1)
        best = int(cand.min())
    down = inf_env > k + margin
    if np.any(down):
        cand = np.maximum(ns[down], np.floor(width / (inf_env[down] - k)) + 1)
        best = int(cand.min()) if best is None else min(best, int(cand.min()))
    if best is not None:
        return ProbeReport(k, (lo, hi), VERDICT_ESCAPE, None, best,
                           "envelope", True, n_max, n_starts)

    # --- recurrence scan ----------------------------------------------------
    t0 = 0.0 if lo <= 0.0 <= hi else 0.5 * (lo + hi)
    sums = np.asarray(table.sums, dtype=float)  # (n_max, P)
    t_vals = t0 + k * ns[:, None] - sums
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    in_band = (t_vals >= lo - tol) & (t_vals <= hi + tol)
    if np.any(in_band):
        last = int(ns[np.any(in_band, axis=1)].max())
        if last >= max(1, math.ceil(late_fraction * n_max)):
            n_idx, p_idx = np.argwhere(in_band)[0]
            start = pts[p_idx]
            wit = Witness(start if np.ndim(start) else _scalar(start, sys),
                          int(ns[n_idx]), float(t_vals[n_idx, p_idx]))
            return ProbeReport(k, (lo, hi), VERDICT_RECURRENT, wit, None,
                               "orbit-returns", heuristic, n_max, n_starts)
    return ProbeReport(k, (lo, hi), VERDICT_INCONCLUSIVE, None, None, "none",
                       heuristic, n_max, n_starts)


def _scalar(p, sys):
    return int(p) if sys.space.kind == FINITE else float(p)


# --------------------------------------------------------------------------
# cutoff
# --------------------------------------------------------------------------


@dataclass
class CutoffFunction:
    """Mollified linear ramp: 0 on (-inf, 0], 1 on [1, inf), slope < 1/(1-2d).

    Built by convolving the ramp rising on [d, 1-d] with a bump of width d,
    so the transition is smooth, the derivative is supported in [0, 1] and
    its sup can be pushed arbitrarily close to 1 by shrinking d.
    """

    mollifier_width: float
    derivative_sup: float
    kind: str = "mollified-ramp"
    _grid: np.ndarray = None
    _cdf: np.ndarray = None
    _moment: np.ndarray = None

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        d = self.mollifier_width
        a = np.clip(s - 1.0 + d, -d, d)
        b = np.clip(s - d, -d, d)
        cdf_a = np.interp(a, self._grid, self._cdf)
        cdf_b = np.interp(b, self._grid, self._cdf)
        m_a = np.interp(a, self._grid, self._moment)
        m_b = np.interp(b, self._grid, self._moment)
        mid = cdf_a + ((s - d) * (cdf_b - cdf_a) - (m_b - m_a)) / (1.0 - 2.0 * d)
        mid = np.clip(mid, 0.0, 1.0)  # quadrature noise at the plateau edges
        out = np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, mid))
        return float(out) if out.ndim == 0 else out

    def prime(self, s):
        s = np.asarray(s, dtype=float)
        d = self.mollifier_width
        a = np.clip(s - 1.0 + d, -d, d)
        b = np.clip(s - d, -d, d)
        cdf_a = np.interp(a, self._grid, self._cdf)
        cdf_b = np.interp(b, self._grid, self._cdf)
        out = np.maximum(cdf_b - cdf_a, 0.0) / (1.0 - 2.0 * d)
        out = np.where((s <= 0.0) | (s >= 1.0), 0.0, out)
        return float(out) if out.ndim == 0 else out


def build_cutoff(bound: float, table_size: int = 32769) -> CutoffFunction:
    """Cutoff with derivative sup strictly below ``bound``; needs bound > 1.

    Any smooth 0 -> 1 transition supported on [0, 1] has sup slope >= 1, so
    bound <= 1 is infeasible.  The mollifier width is d = min(0.2,
    0.999 (1 - 1/bound) / 2), giving sup slope 1/(1-2d) < bound.
    """
    bound = float(bound)
    if bound <= 1.0:
        raise InfeasibleError(
            "a 0->1 transition on [0,1] forces sup slope >= 1; bound must exceed 1")
    d = min(0.2, 0.999 * (1.0 - 1.0 / bound) / 2.0)
    u = np.linspace(-d, d, table_size)
    with np.errstate(divide="ignore", over="ignore"):
        arg = 1.0 - (u / d) ** 2
        phi = np.where(arg > 0, np.exp(-1.0 / np.maximum(arg, 1e-300)), 0.0)
    cdf = cumulative_simpson(phi, x=u, initial=0.0)
    mass = cdf[-1]
    cdf = cdf / mass
    moment = cumulative_simpson(u * phi, x=u, initial=0.0) / mass
    return CutoffFunction(
        mollifier_width=d,
        derivative_sup=1.0 / (1.0 - 2.0 * d),
        _grid=u,
        _cdf=cdf,
        _moment=moment,
    )


# --------------------------------------------------------------------------
# the transition function g and the cocycle mu
# --------------------------------------------------------------------------


@dataclass
class GConstruction:
    """g with g(psi x, t+1) = g(x, t) - h(x) and dt g + k one-signed.

    Direct branch (factor < k, k > 0):

        g(x,t) = sum_i (1 - chi(t+1+i)) h(psi^i x) - sum_i chi(t-i) h(psi^{-i-1} x)

    truncated to the finitely many indices whose cutoff coefficient is
    nonzero.  For factor > k with k < 0 the mirrored branch delegates to the
    direct one for (psi^{-1}, -h o psi^{-1}, -k) and flips t.  The slope
    dt g + k carries the sign of k.
    """

    system: ConformalSystem
    k: float
    eps: float
    cutoff: CutoffFunction
    t_window: tuple
    mirrored: bool
    inner: "GConstruction | None"
    max_terms: int

    def slope_sign(self) -> int:
        return 1 if self.k > 0 else -1

    # -- scalar evaluation --------------------------------------------------

    def g(self, x, t):
        if self.mirrored:
            return self.inner.g(x, -t)
        return self._direct_scalar(x, float(t), derivative=False)

    def dt(self, x, t):
        if self.mirrored:
            return -self.inner.dt(x, -t)
        return self._direct_scalar(x, float(t), derivative=True)

    def _direct_scalar(self, x, t, derivative):
        sys = self.system
        chi = self.cutoff
        i1 = math.ceil(-t) - 1  # leading sum: indices with t + 1 + i < 1
        i2 = math.ceil(t) - 1  # trailing sum: indices with t - i > 0
        if (i1 + 1) + (i2 + 1) > self.max_terms:
            raise BudgetError(f"t = {t} needs more than {self.max_terms} terms")
        total = 0.0
        y = sys.space.normalize(x)
        for i in range(i1 + 1):
            if derivative:
                total -= chi.prime(t + 1 + i) * float(sys.factor(y))
            else:
                total += (1.0 - chi(t + 1 + i)) * float(sys.factor(y))
            y = sys.forward(y)
        y = sys.backward(sys.space.normalize(x))
        for i in range(i2 + 1):
            if derivative:
                total -= chi.prime(t - i) * float(sys.factor(y))
            else:
                total -= chi(t - i) * float(sys.factor(y))
            y = sys.backward(y)
        return total

    # -- vectorized evaluation over a grid x a list of times -----------------

    def _orbit_tables(self, pts, ts):
        sys = self.system
        i1 = max(0, math.ceil(-float(np.min(ts)))) + 1
        i2 = max(0, math.ceil(float(np.max(ts)))) + 1
        if i1 + i2 > self.max_terms:
            raise BudgetError("t window needs more terms than the budget allows")
        fwd = np.empty((i1, len(pts)))
        cur = pts
        for i in range(i1):
            fwd[i] = eval_factor(sys, cur)
            if i + 1 < i1:
                cur = step_points(sys, cur)
        bwd = np.empty((i2, len(pts)))
        cur = step_points(sys, pts, inverse=True)
        for i in range(i2):
            bwd[i] = eval_factor(sys, cur)
            if i + 1 < i2:
                cur = step_points(sys, cur, inverse=True)
        return fwd, bwd

    def g_grid(self, pts, ts):
        if self.mirrored:
            return self.inner.g_grid(pts, -np.asarray(ts, dtype=float))
        ts = np.asarray(ts, dtype=float)
        fwd, bwd = self._orbit_tables(pts, ts)
        i_lead = np.arange(fwd.shape[0])
        i_trail = np.arange(bwd.shape[0])
        out = np.empty((len(ts), len(pts)))
        for r, t in enumerate(ts):
            lead = 1.0 - self.cutoff(t + 1.0 + i_lead)
            trail = self.cutoff(t - i_trail)
            out[r] = lead @ fwd - trail @ bwd
        return out

    def dt_grid(self, pts, ts):
        if self.mirrored:
            return -self.inner.dt_grid(pts, -np.asarray(ts, dtype=float))
        ts = np.asarray(ts, dtype=float)
        fwd, bwd = self._orbit_tables(pts, ts)
        i_lead = np.arange(fwd.shape[0])
        i_trail = np.arange(bwd.shape[0])
        out = np.empty((len(ts), len(pts)))
        for r, t in enumerate(ts):
            lead = self.cutoff.prime(t + 1.0 + i_lead)
            trail = self.cutoff.prime(t - i_trail)
            out[r] = -(lead @ fwd) - (trail @ bwd)
        return out

    # -- checks ---------------------------------------------------------------

    def functional_residual(self, pts=None, ts=None) -> float:
        """max |g(psi x, t+1) - g(x, t) + h(x)| over the sample."""
        pts, ts = self._default_sample(pts, ts)
        here = self.g_grid(pts, ts)
        there = self.g_grid(step_points(self.system, pts), ts + 1.0)
        h = eval_factor(self.system, pts)
        return float(np.max(np.abs(there - here + h[None, :])))

    def slope_margin(self, pts=None, ts=None) -> float:
        """min |dt g + k| over the sample."""
        pts, ts = self._default_sample(pts, ts)
        return float(np.min(np.abs(self.dt_grid(pts, ts) + self.k)))

    def dt_attainable(self, pts=None, s_count: int = 4097, max_factor_values: int = 512):
        """Attainable values of dt g: products of -chi' with orbit factor values.

        At every t exactly one cutoff translate is active, so the value set
        of dt g over grid x window factors as (chi' values) x (factor orbit
        values); sampling the two factors densely is equivalent to a very
        fine direct sweep.
        """
        if self.mirrored:
            return -self.inner.dt_attainable(pts, s_count, max_factor_values)
        pts = reference_points(self.system) if pts is None else pts
        lo, hi = self.t_window
        depth_f = max(0, math.ceil(-lo)) + 1
        depth_b = max(0, math.ceil(hi)) + 1
        vals = []
        cur = pts
        for i in range(depth_f):
            vals.append(eval_factor(self.system, cur))
            if i + 1 < depth_f:
                cur = step_points(self.system, cur)
        cur = step_points(self.system, pts, inverse=True)
        for i in range(depth_b):
            vals.append(eval_factor(self.system, cur))
            if i + 1 < depth_b:
                cur = step_points(self.system, cur, inverse=True)
        hv = np.unique(np.concatenate(vals))
        if len(hv) > max_factor_values:
            idx = np.linspace(0, len(hv) - 1, max_factor_values).round().astype(int)
            hv = hv[idx]
        s = np.linspace(0.0, 1.0, s_count)
        chi_p = self.prime_values(s)
        return (-np.outer(chi_p, hv)).ravel()

    def prime_values(self, s):
        return np.asarray(self.cutoff.prime(s), dtype=float)

    def _default_sample(self, pts, ts):
        if pts is None:
            pts = reference_points(self.system, cap=256)
        if ts is None:
            lo, hi = self.t_window
            ts = np.linspace(lo, hi, 201)
        return np.asarray(pts), np.asarray(ts, dtype=float)


def build_g(sys: ConformalSystem, k: float, t_window, cutoff: CutoffFunction = None,
            points=None, max_terms: int = 100_000) -> GConstruction:
    """Assemble g for a factor avoiding k (factor < k or factor > k uniformly).

    The ramp construction needs the sign of k to agree with the side of the
    gap: factor < k requires k > 0 and factor > k requires k < 0 (otherwise
    a one-signed slope would force a cutoff with sup slope below 1, which no
    0 -> 1 transition can deliver).
    """
    k = float(k)
    lo, hi = float(t_window[0]), float(t_window[1])
    if not lo < hi:
        raise ValidationError("t_window must be a nonempty interval")
    if max(abs(lo), abs(hi)) + 2 > max_terms:
        raise BudgetError("t_window exceeds the truncation budget")
    hmin, hmax = factor_range(sys, points)
    if hmin <= k <= hmax:
        raise DomainError(
            f"k = {k} lies in the sampled factor range [{hmin:.6g}, {hmax:.6g}]")
    if hmax < k:
        if k <= 0:
            raise InfeasibleError(
                "factor < k needs k > 0 for a one-signed slope; "
                f"got k = {k} with factor range [{hmin:.6g}, {hmax:.6g}]")
        eps = 0.5 * (k - hmax)
        bound = 1.0 / (1.0 - eps / k)
        if cutoff is None:
            cutoff = build_cutoff(bound)
        elif cutoff.derivative_sup >= bound:
            raise InfeasibleError(
                f"supplied cutoff slope {cutoff.derivative_sup:.6g} >= required bound {bound:.6g}")
        return GConstruction(sys, k, eps, cutoff, (lo, hi), False, None, max_terms)
    # factor > k: mirrored branch through (psi^{-1}, -h o psi^{-1}, -k)
    if k >= 0:
        raise InfeasibleError(
            "factor > k needs k < 0 for a one-signed slope; "
            f"got k = {k} with factor range [{hmin:.6g}, {hmax:.6g}]")
    inner = build_g(mirrored_system(sys), -k, (-hi, -lo), cutoff=cutoff,
                    points=points, max_terms=max_terms)
    return GConstruction(sys, k, inner.eps, inner.cutoff, (lo, hi), True, inner,
                         max_terms)


def averaged_factor(sys: ConformalSystem, n: int):
    """The order-n averaged factor A_n(h) as an evaluable function."""

    def a_n(x):
        if np.ndim(x):
            pts = np.asarray(x)
            total = np.zeros(pts.shape[0])
            cur = pts
            for i in range(n):
                total += eval_factor(sys, cur)
                if i + 1 < n:
                    cur = step_points(sys, cur)
            return total / n
        y = sys.space.normalize(x)
        total = 0.0
        for _ in range(n):
            total += float(sys.factor(y))
            y = sys.forward(y)
        return total / n

    return a_n


@dataclass
class MuReport:
    n_used: int
    residual_max: float
    n_samples: int
    slope_margin: float

    def to_json(self):
        return {
            "n_used": self.n_used,
            "residual_max": self.residual_max,
            "n_samples": self.n_samples,
            "slope_margin": self.slope_margin,
        }


@dataclass
class MuConstruction:
    """sigma(x,t) = (x, g(x,t) + t k + f_n(x)) and mu = -k (t o sigma^{-1}).

    g is built for the averaged factor A_n(h); t |-> g + t k is strictly
    monotone (slope sign = sign k), so sigma inverts by scalar root finding.
    """

    sys: ConformalSystem
    k: float
    n_used: int
    f_n: object
    gcons: GConstruction
    report: MuReport = None
    _invert_tol: float = 1e-12

    def sigma_t(self, x, t) -> float:
        return self.gcons.g(x, t) + float(t) * self.k + float(self.f_n(x))

    def invert_sigma_t(self, x, s) -> float:
        """Solve g(x, t) + t k + f_n(x) = s for t (bisection, then Newton)."""
        target = float(s) - float(self.f_n(x))
        sign = self.gcons.slope_sign()

        def F(t):
            return sign * (self.gcons.g(x, t) + t * self.k - target)

        t0 = target / self.k
        t_cap = 0.5 * self.gcons.max_terms
        step = 1.0 + 0.5 * abs(t0)
        lo, hi = t0 - step, t0 + step
        while F(lo) > 0.0:
            if abs(lo) > t_cap:
                raise BudgetError("sigma inversion bracket exceeds the term budget")
            lo -= step
            step *= 2.0
        step = 1.0 + 0.5 * abs(t0)
        while F(hi) < 0.0:
            if abs(hi) > t_cap:
                raise BudgetError("sigma inversion bracket exceeds the term budget")
            hi += step
            step *= 2.0
        while hi - lo > 1e-3:
            mid = 0.5 * (lo + hi)
            if F(mid) <= 0.0:
                lo = mid
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        tol = self._invert_tol * max(1.0, abs(self.k))
        for _ in range(60):
            val = F(t)
            if abs(val) <= tol:
                break
            slope = sign * (self.gcons.dt(x, t) + self.k)
            if slope <= 0:
                break
            t_new = t - val / slope
            if not lo <= t_new <= hi:
                if val > 0.0:
                    hi = t
                else:
                    lo = t
                t_new = 0.5 * (lo + hi)
            t = t_new
        return t

    def mu(self, x, s) -> float:
        return -self.k * self.invert_sigma_t(x, s)

    def mu_cocycle_residual(self, samples: int = 1000, rng=None, t_scale: float = None) -> float:
        """max |mu(rho(x,t)) - mu(x,t) + k| over random samples."""
        rng = np.random.default_rng(rng)
        sys = self.sys
        lo, hi = self.gcons.t_window
        if t_scale is None:
            lo, hi = 0.5 * lo, 0.5 * hi
        else:
            lo, hi = -t_scale, t_scale
        worst = 0.0
        act = TorusAction(sys, self.k)
        for _ in range(samples):
            x = _random_point(sys, rng)
            t = rng.uniform(lo, hi)
            y, t2 = action_step(act, x, t)
            resid = abs(self.mu(y, t2) - self.mu(x, t) + self.k)
            worst = max(worst, resid)
        return worst


def _random_point(sys: ConformalSystem, rng):
    kind = sys.space.kind
    if kind == FINITE:
        return int(rng.integers(0, sys.space.size))
    if kind == "circle":
        return float(rng.uniform(0.0, 1.0))
    return np.array([rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)])


def build_mu(sys: ConformalSystem, k: float, t_window, n_scan: int = 64,
             points=None, samples: int = 512, rng=None) -> MuConstruction:
    """Find n with A_n(h) avoiding k on the correct side, build g and mu.

    Scans n = 1..n_scan for max A_n < k (k > 0) or min A_n > k (k < 0); if no
    order qualifies the size is reported NotFound (k may be non-admissible,
    or admissible on the side the ramp construction cannot reach).
    """
    from .birkhoff import birkhoff_table, transfer_potential

    k = float(k)
    if k == 0.0:
        raise NotFoundError("the cocycle -k t o sigma^{-1} degenerates at k = 0")
    pts = reference_points(sys) if points is None else sys.space.sample_points(points)
    table = birkhoff_table(sys, pts, n_scan)
    lo_arr = np.asarray(table.extrema_per_n["min_avg"], dtype=float)
    hi_arr = np.asarray(table.extrema_per_n["max_avg"], dtype=float)
    margin = 1e-12 * max(1.0, abs(k))  # float noise must not fake a gap
    n_used = None
    for n in range(1, n_scan + 1):
        if k > 0 and hi_arr[n - 1] < k - margin:
            n_used = n
            break
        if k < 0 and lo_arr[n - 1] > k + margin:
            n_used = n
            break
    if n_used is None:
        raise NotFoundError(
            f"no n <= {n_scan} with the averaged factor on the usable side of k = {k}")
    f_n = transfer_potential(sys, n_used)
    avg_sys = replace(sys, factor=averaged_factor(sys, n_used), factor_table=None,
                      generating_f=None, label=f"{sys.label} averaged(n={n_used})")
    gcons = build_g(avg_sys, k, t_window, points=points)
    mu = MuConstruction(sys, k, n_used, f_n, gcons)
    margin = gcons.slope_margin()
    residual = mu.mu_cocycle_residual(samples=samples, rng=rng)
    mu.report = MuReport(n_used, residual, samples, margin)
    return mu


def conjugation_residual(mu: MuConstruction, c: float, pts=None, ts=None) -> float:
    """Residual of the scaled conjugation identity.

    With sigma_c(x,t) = (x, g(x,t) + t c k + f_n(x)), the size-1 action is
    carried to the size-(ck) action of the original factor:
    sigma_c o rho_1 = rho_{(psi, ck - h)} o sigma_c.  Returns the max
    t-component mismatch over the sample (sigma_c is a diffeomorphism only
    where dt g + ck is one-signed, but the identity itself is algebraic).
    """
    sys = mu.sys
    g = mu.gcons
    if pts is None:
        pts = reference_points(sys, cap=256)
    if ts is None:
        lo, hi = g.t_window
        ts = np.linspace(0.5 * lo, 0.5 * hi, 101)
    pts = np.asarray(pts)
    ts = np.asarray(ts, dtype=float)
    ck = c * mu.k
    from .birkhoff import transfer_potential_values

    fn_here = transfer_potential_values(sys, pts, mu.n_used)
    nxt = step_points(sys, pts)
    fn_next = transfer_potential_values(sys, nxt, mu.n_used)
    h = eval_factor(sys, pts)
    lhs = g.g_grid(nxt, ts + 1.0) + (ts[:, None] + 1.0) * ck + fn_next[None, :]
    rhs = g.g_grid(pts, ts) + ts[:, None] * ck + fn_here[None, :] + ck - h[None, :]
    return float(np.max(np.abs(lhs - rhs)))
