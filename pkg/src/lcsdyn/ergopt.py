"""Min-max and max-min coboundary optimization.

The two quantities solved here are inf_f max_x (h + f o psi - f) and
sup_f min_x (h + f o psi - f).  On a finite bijection both are cycle-mean
extrema and are computed exactly; on grids the transfer potential gives a
rigorous (sampled) upper bound and a snapped-dynamics relaxation gives a
heuristic value.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    FINITE,
    ConformalSystem,
    ValidationError,
    eval_factor,
    negated_system,
    step_points,
)


@dataclass
class CycleDecomposition:
    """Disjoint cycles of a finite bijection with their factor means."""

    cycles: list  # (state tuple, mean)
    max_mean: object
    min_mean: object


@dataclass
class OptimizationResult:
    value: object
    potential: object  # evaluable
    potential_table: object  # per-state / per-node values, or None
    certificate: object  # max_x(h + f o psi - f) - value over the sample
    method: str

    def to_json(self):
        return {
            "value": _num(self.value),
            "certificate": _num(self.certificate),
            "method": self.method,
        }


def _num(v):
    return str(v) if isinstance(v, Fraction) else float(v)


def _require_finite(sys: ConformalSystem):
    if sys.space.kind != FINITE or sys.perm_table is None:
        raise ValidationError("this operation needs a finite bijection")


def cycle_mean_extrema(sys: ConformalSystem) -> CycleDecomposition:
    """Cycle decomposition of the permutation with exact means when possible."""
    _require_finite(sys)
    tbl = sys.perm_table
    hv = sys.factor_table
    m = len(tbl)
    seen = [False] * m
    cycles = []
    for start in range(m):
        if seen[start]:
            continue
        cyc = []
        x = start
        while not seen[x]:
            seen[x] = True
            cyc.append(x)
            x = tbl[x]
        total = sum(hv[i] for i in cyc)
        mean = total / len(cyc) if isinstance(total, Fraction) else total / float(len(cyc))
        cycles.append((tuple(cyc), mean))
    means = [c[1] for c in cycles]
    return CycleDecomposition(cycles, max(means), min(means))


def _exact_finite_minmax(sys: ConformalSystem) -> OptimizationResult:
    dec = cycle_mean_extrema(sys)
    tbl = sys.perm_table
    hv = sys.factor_table
    m = len(tbl)
    M = dec.max_mean
    f = [None] * m
    for cyc, _mean in dec.cycles:
        f[cyc[0]] = hv[cyc[0]] * 0  # zero of the right arithmetic type
        for j in range(len(cyc) - 1):
            # equality h + f o psi - f = M along every non-closing edge
            f[cyc[j + 1]] = f[cyc[j]] - (hv[cyc[j]] - M)
    fmin = min(f)
    f = [v - fmin for v in f]  # potentials normalized to min f = 0
    resid = max(hv[i] + f[tbl[i]] - f[i] for i in range(m))
    table = list(f)
    return OptimizationResult(
        value=M,
        potential=lambda x: table[int(x)],
        potential_table=table,
        certificate=resid - M,
        method="exact_finite",
    )


def _birkhoff_fn_minmax(sys: ConformalSystem, n: int, points) -> OptimizationResult:
    from . import birkhoff

    pts = sys.space.sample_points(points)
    f_n = birkhoff.transfer_potential(sys, n)
    f_here = birkhoff.transfer_potential_values(sys, pts, n)
    f_next = birkhoff.transfer_potential_values(sys, step_points(sys, pts), n)
    edge = eval_factor(sys, pts) + f_next - f_here
    value = float(edge.max())
    return OptimizationResult(
        value=value,
        potential=f_n,
        potential_table=f_here - f_here.min(),
        certificate=float(edge.max() - value),
        method=f"birkhoff_fn(n={n})",
    )


def _snap_indices(sys: ConformalSystem, pts) -> np.ndarray:
    """Image of each grid node snapped to the nearest grid node."""
    img = step_points(sys, pts)
    if pts.ndim == 1:
        r = pts.shape[0]
        return np.round(img * r).astype(np.int64) % r
    side = int(round(np.sqrt(pts.shape[0])))
    ij = np.round(img * side).astype(np.int64) % side
    return ij[:, 0] * side + ij[:, 1]


def _grid_descent_minmax(sys: ConformalSystem, points, lam_iters: int = 60,
                         max_sweeps: int | None = None) -> OptimizationResult:
    """Heuristic: local relaxation on the grid with snapped images.

    Feasibility of a level lam (does some f give h + f o snap - f <= lam
    everywhere?) is decided by sweeping f[x] <- max(f[x], f[snap x] + h - lam)
    to a fixed point; the least feasible lam is located by bisection.
    Snapping perturbs the dynamics, hence the heuristic label.
    """
    pts = sys.space.sample_points(points)
    h = eval_factor(sys, pts)
    nxt = _snap_indices(sys, pts)
    P = len(pts)
    sweeps = max_sweeps or (P + 5)

    def relax(lam):
        f = np.zeros(P)
        bound = float(np.abs(h - lam).sum()) + 1.0
        for _ in range(sweeps):
            cand = f[nxt] + h - lam
            newf = np.maximum(f, cand)
            if np.array_equal(newf, f):
                return f
            f = newf
            if f.max() > bound:
                return None
        return None

    lo, hi = float(h.min()), float(h.max())
    f_best = relax(hi)
    for _ in range(lam_iters):
        mid = 0.5 * (lo + hi)
        f = relax(mid)
        if f is None:
            lo = mid
        else:
            hi, f_best = mid, f
    f = f_best - f_best.min()
    edges = h + f[nxt] - f
    value = hi
    return OptimizationResult(
        value=value,
        potential=None,
        potential_table=f,
        certificate=abs(float(edges.max() - value)),
        method="grid_descent (snapped dynamics, heuristic)",
    )


def minmax_coboundary(sys: ConformalSystem, method: str = "exact_finite",
                      n: int | None = None, points=None) -> OptimizationResult:
    """inf over potentials f of max_x (h + f o psi - f), by the chosen method."""
    if method == "exact_finite":
        _require_finite(sys)
        return _exact_finite_minmax(sys)
    if method == "birkhoff_fn":
        if sys.space.kind == FINITE:
            raise ValidationError("birkhoff_fn expects a grid; use exact_finite")
        return _birkhoff_fn_minmax(sys, n or 64, points)
    if method == "grid_descent":
        if sys.space.kind == FINITE:
            raise ValidationError("grid_descent expects a grid; use exact_finite")
        return _grid_descent_minmax(sys, points)
    raise ValidationError(f"unknown method {method!r}")


def maxmin_coboundary(sys: ConformalSystem, method: str = "exact_finite",
                      n: int | None = None, points=None) -> OptimizationResult:
    """sup over potentials f of min_x (h + f o psi - f) = -minmax(-h)."""
    res = minmax_coboundary(negated_system(sys), method=method, n=n, points=points)
    if res.potential_table is not None:
        if isinstance(res.potential_table, np.ndarray):
            table = -res.potential_table
            table = table - table.min()
        else:
            table = [-v for v in res.potential_table]
            tmin = min(table)
            table = [v - tmin for v in table]
    else:
        table = None
    if isinstance(table, list):
        pot = lambda x: table[int(x)]  # noqa: E731
    elif res.potential is not None:
        inner = res.potential
        pot = lambda x: -inner(x)  # noqa: E731
    else:
        pot = None
    return OptimizationResult(
        value=-res.value,
        potential=pot,
        potential_table=table,
        certificate=res.certificate,
        method=res.method,
    )


def is_strict_finite(sys: ConformalSystem):
    """Whether h is a coboundary f - f o psi; returns (flag, f table or None).

    Holds exactly when every cycle mean of h vanishes.  f is rebuilt by
    accumulating h backwards along each cycle (f o psi = f - h), fixed up to
    one additive constant per cycle and then normalized to min f = 0.
    """
    _require_finite(sys)
    dec = cycle_mean_extrema(sys)
    exact = sys.exact
    for _cyc, mean in dec.cycles:
        if exact:
            if mean != 0:
                return False, None
        elif abs(float(mean)) > 1e-12:
            return False, None
    m = len(sys.perm_table)
    hv = sys.factor_table
    tbl = sys.perm_table
    f = [None] * m
    for cyc, _mean in dec.cycles:
        f[cyc[0]] = hv[cyc[0]] * 0
        for j in range(len(cyc) - 1):
            f[cyc[j + 1]] = f[cyc[j]] - hv[cyc[j]]
    fmin = min(f)
    return True, [v - fmin for v in f]
