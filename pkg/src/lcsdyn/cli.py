"""Command-line frontend: config ingestion, pipeline orchestration, reports.

One JSON config (plus flag overrides) drives one command; results land in an
output directory as report.json and CSV files.  Identical config + seed give
byte-identical report payloads, and finished payloads are cached under a hash
of the canonicalized config.

Exit codes: 0 success, 2 validation error, 3 budget/NotFound, 4 an
inconclusive verdict under --strict-verdict.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys as _sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__, birkhoff, elastic, ergopt, torus
from .core import (
    BudgetError,
    DomainError,
    ValidationError,
    cat_map_system,
    finite_permutation_system,
    rotation_system,
    strict_rotation_system,
)

COMMANDS = ("analyze", "admissible", "probe", "optimize", "construct",
            "elasticity", "rank")

MAX_TABLE_CSV_ROWS = 200_000


@dataclass
class RunConfig:
    command: str
    system: dict | None = None
    n_max: int = 200
    grid: int | None = None
    k: float | None = None
    k_range: tuple | None = None
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: str = "out"
    strict_verdict: bool = False
    cache_dir: str | None = None

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("cache_dir")
        d.pop("strict_verdict")
        return d

    def cache_key(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def system_from_config(decl: dict, tolerances: dict | None = None):
    """Build a system from the JSON declaration {"space":, "map":, "factor":}."""
    if not isinstance(decl, dict):
        raise ValidationError("system declaration must be an object")
    for key in ("space", "map", "factor"):
        if key not in decl:
            raise ValidationError(f"system declaration misses {key!r}")
    space = decl["space"]
    mp = decl["map"]
    factor = decl["factor"]
    kind = space.get("kind")
    grid_resolution = int(space.get("grid_resolution", 256))
    tol_inverse = float((tolerances or {}).get("tol_inverse", 1e-9))
    mtype = mp.get("type")
    if kind == "circle":
        if mtype != "rotation":
            raise ValidationError(f"circle supports map type 'rotation', got {mtype!r}")
        angle = mp.get("angle", 0.0)
        if isinstance(factor, dict) and factor.get("type") == "coboundary":
            return strict_rotation_system(angle, _factor_spec(factor["f"]),
                                          grid_resolution=grid_resolution,
                                          tol_inverse=tol_inverse)
        return rotation_system(angle, _factor_spec(factor),
                               grid_resolution=grid_resolution,
                               tol_inverse=tol_inverse)
    if kind == "torus2":
        if mtype not in ("torus_linear", "cat"):
            raise ValidationError(f"torus2 supports map type 'torus_linear', got {mtype!r}")
        return cat_map_system(_factor_spec(factor),
                              matrix=mp.get("matrix", ((2, 1), (1, 1))),
                              grid_resolution=grid_resolution,
                              tol_inverse=tol_inverse)
    if kind == "finite":
        if mtype != "permutation":
            raise ValidationError(f"finite supports map type 'permutation', got {mtype!r}")
        values = factor["values"] if isinstance(factor, dict) else factor
        return finite_permutation_system(mp["table"], values)
    raise ValidationError(f"unknown space kind {kind!r}")


def _factor_spec(spec):
    if isinstance(spec, dict) and spec.get("type") == "coboundary":
        raise ValidationError("nested coboundary factors are not supported")
    return spec


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def _diag(kind: str, message: str):
    print(json.dumps({"error": kind, "message": message}), file=_sys.stderr)


# --------------------------------------------------------------------------
# command payloads
# --------------------------------------------------------------------------


def _points_spec(config: RunConfig):
    return config.grid


def _k_values(config: RunConfig):
    ks = []
    if config.k is not None:
        ks.append(float(config.k))
    if config.k_range is not None:
        a, b, step = (float(v) for v in config.k_range)
        if step <= 0:
            raise ValidationError("k-range step must be positive")
        ks.extend(np.arange(a, b + 0.5 * step, step).tolist())
    return ks


def _cmd_analyze(config, sys_, out_dir, warnings):
    table = birkhoff.birkhoff_table(sys_, _points_spec(config), config.n_max)
    est = birkhoff.limit_estimates(table)
    if not est.exact:
        warnings.append("limit estimate on a sampled grid is a lower/upper "
                        "approximation, not a certified bound")
    if est.error_bound == "heuristic":
        warnings.append("no telescoping bound available: error_bound is heuristic")
    birkhoff.extrema_to_csv(table, os.path.join(out_dir, "envelopes.csv"))
    files = ["envelopes.csv"]
    n_rows = len(table.points) * table.n_max
    if n_rows <= MAX_TABLE_CSV_ROWS:
        birkhoff.table_to_csv(table, os.path.join(out_dir, "birkhoff.csv"))
        files.append("birkhoff.csv")
    else:
        warnings.append(f"full table CSV skipped ({n_rows} rows); envelopes.csv kept")
    return {
        "limit_estimate": est.to_json(),
        "table_summary": {
            "points": len(table.points),
            "n_max": table.n_max,
            "exact": table.exact,
        },
        "csv_files": files,
    }


def _cmd_admissible(config, sys_, out_dir, warnings):
    table = birkhoff.birkhoff_table(sys_, _points_spec(config), config.n_max)
    est = birkhoff.limit_estimates(table)
    adm = birkhoff.admissible_set(est)
    if not est.exact:
        warnings.append("gap endpoints are grid estimates; classifications near "
                        "the boundary are not certified")
    classifications = [{"k": k, "verdict": adm.classify(k)} for k in _k_values(config)]
    birkhoff.extrema_to_csv(table, os.path.join(out_dir, "envelopes.csv"))
    return {
        "admissible_set": adm.to_json(),
        "limit_estimate": est.to_json(),
        "classifications": classifications,
    }


def _cmd_probe(config, sys_, out_dir, warnings):
    ks = _k_values(config)
    if not ks:
        raise ValidationError("probe needs --k or --k-range")
    starts = config.params.get("starts")
    reports = []
    for k in ks:
        act = torus.TorusAction(sys_, k)
        rep = torus.properness_probe(act, n_max=config.n_max, starts=starts)
        reports.append(rep)
    if any(r.heuristic for r in reports):
        warnings.append("probe verdicts on continuous systems are evidence, not proof")
    if len(ks) == 1 and config.k is not None:
        _write_probe_trace(sys_, reports[0], config, out_dir)
    _write_phase_table(reports, os.path.join(out_dir, "phase.csv"))
    payload = {
        "reports": [r.to_json() for r in reports],
        "phase_table": [[r.k, r.verdict] for r in reports],
    }
    inconclusive = any(r.verdict == torus.VERDICT_INCONCLUSIVE for r in reports)
    return payload, inconclusive


def _write_probe_trace(sys_, report, config, out_dir):
    import csv as _csv

    act = torus.TorusAction(sys_, report.k)
    start = report.witness.start if report.witness else sys_.space.sample_points(1)[0]
    x, t = start, 0.0
    with open(os.path.join(out_dir, "trace.csv"), "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["n", "x", "t"])
        for n in range(min(config.n_max, 2000) + 1):
            xs = ":".join(repr(float(c)) for c in np.atleast_1d(np.asarray(x, dtype=float)))
            w.writerow([n, xs, repr(float(t))])
            x, t = torus.action_step(act, x, t)


def _write_phase_table(reports, path):
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["k", "verdict", "escape_bound"])
        for r in reports:
            w.writerow([repr(float(r.k)), r.verdict,
                        "" if r.escape_bound is None else r.escape_bound])


def _cmd_optimize(config, sys_, out_dir, warnings):
    method = config.params.get("method")
    if method is None:
        method = "exact_finite" if sys_.space.kind == "finite" else "birkhoff_fn"
    n = config.params.get("n", min(config.n_max, 64))
    lo = ergopt.maxmin_coboundary(sys_, method=method, n=n, points=_points_spec(config))
    hi = ergopt.minmax_coboundary(sys_, method=method, n=n, points=_points_spec(config))
    if method != "exact_finite":
        warnings.append(f"method {method!r} yields sampled bounds, not exact optima")
    _write_potential_csv(sys_, hi, os.path.join(out_dir, "potential.csv"))
    return {
        "minmax": hi.to_json(),
        "maxmin": lo.to_json(),
        "gap": [_jsonable(lo.value), _jsonable(hi.value)],
    }


def _write_potential_csv(sys_, result, path):
    import csv as _csv

    if result.potential_table is None:
        return
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["index", "f"])
        for i, v in enumerate(result.potential_table):
            w.writerow([i, str(v) if isinstance(v, Fraction) else repr(float(v))])


def _cmd_construct(config, sys_, out_dir, warnings):
    if config.k is None:
        raise ValidationError("construct needs --k")
    t_window = tuple(config.params.get("t_window", (-10.0, 10.0)))
    n_scan = int(config.params.get("n_scan", 64))
    mu = torus.build_mu(sys_, config.k, t_window, n_scan=n_scan,
                        points=_points_spec(config), rng=config.seed)
    g = mu.gcons
    warnings.append("construction residuals are sampled; smallness is evidence, "
                    "not a certified bound")
    return {
        "n_used": mu.n_used,
        "cutoff": {
            "mollifier_width": g.cutoff.mollifier_width,
            "derivative_sup": g.cutoff.derivative_sup,
        },
        "g_residual": g.functional_residual(),
        "slope_margin": mu.report.slope_margin,
        "mu_residual": mu.report.residual_max,
        "mirrored": g.mirrored,
    }


def _cmd_elasticity(config, sys_, out_dir, warnings):
    gap_resolution = float(config.tolerances.get("gap_resolution", 1e-3))
    profile_csv = config.params.get("profile_csv")
    if profile_csv:
        profile = elastic.profile_from_csv(profile_csv)
    else:
        if sys_ is None:
            raise ValidationError("elasticity needs a system or params.profile_csv")
        if config.k is None:
            raise ValidationError("elasticity from a system needs --k")
        t_window = tuple(config.params.get("t_window", (-10.0, 10.0)))
        profile = elastic.mapping_torus_profile(
            sys_, config.k, t_window,
            n_scan=int(config.params.get("n_scan", 64)),
            points=_points_spec(config),
            strict_mu=bool(config.params.get("strict_mu", False)),
            rng=config.seed,
        )
    es = elastic.elasticity_from_profile(profile, gap_resolution=gap_resolution)
    if not es.equality:
        warnings.append("form may vanish: reported complement is a superset of "
                        "the true elasticity set")
    return {
        "elasticity": es.to_json(),
        "profile_summary": {
            "samples": int(profile.samples.size),
            "min_u": float(profile.samples.min()),
            "max_u": float(profile.samples.max()),
            "first_kind": elastic.first_kind_test(profile),
        },
    }


def _cmd_rank(config, sys_, out_dir, warnings):
    gens = config.params.get("generators")
    if gens is None:
        raise ValidationError("rank needs params.generators")
    group = elastic.PeriodGroup.parse(gens)
    return {
        "rank": elastic.lcs_rank(group),
        "generators": [[str(a), str(b)] for a, b in group.generators],
    }


_HANDLERS = {
    "analyze": _cmd_analyze,
    "admissible": _cmd_admissible,
    "probe": _cmd_probe,
    "optimize": _cmd_optimize,
    "construct": _cmd_construct,
    "elasticity": _cmd_elasticity,
    "rank": _cmd_rank,
}

_NEEDS_SYSTEM = {"analyze", "admissible", "probe", "optimize", "construct"}


# --------------------------------------------------------------------------
# cache
# --------------------------------------------------------------------------


def cache_path(config: RunConfig) -> str:
    base = config.cache_dir or os.environ.get("CACHE_DIR") or os.path.join(
        config.out, ".cache")
    return os.path.join(base, config.cache_key() + ".json")


def cache_lookup(config: RunConfig, warnings: list):
    """Stored payload for this config hash, or None (corrupt entries warn)."""
    path = cache_path(config)
    if not os.path.exists(path):
        return None
    try:
        with open(path) as fh:
            stored = json.load(fh)
        return {"payload": stored["payload"], "warnings": stored["warnings"]}
    except (json.JSONDecodeError, KeyError, OSError) as exc:
        warnings.append(f"ignoring corrupt cache entry {os.path.basename(path)}: {exc}")
        return None


def cache_store(config: RunConfig, payload, warnings):
    path = cache_path(config)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"payload": payload, "warnings": warnings}, fh, sort_keys=True)


# --------------------------------------------------------------------------
# runner
# --------------------------------------------------------------------------


def run(config: RunConfig):
    """Execute one command; returns (report dict, exit code)."""
    warnings: list = []
    try:
        if config.command not in COMMANDS:
            raise ValidationError(f"unknown command {config.command!r}")
        os.makedirs(config.out, exist_ok=True)
        cached = cache_lookup(config, warnings)
        inconclusive = False
        if cached is not None:
            payload = cached["payload"]
            warnings = cached["warnings"] + [w for w in warnings if w not in cached["warnings"]]
            cache_hit = True
            if config.command == "probe":
                inconclusive = any(r["verdict"] == torus.VERDICT_INCONCLUSIVE
                                   for r in payload.get("reports", []))
        else:
            sys_ = system_from_config(config.system, config.tolerances) \
                if config.command in _NEEDS_SYSTEM \
                or (config.command == "elasticity" and config.system) else None
            result = _HANDLERS[config.command](config, sys_, config.out, warnings)
            if isinstance(result, tuple):
                payload, inconclusive = result
            else:
                payload = result
            payload = _jsonable(payload)
            cache_store(config, payload, warnings)
            cache_hit = False
    except (ValidationError, DomainError, KeyError, TypeError) as exc:
        _diag(type(exc).__name__, str(exc))
        return {"error": str(exc)}, 2
    except (BudgetError, torus.NotFoundError, torus.InfeasibleError) as exc:
        _diag(type(exc).__name__, str(exc))
        return {"error": str(exc)}, 3

    report = {
        "config": _jsonable(asdict(config)),
        "payload": payload,
        "provenance": {
            "version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "seed": config.seed,
            "cache_hit": cache_hit,
        },
        "warnings": warnings,
    }
    with open(os.path.join(config.out, "report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    code = 4 if (inconclusive and config.strict_verdict) else 0
    return report, code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lcsdyn",
        description="Birkhoff averages, admissible mapping-torus sizes, "
                    "coboundary optima and elasticity sets",
    )
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--command", choices=COMMANDS, help="command to run")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="RNG seed (fixed seed => reproducible payload)")
    p.add_argument("--n-max", type=int, dest="n_max", help="orbit length budget")
    p.add_argument("--grid", type=int, help="sample grid size per dimension")
    p.add_argument("--k", type=float, help="mapping-torus size")
    p.add_argument("--k-range", dest="k_range", help="size sweep a:b:step")
    p.add_argument("--strict-verdict", action="store_true", dest="strict_verdict",
                   help="exit 4 when a probe verdict is Inconclusive")
    return p


def config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    command = args.command or data.get("command")
    if not command:
        raise ValidationError("no command given (flag --command or config)")
    k_range = data.get("k_range")
    if args.k_range:
        parts = args.k_range.split(":")
        if len(parts) != 3:
            raise ValidationError("--k-range expects a:b:step")
        try:
            k_range = [float(v) for v in parts]
        except ValueError:
            raise ValidationError(f"--k-range has non-numeric parts: {args.k_range!r}") from None
    return RunConfig(
        command=command,
        system=data.get("system"),
        n_max=args.n_max if args.n_max is not None else int(data.get("n_max", 200)),
        grid=args.grid if args.grid is not None else data.get("grid"),
        k=args.k if args.k is not None else data.get("k"),
        k_range=tuple(k_range) if k_range else None,
        seed=args.seed if args.seed is not None else int(data.get("seed", 0)),
        tolerances=data.get("tolerances", {}),
        params=data.get("params", {}),
        out=args.out or data.get("out", "out"),
        strict_verdict=bool(args.strict_verdict or data.get("strict_verdict", False)),
        cache_dir=data.get("cache_dir"),
    )


def _normalize_argv(argv):
    """Glue values onto --k-range/--k so negative numbers survive argparse."""
    if argv is None:
        return None
    out = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in ("--k-range", "--k") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    import sys as _s

    argv = _normalize_argv(argv if argv is not None else _s.argv[1:])
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        _diag(type(exc).__name__, str(exc))
        return 2
    report, code = run(config)
    if "payload" in report:
        print(json.dumps(report["payload"], sort_keys=True))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
