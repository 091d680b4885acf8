import json
import os

import pytest

from lcsdyn import cli

FINITE_SYSTEM = {
    "space": {"kind": "finite", "size": 3},
    "map": {"type": "permutation", "table": [1, 0, 2]},
    "factor": [0, 4, 1],
}

CONST_SYSTEM = {
    "space": {"kind": "circle", "grid_resolution": 128},
    "map": {"type": "rotation", "angle": 0.5},
    "factor": {"type": "constant", "value": 0.2},
}

STRICT_SYSTEM = {
    "space": {"kind": "circle", "grid_resolution": 256},
    "map": {"type": "rotation", "angle": "golden"},
    "factor": {"type": "coboundary", "f": {"type": "trig", "sin": [[1, 1.0]]}},
}


def write_config(tmp_path, name, **data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(args):
    return cli.main(args)


def load_report(out_dir):
    with open(os.path.join(out_dir, "report.json")) as fh:
        return json.load(fh)


def payload_bytes(report):
    return json.dumps(report["payload"], sort_keys=True).encode()


def test_admissible_constant(tmp_path):
    cfg = write_config(tmp_path, "c.json", command="admissible",
                       system=CONST_SYSTEM, n_max=30, k_range=[0.0, 1.0, 0.5])
    out = str(tmp_path / "run")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    rep = load_report(out)
    adm = rep["payload"]["admissible_set"]
    assert adm["gap"][0] == pytest.approx(0.2, abs=1e-9)
    assert adm["gap"][1] == pytest.approx(0.2, abs=1e-9)
    assert adm["excludes_zero"] is True
    verdicts = {c["k"]: c["verdict"] for c in rep["payload"]["classifications"]}
    assert verdicts[0.0] == "excluded_zero"
    assert verdicts[1.0] == "admissible"


def test_admissible_finite_gap(tmp_path):
    cfg = write_config(tmp_path, "f.json", command="admissible",
                       system=FINITE_SYSTEM, n_max=6)
    out = str(tmp_path / "run")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    rep = load_report(out)
    adm = rep["payload"]["admissible_set"]
    assert adm["gap"] == ["1", "2"]
    assert adm["rays"] == [["-inf", "1"], ["2", "+inf"]]
    assert adm["exact"] is True


def test_cross_command_gap_consistency(tmp_path):
    adm_cfg = write_config(tmp_path, "a.json", command="admissible",
                           system=FINITE_SYSTEM, n_max=6)
    opt_cfg = write_config(tmp_path, "o.json", command="optimize",
                           system=FINITE_SYSTEM, n_max=6)
    out_a, out_o = str(tmp_path / "a"), str(tmp_path / "o")
    assert run_cli(["--config", adm_cfg, "--out", out_a]) == 0
    assert run_cli(["--config", opt_cfg, "--out", out_o]) == 0
    gap_a = load_report(out_a)["payload"]["admissible_set"]["gap"]
    gap_o = load_report(out_o)["payload"]["gap"]
    assert gap_a == gap_o == ["1", "2"]


def test_rank_command(tmp_path):
    cfg = write_config(tmp_path, "r.json", command="rank",
                       params={"generators": ["1", "s"]})
    out = str(tmp_path / "run")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    assert load_report(out)["payload"]["rank"] == 2


def test_probe_files_and_phase(tmp_path):
    cfg = write_config(tmp_path, "p.json", command="probe", system=STRICT_SYSTEM,
                       n_max=500, k=0.5)
    out = str(tmp_path / "run")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    rep = load_report(out)
    assert rep["payload"]["reports"][0]["verdict"] == "EscapeCertified"
    assert os.path.exists(os.path.join(out, "phase.csv"))
    assert os.path.exists(os.path.join(out, "trace.csv"))
    assert any("evidence" in w for w in rep["warnings"])


def test_determinism_byte_identical(tmp_path):
    # two fresh runs (separate caches) must agree byte for byte on payload
    reports = []
    for tag in ("x", "y"):
        cfg = write_config(tmp_path, f"{tag}.json", command="analyze",
                           system=STRICT_SYSTEM, n_max=100, seed=7)
        out = str(tmp_path / tag)
        assert run_cli(["--config", cfg, "--out", out]) == 0
        reports.append(load_report(out))
    assert payload_bytes(reports[0]) == payload_bytes(reports[1])
    assert reports[0]["provenance"]["cache_hit"] is False


def test_cache_hit_and_miss(tmp_path):
    cfg = write_config(tmp_path, "c.json", command="admissible",
                       system=FINITE_SYSTEM, n_max=6)
    out = str(tmp_path / "run")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    first = load_report(out)
    assert run_cli(["--config", cfg, "--out", out]) == 0
    second = load_report(out)
    assert second["provenance"]["cache_hit"] is True
    assert payload_bytes(first) == payload_bytes(second)
    # changed n_max is a different key
    cfg2 = write_config(tmp_path, "c2.json", command="admissible",
                        system=FINITE_SYSTEM, n_max=7)
    assert run_cli(["--config", cfg2, "--out", out]) == 0
    assert load_report(out)["provenance"]["cache_hit"] is False


def test_cache_corrupt_entry(tmp_path):
    cfg = write_config(tmp_path, "c.json", command="rank",
                       params={"generators": ["1"]})
    out = str(tmp_path / "run")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    cache_dir = os.path.join(out, ".cache")
    entry = os.path.join(cache_dir, os.listdir(cache_dir)[0])
    with open(entry, "w") as fh:
        fh.write("{ not json")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    rep = load_report(out)
    assert rep["provenance"]["cache_hit"] is False
    assert any("corrupt" in w for w in rep["warnings"])
    assert rep["payload"]["rank"] == 1


def test_cache_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CACHE_DIR", str(tmp_path / "shared_cache"))
    cfg = write_config(tmp_path, "c.json", command="rank",
                       params={"generators": ["s"]})
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "r1")]) == 0
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "r2")]) == 0
    rep = load_report(str(tmp_path / "r2"))
    assert rep["provenance"]["cache_hit"] is True
    assert os.path.isdir(tmp_path / "shared_cache")


def test_validation_exit_code(tmp_path):
    cfg = write_config(tmp_path, "bad.json", command="competition")
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "r")]) == 2
    # probe without k
    cfg2 = write_config(tmp_path, "p.json", command="probe", system=CONST_SYSTEM)
    assert run_cli(["--config", cfg2, "--out", str(tmp_path / "r2")]) == 2
    # bad permutation
    bad_sys = dict(FINITE_SYSTEM, map={"type": "permutation", "table": [0, 0, 1]})
    cfg3 = write_config(tmp_path, "b.json", command="admissible", system=bad_sys)
    assert run_cli(["--config", cfg3, "--out", str(tmp_path / "r3")]) == 2


def test_not_found_exit_code(tmp_path):
    cfg = write_config(tmp_path, "nf.json", command="construct",
                       system=CONST_SYSTEM, k=0.2)
    assert run_cli(["--config", cfg, "--out", str(tmp_path / "r")]) == 3


def test_strict_verdict_exit_code(tmp_path):
    identity_sys = {
        "space": {"kind": "circle", "grid_resolution": 64},
        "map": {"type": "rotation", "angle": 0.0},
        "factor": {"type": "trig", "cos": [[1, 1.0]]},
    }
    cfg = write_config(tmp_path, "inc.json", command="probe", system=identity_sys,
                       n_max=50, k=0.3, params={"starts": [0.0, 0.3]})
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    out2 = str(tmp_path / "r2")
    assert run_cli(["--config", cfg, "--out", out2, "--strict-verdict"]) == 4


def test_construct_command(tmp_path):
    cfg = write_config(tmp_path, "g.json", command="construct", system=CONST_SYSTEM,
                       k=1.0, params={"t_window": [-8, 8]})
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    pay = load_report(out)["payload"]
    assert pay["g_residual"] <= 1e-9
    assert pay["mu_residual"] <= 1e-7
    assert pay["slope_margin"] > 0


def test_elasticity_command_from_system(tmp_path):
    cfg = write_config(tmp_path, "e.json", command="elasticity", system=CONST_SYSTEM,
                       k=1.0)
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    pay = load_report(out)["payload"]
    assert pay["elasticity"]["equality"] is True
    assert pay["elasticity"]["forbidden"][0][0] == pytest.approx(0.0, abs=1e-9)


def test_elasticity_command_from_csv(tmp_path):
    prof = tmp_path / "prof.csv"
    prof.write_text("u\n-1.0\n-1.0\n")
    cfg = write_config(tmp_path, "pe.json", command="elasticity",
                       params={"profile_csv": str(prof)})
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    pay = load_report(out)["payload"]
    assert pay["elasticity"]["forbidden"] == [[0.0, 0.0]]
    assert pay["profile_summary"]["first_kind"] is True


def test_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, "c.json", command="admissible",
                       system=FINITE_SYSTEM, n_max=6, k=5.0)
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out, "--k", "1.5"]) == 0
    rep = load_report(out)
    assert rep["payload"]["classifications"][0]["k"] == 1.5
    assert rep["payload"]["classifications"][0]["verdict"] == "not_admissible"


def test_torus2_system_config(tmp_path):
    sys_decl = {
        "space": {"kind": "torus2", "grid_resolution": 8},
        "map": {"type": "torus_linear", "matrix": [[2, 1], [1, 1]]},
        "factor": {"type": "trig2", "terms": [[1, 0, 0.4, 0.0]]},
    }
    cfg = write_config(tmp_path, "t.json", command="analyze", system=sys_decl,
                       n_max=20)
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out]) == 0
    rep = load_report(out)
    assert rep["payload"]["table_summary"]["points"] == 64


def test_k_range_flag(tmp_path):
    cfg = write_config(tmp_path, "c.json", command="admissible",
                       system=FINITE_SYSTEM, n_max=6)
    out = str(tmp_path / "r")
    assert run_cli(["--config", cfg, "--out", out, "--k-range", "0:3:1"]) == 0
    rep = load_report(out)
    ks = [c["k"] for c in rep["payload"]["classifications"]]
    assert ks == [0.0, 1.0, 2.0, 3.0]
    assert run_cli(["--config", cfg, "--out", out, "--k-range", "0:3"]) == 2
    # negative range starts survive argument parsing
    assert run_cli(["--config", cfg, "--out", out, "--k-range", "-1:1:1"]) == 0
    rep = load_report(out)
    assert [c["k"] for c in rep["payload"]["classifications"]] == [-1.0, 0.0, 1.0]
