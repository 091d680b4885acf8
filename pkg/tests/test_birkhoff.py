import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcsdyn import (
    action_power,
    admissible_set,
    birkhoff_table,
    coboundary_residual,
    finite_permutation_system,
    limit_estimates,
    rotation_system,
    transfer_potential,
)
from lcsdyn.birkhoff import (
    coboundary_residual_curve,
    extrema_to_csv,
    gauge_shifted_system,
    table_to_csv,
)
from lcsdyn.core import GOLDEN_ANGLE
from lcsdyn.torus import TorusAction

from conftest import random_permutation_system

# A_10 of cos(2 pi x) at x = 0 under the golden rotation, frozen from a
# 50-digit direct resummation.
A10_GOLDEN_COS = 0.011200192768592274


def test_full_cycle_average(cycle3):
    t = birkhoff_table(cycle3, n_max=3)
    assert t.averages[2][0] == Fraction(2)
    assert t.exact


def test_first_average_is_factor(cycle3, golden_cos):
    t = birkhoff_table(cycle3, n_max=1)
    assert [t.averages[0][p] for p in range(3)] == [1, 2, 3]
    tg = birkhoff_table(golden_cos, 32, n_max=1)
    h = [golden_cos.factor(float(p)) for p in tg.points]
    assert tg.averages[0] == pytest.approx(h)


def test_golden_rotation_a10_oracle():
    sys = rotation_system("golden", {"type": "trig", "cos": [[1, 1.0]]})
    t = birkhoff_table(sys, [0.0], n_max=10)
    # independent re-summation at higher precision (50 digits)
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    a = (mp.sqrt(5) - 1) / 2
    x, s = mp.mpf(0), mp.mpf(0)
    for _ in range(10):
        s += mp.cos(2 * mp.pi * x)
        x = (x + a) % 1
    assert abs(t.averages[9][0] - float(s / 10)) < 1e-12
    assert abs(t.averages[9][0] - A10_GOLDEN_COS) < 1e-12


def test_transfer_potential_trivial(cycle3):
    f1 = transfer_potential(cycle3, 1)
    assert f1(0) == 0 and f1(2) == 0


def test_transfer_potential_n2_identity(golden_cos):
    # f_2 = h/2, so h + f_2 o psi - f_2 = (h + h o psi)/2 = A_2(h)
    f2 = transfer_potential(golden_cos, 2)
    for x in (0.0, 0.31, 0.77):
        assert f2(x) == pytest.approx(golden_cos.factor(x) / 2)
        lhs = golden_cos.factor(x) + f2(golden_cos.forward(x)) - f2(x)
        a2 = (golden_cos.factor(x) + golden_cos.factor(golden_cos.forward(x))) / 2
        assert lhs == pytest.approx(a2, abs=1e-14)


def test_transfer_potential_cycle_exact(cycle3):
    f3 = transfer_potential(cycle3, 3)
    assert [f3(i) for i in range(3)] == [Fraction(4, 3), Fraction(7, 3), Fraction(7, 3)]
    assert coboundary_residual(cycle3, 3) == 0


def test_coboundary_residual_finite_exact(cycle3, swap_pair):
    for sys in (cycle3, swap_pair):
        for n in (1, 2, 5, 17, 50):
            assert coboundary_residual(sys, n) == 0


def test_coboundary_residual_rotation_grid(golden_cos):
    assert coboundary_residual(golden_cos, 1, 128) == 0
    assert coboundary_residual(golden_cos, 100, 128) <= 1e-9
    curve = coboundary_residual_curve(golden_cos, 60, 128)
    assert curve.max() <= 1e-9


def test_envelope_sandwich_and_monotone(golden_cos):
    t = birkhoff_table(golden_cos, 64, n_max=40)
    assert np.all(t.env_minus <= t.averages + 1e-15)
    assert np.all(t.averages <= t.env_plus + 1e-15)
    assert np.all(np.diff(t.env_minus, axis=0) >= -1e-15)
    assert np.all(np.diff(t.env_plus, axis=0) <= 1e-15)


@given(st.integers(0, 2**20))
@settings(max_examples=25, deadline=None)
def test_envelope_properties_random_finite(seed):
    rng = np.random.default_rng(seed)
    sys = random_permutation_system(rng, max_states=10)
    t = birkhoff_table(sys, n_max=12)
    m = len(sys.perm_table)
    for p in range(m):
        for n in range(12):
            assert t.env_minus[n][p] <= t.averages[n][p] <= t.env_plus[n][p]
            if n + 1 < 12:
                assert t.env_minus[n][p] <= t.env_minus[n + 1][p]
                assert t.env_plus[n][p] >= t.env_plus[n + 1][p]
    hmin, hmax = min(sys.factor_table), max(sys.factor_table)
    for n in range(12):
        for p in range(m):
            assert hmin <= t.averages[n][p] <= hmax


def test_gauge_covariance_exact(swap_pair):
    # A_n(h + f o psi - f) = A_n(h) + (f(psi^n x) - f(x)) / n, exactly
    f0 = lambda i: [3, -1, 7][int(i)]
    shifted = gauge_shifted_system(swap_pair, f0)
    t = birkhoff_table(swap_pair, n_max=15)
    ts = birkhoff_table(shifted, n_max=15)
    tbl = swap_pair.perm_table
    for p in range(3):
        x = p
        for n in range(1, 16):
            y = x
            for _ in range(n):
                y = tbl[y]
            expect = t.averages[n - 1][p] + Fraction(f0(y) - f0(x), n)
            assert ts.averages[n - 1][p] == expect


def test_gauge_covariance_grid(golden_cos):
    f0 = lambda x: np.sin(2 * np.pi * np.asarray(x)) * 0.25
    shifted = gauge_shifted_system(golden_cos, f0)
    t = birkhoff_table(golden_cos, 64, n_max=30)
    ts = birkhoff_table(shifted, 64, n_max=30)
    pts = t.points
    for n in (1, 7, 30):
        endpoints = pts.copy()
        for _ in range(n):
            endpoints = (endpoints + GOLDEN_ANGLE) % 1.0
        expect = t.averages[n - 1] + (f0(endpoints) - f0(pts)) / n
        assert ts.averages[n - 1] == pytest.approx(expect, abs=1e-9)


def test_limit_estimates_finite_exact(swap_pair):
    t = birkhoff_table(swap_pair, n_max=6)
    est = limit_estimates(t)
    assert est.exact
    assert est.L_minus == 1 and est.L_plus == 2


def test_limit_estimates_constant(const_rotation):
    t = birkhoff_table(const_rotation, 64, n_max=25)
    est = limit_estimates(t)
    assert est.L_minus == pytest.approx(0.2, abs=1e-12)
    assert est.L_plus == pytest.approx(0.2, abs=1e-12)
    assert est.stable


def test_limit_estimates_strict_bound(golden_strict):
    n_max = 400
    t = birkhoff_table(golden_strict, 512, n_max=n_max)
    est = limit_estimates(t)
    assert isinstance(est.error_bound, float)
    assert est.error_bound == pytest.approx(4.0 / n_max, rel=1e-3)
    assert abs(est.L_minus) <= est.error_bound
    assert abs(est.L_plus) <= est.error_bound
    assert est.L_minus <= est.L_plus
    # the 1/n envelope decay keeps moving through the last 10% of orders
    assert not est.stable


def test_limit_estimates_heuristic_flag(golden_cos):
    t = birkhoff_table(golden_cos, 64, n_max=50)
    est = limit_estimates(t)
    assert est.error_bound == "heuristic"
    assert not est.exact


def test_admissible_set_classification(swap_pair):
    est = limit_estimates(birkhoff_table(swap_pair, n_max=4))
    adm = admissible_set(est)
    assert adm.classify(3) == "admissible"
    assert adm.classify(1.5) == "not_admissible"
    assert adm.classify(0) == "excluded_zero"
    assert not adm.contains(0)
    assert adm.contains(-5)
    assert adm.classify(2) == "not_admissible"  # closed gap endpoint


def test_action_power_matches_average_displacement(swap_pair):
    # n (k - A_n(h)(x)) is the t-displacement of the n-th action power
    t = birkhoff_table(swap_pair, n_max=12)
    act = TorusAction(swap_pair, Fraction(2))
    for p in range(3):
        for n in (1, 4, 9, 12):
            _, tval = action_power(act, p, Fraction(0), n)
            assert tval == n * (Fraction(2) - t.averages[n - 1][p])


def test_torus2_table_and_residual():
    from lcsdyn import cat_map_system

    sys = cat_map_system({"type": "trig2", "terms": [[1, 0, 0.5, 0.0],
                                                     [0, 1, 0.0, 0.25]]},
                         grid_resolution=16)
    t = birkhoff_table(sys, 16, n_max=25)
    assert np.all(t.env_minus <= t.averages + 1e-15)
    assert np.all(t.averages <= t.env_plus + 1e-15)
    assert coboundary_residual(sys, 20, 8) <= 1e-9


def test_csv_exports(tmp_path, swap_pair):
    t = birkhoff_table(swap_pair, n_max=4)
    full = tmp_path / "table.csv"
    table_to_csv(t, full)
    rows = list(csv.reader(open(full)))
    assert rows[0] == ["point", "n", "S_n", "A_n", "env_minus", "env_plus"]
    assert len(rows) == 1 + 3 * 4
    assert rows[1][2] == "0"  # S_1(0) = h(0) = 0, exact
    ext = tmp_path / "ext.csv"
    extrema_to_csv(t, ext)
    rows = list(csv.reader(open(ext)))
    assert rows[0][0] == "n" and len(rows) == 5
