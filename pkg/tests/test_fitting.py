"""Crossing detection and collapse fitting on synthetic data."""

import numpy as np
import pytest

from brrep.fitting import (
    Curve,
    collapse_fit,
    find_crossing,
    golden_section,
    pooled_spread,
    threshold_crossing_time,
)


def test_two_lines_cross_exactly():
    x = np.linspace(0, 10, 40)
    x0 = 4.2
    c1 = Curve(16, x, 1.5 * (x - x0))
    c2 = Curve(32, x, -0.7 * (x - x0))
    result = find_crossing([c1, c2])
    assert result.found
    assert result.x_star == pytest.approx(x0, abs=1e-6)
    assert result.uncertainty == 0.0


def test_identical_curves_no_crossing():
    x = np.linspace(0, 5, 20)
    y = np.sin(x)
    result = find_crossing([Curve(8, x, y), Curve(16, x, y.copy())])
    assert not result.found
    assert result.x_star is None


def test_three_sizes_mean_and_spread():
    x = np.linspace(0, 10, 60)
    curves = [Curve(n, x, (n / 10.0) * (x - 5.0 - 0.01 * n)) for n in (10, 20, 30)]
    result = find_crossing([curves[0], curves[1], curves[2]])
    assert result.found
    assert len(result.pair_crossings) == 3
    assert result.uncertainty > 0


def test_non_overlapping_ranges_raise():
    c1 = Curve(8, np.linspace(0, 1, 5), np.zeros(5))
    c2 = Curve(16, np.linspace(2, 3, 5), np.ones(5))
    with pytest.raises(ValueError):
        find_crossing([c1, c2])


def test_golden_section_minimum():
    got = golden_section(lambda v: (v - 1.37) ** 2, 0.0, 3.0)
    assert got == pytest.approx(1.37, abs=1e-4)


def synthetic_eq14_curves(tau, c1, c2, sizes=(16, 24, 32, 48, 64)):
    curves = []
    for n in sizes:
        t = np.arange(0, 16)
        r = c1 * np.exp(-c2 * (t - tau * np.log(n)))
        keep = (r > 1e-4) & (r < 1e3)
        curves.append(Curve(n, t[keep], np.log(r[keep])))
    return curves


def test_collapse_recovers_eq14_parameters():
    tau, c1, c2 = 1.5, 3.0, 0.7
    fit = collapse_fit(synthetic_eq14_curves(tau, c1, c2), "shift_log")
    assert fit.tau_star == pytest.approx(tau, rel=0.02)
    assert fit.c1 == pytest.approx(c1, rel=0.02)
    assert fit.c2 == pytest.approx(c2, rel=0.02)
    assert fit.delta == fit.c2
    # exact synthetic data: collapse removes essentially all spread
    assert fit.residual_ratio > 100


def test_collapse_shift_linear():
    curves = []
    for n in (12, 20, 28, 36):
        t = np.arange(0, int(1.5 * n))
        y = (t - 0.77 * n) * -1.1
        keep = (y > -20) & (y < 20)
        curves.append(Curve(n, t[keep], y[keep]))
    fit = collapse_fit(curves, "shift_linear")
    assert fit.tau_star == pytest.approx(0.77, abs=0.02)


def test_collapse_field_first_order():
    lam_star, nu = 0.84, 0.5
    curves = []
    for n in (20, 30, 40):
        u = np.linspace(0.4, 1.3, 40)
        y = 1.0 / (1.0 + np.exp((u - lam_star) * n ** (1 / nu) / 25.0))
        curves.append(Curve(n, u, y))
    fit = collapse_fit(curves, "field_first_order", nu_fixed=0.5)
    assert fit.lambda_star == pytest.approx(lam_star, abs=0.02)
    assert fit.nu == 0.5
    free = collapse_fit(curves, "field_first_order")
    assert free.nu == pytest.approx(0.5, abs=0.15)


def test_collapse_sqrt_width_prefers_true_scaling():
    tau = 0.8
    curves_sqrt = []
    for n in (16, 36, 64):
        t = np.arange(0, int(2 * n))
        x = (t - tau * n) / np.sqrt(n)
        y = np.tanh(x / 2.0)
        curves_sqrt.append(Curve(n, t, y))
    fit_sqrt = collapse_fit(curves_sqrt, "sqrt_width")
    fit_lin = collapse_fit(curves_sqrt, "shift_linear")
    assert fit_sqrt.tau_star == pytest.approx(tau, abs=0.03)
    assert fit_sqrt.residual < fit_lin.residual


def test_collapse_requires_three_sizes():
    x = np.linspace(0, 1, 10)
    with pytest.raises(ValueError):
        collapse_fit([Curve(8, x, x), Curve(16, x, x)], "shift_log")


def test_collapse_invariant_under_regridding():
    tau, c1, c2 = 1.3, 2.0, 0.8
    base = collapse_fit(synthetic_eq14_curves(tau, c1, c2), "shift_log")
    dense_curves = []
    for n in (16, 24, 32, 48, 64):
        t = np.linspace(0, 15, 61)
        r = c1 * np.exp(-c2 * (t - tau * np.log(n)))
        keep = (r > 1e-4) & (r < 1e3)
        dense_curves.append(Curve(n, t[keep], np.log(r[keep])))
    fine = collapse_fit(dense_curves, "shift_log")
    assert fine.tau_star == pytest.approx(base.tau_star, rel=0.01)


def test_pooled_spread_zero_for_identical():
    x = np.linspace(0, 1, 30)
    y = np.cos(x)
    curves = [Curve(n, x, y.copy()) for n in (8, 16, 32)]
    assert pooled_spread(curves) < 1e-28


def test_threshold_crossing_interpolation():
    t = np.arange(6)
    y = np.array([10.0, 6.0, 4.0, 2.5, 2.2, 2.05])
    tc = threshold_crossing_time(t, y, 3.0)
    assert tc == pytest.approx(2 + 1.0 / 1.5, abs=1e-12)
    assert threshold_crossing_time(t, y, 100.0) is None
    up = threshold_crossing_time(t, y[::-1], 3.0, descending=False)
    assert up is not None


def test_curve_sorts_and_filters():
    c = Curve(8, [3.0, 1.0, 2.0, np.nan], [30.0, 10.0, 20.0, 99.0])
    assert list(c.x) == [1.0, 2.0, 3.0]
    assert list(c.y) == [10.0, 20.0, 30.0]
