import math

import numpy as np
import pytest

from nvdnp.dissipator import RateModel
from nvdnp.estimation import (CalibrationError, Chi2Scan, ExperimentTrace, FitError,
                              GridBoundaryError, calibrate_angle, calibrate_field, chi2_scan,
                              estimate_cperp, fit_exponential, locate_minimum, scan_cperp,
                              steady_populations)
from nvdnp.evolution import dnp_sequence
from nvdnp.hamiltonian import FieldConfig, SystemParams, ground_transition_frequencies

P = SystemParams()
R = RateModel()


def model(t, p0, a, tau):
    return p0 - a * np.exp(-t / tau)


def test_exact_exponential_recovery():
    t = np.linspace(0, 15, 30)
    fit = fit_exponential(t, model(t, 0.9, 0.5, 2.3))
    assert (fit.p0, fit.a, fit.tau) == pytest.approx((0.9, 0.5, 2.3), abs=1e-8)
    assert fit.covariance.shape == (3, 3)
    assert np.allclose(fit(t), model(t, 0.9, 0.5, 2.3))


def test_decaying_exponential():
    t = np.linspace(0, 15, 30)
    fit = fit_exponential(t, model(t, 0.1, -0.5, 2.3))
    assert fit.a < 0 and fit.tau == pytest.approx(2.3, abs=1e-8)


def test_noisy_exponential_monte_carlo():
    rng = np.random.default_rng(2024)
    t = np.linspace(0, 15, 30)
    clean = model(t, 0.9, 0.5, 2.3)
    taus = [fit_exponential(t, clean + 0.01 * rng.standard_normal(t.size)).tau for _ in range(100)]
    assert np.all(np.abs(np.array(taus) / 2.3 - 1) <= 0.15)


def test_fit_rejects_degenerate_input():
    with pytest.raises(FitError):
        fit_exponential(np.arange(5.0), np.ones(5))
    with pytest.raises(ValueError):
        fit_exponential(np.arange(3.0), np.arange(3.0))


def test_trace_validation_names_point():
    with pytest.raises(ValueError, match="point 2"):
        ExperimentTrace(FieldConfig(252, 1.7), np.array([0, 1, 1, 2.0]), np.full(4, 0.3),
                        np.full(4, 0.3))
    with pytest.raises(ValueError):
        ExperimentTrace(FieldConfig(252, 1.7), np.arange(3.0), np.array([0.1, 1.2, 0.3]),
                        np.full(3, 0.3))


@pytest.fixture(scope="module")
def synthetic():
    f = FieldConfig(252, 1.7)
    t = np.linspace(0, 20, 41)
    tr = dnp_sequence(P, f, R, t)
    return ExperimentTrace(f, t, tr.p_plus1, tr.p_zero)


def test_chi2_discriminates(synthetic):
    s = chi2_scan(synthetic, P, R, [-40, -23, -15])
    assert np.all(s.chi2 >= 0)
    assert s.chi2[1] < s.chi2[0] and s.chi2[1] < s.chi2[2]
    assert s.chi2[1] == pytest.approx(0, abs=1e-20)


def test_chi2_invariances(synthetic):
    rng = np.random.default_rng(7)
    noisy = ExperimentTrace(synthetic.field, synthetic.times,
                            np.clip(synthetic.p_plus1 + 0.02 * rng.standard_normal(41), 0, 1),
                            synthetic.p_zero, np.full(41, 0.02))
    grid = [-30, -26, -23, -20, -16]
    base = chi2_scan(noisy, P, R, grid)
    doubled = chi2_scan(ExperimentTrace(noisy.field, noisy.times, noisy.p_plus1, noisy.p_zero,
                                        2 * noisy.sigma), P, R, grid)
    assert np.argmin(base.chi2) == np.argmin(doubled.chi2)
    perm = rng.permutation(41)
    order = np.argsort(noisy.times[perm])  # times must stay increasing; reorder via the sort
    shuffled = ExperimentTrace(noisy.field, noisy.times[perm][order], noisy.p_plus1[perm][order],
                               noisy.p_zero[perm][order], noisy.sigma)
    assert np.allclose(chi2_scan(shuffled, P, R, grid).chi2, base.chi2, rtol=1e-12)


def test_scan_failures_are_annotated(synthetic, monkeypatch):
    import nvdnp.estimation as est
    real = est._simulate_at

    def flaky(data, p, r, c, relax_time):
        if c == -30:
            raise RuntimeError("boom")
        return real(data, p, r, c, relax_time)

    monkeypatch.setattr(est, "_simulate_at", flaky)
    s = chi2_scan(synthetic, P, R, [-35, -30, -25])
    assert math.isnan(s.chi2[1]) and "boom" in s.errors[-30.0]
    assert np.isfinite(s.chi2[[0, 2]]).all()


def test_single_scan_estimate(synthetic):
    s = chi2_scan(synthetic, P, R, np.arange(-40, -9, 1.0))
    est = estimate_cperp([s])
    assert abs(est.c_perp_best + 23) <= 1
    assert -40 <= est.c_perp_best <= -10


def test_local_convexity(synthetic):
    c = np.arange(-28.0, -17.0)
    x = chi2_scan(synthetic, P, R, c).chi2
    assert np.all(np.diff(x, 2) > 0)


def test_boundary_minimum_reported(synthetic):
    s = chi2_scan(synthetic, P, R, np.arange(-45, -29, 2.0))
    with pytest.raises(GridBoundaryError):
        estimate_cperp([s])


def test_pooling_identical_scans_shrinks_uncertainty():
    c = np.arange(-35, -10, 1.0)
    scan = Chi2Scan(c, 0.01 + 1e-4 * (c + 23.3) ** 2, "plus1", FieldConfig(252, 1.7), 40)
    single = locate_minimum(scan)
    pooled = estimate_cperp([scan] * 4)
    assert pooled.c_perp_best == pytest.approx(-23.3, abs=1e-6)
    assert pooled.uncertainty < single.width


@pytest.mark.parametrize("b, theta", [(252, 1.7), (348, 1.5), (411, 0.8)])
def test_noiseless_recovery_at_experimental_fields(b, theta):
    f = FieldConfig(b, theta)
    t = np.linspace(0, 20, 41)
    tr = dnp_sequence(P, f, R, t)
    data = ExperimentTrace(f, t, tr.p_plus1, tr.p_zero)
    est = estimate_cperp(list(scan_cperp(data, P, R).values()))
    assert abs(est.c_perp_best + 23) <= 0.5


def test_aligned_field_inversion():
    f = calibrate_field(3576.104, 2163.896, P)
    assert f.b == pytest.approx(252, abs=1e-6) and f.theta == 0.0


def test_tilted_round_trip():
    nu = ground_transition_frequencies(P, FieldConfig(348, 1.5))
    f = calibrate_field(*nu, P)
    assert abs(f.b - 348) <= 0.01 and abs(f.theta - 1.5) <= 0.01


@pytest.mark.parametrize("nu", [(2870, 2870), (2800, 2900), (1000, 900)])
def test_calibration_rejects(nu):
    with pytest.raises(CalibrationError):
        calibrate_field(*nu, P)


@pytest.fixture(scope="module")
def steady_252():
    return [(252.0,) + steady_populations(P, FieldConfig(252, 1.7), R)[:2]]


def test_angle_recovery(steady_252):
    assert abs(calibrate_angle(steady_252, P, R) - 1.7) <= 0.1


def test_angle_at_zero():
    data = [(411.0,) + steady_populations(P, FieldConfig(411, 0), R)[:2]]
    assert calibrate_angle(data, P, R) <= 0.1


def test_angle_boundary_rejected():
    data = [(411.0,) + steady_populations(P, FieldConfig(411, 8), R)[:2]]
    with pytest.raises(CalibrationError):
        calibrate_angle(data, P, R)


def test_steady_polarization_decreasing_in_angle():
    p = [steady_populations(P, FieldConfig(411, th), R)[0] for th in np.arange(0, 3.01, 0.25)]
    assert np.all(np.diff(p) < 0)
