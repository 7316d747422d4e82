"""Carleman weights, cutoffs, polar operator algebra, and the weighted
inequality scan at reduced quadrature resolution."""

import numpy as np
import pytest

from fracparab.carleman import (CarlemanError, CarlemanWeight, CutoffPair,
                                PolarField, SeparableAtom, angular_degrees,
                                carleman_lhs_rhs, carleman_scan,
                                modewise_inequality_check, polar_ops,
                                random_atoms, smooth_bump,
                                verify_weight_properties)

CUT = CutoffPair(horizon=1.0, t0=0.4, tau_hat=2.0, tau0=0.4)


def test_weight_requires_quarter_offset():
    with pytest.raises(CarlemanError):
        CarlemanWeight(5.0)
    CarlemanWeight(5.25)


def test_weight_closed_form_values():
    w = CarlemanWeight(10.25)
    # psi'(0) = 31 beta / 32 lies inside [beta/2, beta]
    assert np.isclose(w.dpsi(0.0), 31.0 * 10.25 / 32.0)
    assert 0.5 * w.beta <= w.dpsi(0.0) <= w.beta
    # y -> infinity: psi' -> beta, dist(2 beta, Z) = 1/2 >= 1/32
    assert np.isclose(w.dpsi(60.0), w.beta, rtol=1e-10)
    assert abs(2.0 * w.beta - round(2.0 * w.beta)) == 0.5
    # derivative consistency by finite differences
    y = np.linspace(-1.0, 5.0, 7)
    eps = 1e-6
    assert np.allclose((w.psi(y + eps) - w.psi(y - eps)) / (2 * eps),
                       w.dpsi(y), atol=1e-7)
    assert np.allclose((w.dpsi(y + eps) - w.dpsi(y - eps)) / (2 * eps),
                       w.d2psi(y), atol=1e-7)


def test_weight_properties_scan():
    rep = verify_weight_properties([5.25, 10.25, 20.25])
    assert rep["passed"] and not rep["failures"]
    for row in rep["rows"]:
        assert row["min_gap_margin"] >= 1.0 / 32.0 - 1e-12
        assert row["convex"]
        assert row["empirical_r0"] > 0.0


def test_cutoff_plateau_structure():
    t = np.linspace(-1.2, 1.2, 2401)
    chi = CUT.chi(t)
    assert np.all((0.0 <= chi) & (chi <= 1.0))
    assert np.all(chi[np.abs(t) <= CUT.t2] == 1.0)
    assert np.all(chi[np.abs(t) >= CUT.t1] == 0.0)
    tau = np.linspace(0.0, CUT.tau_hat, 2401)
    zeta = CUT.zeta(tau)
    assert np.all((0.0 <= zeta) & (zeta <= 1.0))
    assert np.all(zeta[np.abs(tau - CUT.tau_hat / 2) <= CUT.tau2] == 1.0)
    assert np.all(zeta[np.abs(tau - CUT.tau_hat / 2) >= CUT.tau1] == 0.0)
    with pytest.raises(CarlemanError):
        CutoffPair(horizon=1.0, t0=1.5, tau_hat=2.0, tau0=0.4)


def test_cutoff_derivatives_match_finite_differences():
    t = np.linspace(-CUT.t1 + 1e-3, CUT.t1 - 1e-3, 501)
    eps = 1e-6
    fd1 = (CUT.chi(t + eps) - CUT.chi(t - eps)) / (2 * eps)
    assert np.abs(CUT.chi_prime(t) - fd1).max() <= 1e-5
    fd2 = (CUT.chi(t + eps) - 2 * CUT.chi(t) + CUT.chi(t - eps)) / eps ** 2
    assert np.abs(CUT.chi_second(t) - fd2).max() <= 1e-2
    tau = np.linspace(CUT.tau_hat / 2 - CUT.tau1 + 1e-3,
                      CUT.tau_hat / 2 + CUT.tau1 - 1e-3, 501)
    fd1 = (CUT.zeta(tau + eps) - CUT.zeta(tau - eps)) / (2 * eps)
    assert np.abs(CUT.zeta_prime(tau) - fd1).max() <= 1e-5


def test_polar_field_roundtrip_and_parseval(rng):
    y = np.linspace(0.0, 3.0, 65)
    v = PolarField(y, rng.standard_normal((65, 32)))
    back = PolarField.from_modes(y, v.to_modes())
    assert np.abs(back.values - v.values).max() <= 1e-10
    assert np.isclose(v.mode_energies().sum(), v.total_energy(), rtol=1e-10)
    with pytest.raises(CarlemanError):
        PolarField(np.array([0.0, 1.0, 3.0]), np.zeros((3, 8)))


def test_polar_ops_single_mode_eigenvalue():
    y = np.linspace(-1.0, 3.0, 257)
    k = 3
    vals = np.exp(-(y - 1.0) ** 2)[:, None] * np.exp(
        1j * k * 2.0 * np.pi * np.arange(32) / 32)[None, :]
    v = PolarField(y, vals)
    ops = polar_ops(v)
    # Lambda restricted to degree k multiplies by k (n = 2)
    assert (np.abs(ops["lambda_v"] - k * vals).max()
            <= 1e-10 * np.abs(vals).max())
    assert np.array_equal(angular_degrees(32),
                          np.abs(np.fft.fftfreq(32, d=1.0 / 32).round()))


def test_polar_factorization_fourth_order():
    # e^{-2y} Delta = L+ L- on profiles decayed at both grid ends
    errs = []
    for ny in (129, 257):
        y = np.linspace(-1.0, 3.5, ny)
        r = np.exp(-y)
        prof = np.exp(-16.0 * (r - 1.2) ** 2)
        k = 2
        theta = 2.0 * np.pi * np.arange(48) / 48
        v = PolarField(y, prof[:, None] * np.cos(k * theta)[None, :])
        ops = polar_ops(v)
        # oracle: e^{-2y} Delta (f(r) cos k theta) mapped to y
        dr = 32.0 * (r - 1.2) * prof * -1.0
        d2r = (-32.0 + (32.0 * (r - 1.2)) ** 2) * prof
        lap = d2r + dr / r - (k / r) ** 2 * prof
        want = (r ** 2 * lap)[:, None] * np.cos(k * theta)[None, :]
        got = ops["lplus_lminus"]
        errs.append(np.abs(got - want).max() / np.abs(want).max())
        assert (np.abs(ops["lplus_lminus"] - ops["lminus_lplus"]).max()
                <= 1e-8 * np.abs(want).max())
    assert errs[0] <= 1e-2
    assert errs[0] / errs[1] >= 8.0      # ~4th order in dy


def test_random_atoms_deterministic():
    a1 = random_atoms(np.random.default_rng(7), 3, 0.2, 2.0, 1.0, 1.0, 0.8)
    a2 = random_atoms(np.random.default_rng(7), 3, 0.2, 2.0, 1.0, 1.0, 0.8)
    r = np.linspace(0.1, 2.2, 11)
    for x, y in zip(a1, a2):
        assert x.k == y.k and x.amplitude == y.amplitude
        assert np.array_equal(x.c(r), y.c(r))


def test_smooth_bump_support():
    u = np.linspace(-2, 2, 401)
    b = smooth_bump(u)
    assert np.all(b[np.abs(u) >= 1.0] == 0.0)
    assert np.isclose(b[200], 1.0)


def test_lhs_rhs_zero_field_and_support_guard():
    weight = CarlemanWeight(5.25)
    zero = [SeparableAtom(np.cos, np.sin, np.cos, np.sin,
                          np.cos, np.sin, np.cos, k=1, amplitude=0.0)]
    lhs, rhs = carleman_lhs_rhs(zero, weight, CUT, 0.2, 2.0,
                                num_t=8, num_tau=8, num_y=16, num_theta=8)
    assert lhs == 0.0 and rhs == 0.0
    with pytest.raises(CarlemanError):
        carleman_lhs_rhs(zero, weight, CUT, 0.2, 3.0)


def test_scan_small_family():
    scan = carleman_scan([5.25, 10.25], num_samples=4, seed=0,
                         num_t=16, num_tau=16, num_y=32, num_theta=16)
    assert len(scan["rows"]) == 8
    env = scan["envelope"]
    assert all(np.isfinite(v) and v > 0 for v in env.values())
    # determinism: same seed reproduces the ratios exactly
    again = carleman_scan([5.25, 10.25], num_samples=4, seed=0,
                          num_t=16, num_tau=16, num_y=32, num_theta=16)
    assert all(r1["ratio"] == r2["ratio"]
               for r1, r2 in zip(scan["rows"], again["rows"]))
    with pytest.raises(CarlemanError):
        carleman_scan([4.25], num_samples=1)


def test_modewise_inequality_holds():
    g = lambda y: np.exp(-4.0 * (y - 1.0) ** 2)
    dg = lambda y: -8.0 * (y - 1.0) * g(y)
    d2g = lambda y: (-8.0 + 64.0 * (y - 1.0) ** 2) * g(y)
    for k, beta in ((0, 10.25), (2, 10.25), (1, 20.25)):
        rep = modewise_inequality_check(g, dg, d2g, k, beta, CUT,
                                        num_t=24, num_tau=24, num_y=64)
        assert rep["right"] > 0
        assert np.isfinite(rep["ratio"])
