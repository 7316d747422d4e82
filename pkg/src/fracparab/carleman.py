"""Carleman weights phi_beta = exp(psi(-log|x|)), C^2 cutoffs in time and in
the auxiliary variable, polar-coordinate operator algebra on the punctured
plane, and sampling-based verification of the weighted inequality

    int phi^2 (1+psi'') chi^2 zeta^2 (|x|^(2-n)|grad w|^2 + beta^2 |x|^-n |w|^2)
      <= C * int phi^2 |x|^(4-n) [ chi^2 zeta^2 (Lap w - w_t - w_tau)^2
                                   + |chi' zeta w|^2 + |chi zeta' w|^2 ].

Everything here is falsification by sampling, never proof: a bounded
max-ratio envelope over a randomized test family is the checkable shadow of
the inequality's universal quantifier, and no more than that is claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np


class CarlemanError(ValueError):
    pass


# ---------------------------------------------------------------------------
# weight


def _check_beta(beta: float) -> None:
    if beta <= 0 or abs(beta - (np.floor(beta) + 0.25)) > 1e-12:
        raise CarlemanError(f"beta must lie in N + 1/4, got {beta}")


@dataclass(frozen=True)
class CarlemanWeight:
    """psi(y) = beta*y + (beta/16) e^(-y/2) with y = -log|x|; the weight is
    exp(psi).  beta must sit in N + 1/4 so that dist(2*psi', Z) stays away
    from zero as y -> infinity."""

    beta: float

    def __post_init__(self):
        _check_beta(self.beta)

    def psi(self, y):
        y = np.asarray(y, dtype=float)
        return self.beta * y + (self.beta / 16.0) * np.exp(-y / 2.0)

    def dpsi(self, y):
        y = np.asarray(y, dtype=float)
        return self.beta - (self.beta / 32.0) * np.exp(-y / 2.0)

    def d2psi(self, y):
        y = np.asarray(y, dtype=float)
        return (self.beta / 64.0) * np.exp(-y / 2.0)

    def d3psi(self, y):
        y = np.asarray(y, dtype=float)
        return -(self.beta / 128.0) * np.exp(-y / 2.0)

    def log_weight(self, y):
        """log phi_beta; use shifted exponentials downstream, exp(psi)
        overflows for moderate beta * y."""
        return self.psi(y)


def verify_weight_properties(betas, y_grid=None) -> dict:
    """Pointwise check of the two displayed weight inequalities on the
    working range, plus an empirical radius for the small-|x| bound
    (1/16)|x| beta <= 1 + psi''(-log|x|)."""
    if y_grid is None:
        y_grid = np.linspace(-1.0, 40.0, 16001)
    y_grid = np.asarray(y_grid, dtype=float)
    failures = []
    rows = []
    for beta in betas:
        w = CarlemanWeight(float(beta))
        dp, d2p = w.dpsi(y_grid), w.d2psi(y_grid)
        slope_ok = (dp >= 0.5 * beta - 1e-14) & (dp <= beta + 1e-14)
        margin = np.abs(2.0 * dp - np.round(2.0 * dp)) + d2p
        gap_ok = margin >= 1.0 / 32.0 - 1e-14
        bad = ~(slope_ok & gap_ok)
        if bad.any():
            failures.extend((float(beta), float(yy)) for yy in y_grid[bad][:20])
        # largest radius R0 with (1/16) r beta <= 1 + psi''(-log r)
        r = np.geomspace(1e-6, np.e, 4000)
        ok = (beta / 16.0) * r <= 1.0 + w.d2psi(-np.log(r)) + 1e-15
        idx = np.argmin(ok) if not ok.all() else len(r)
        r0 = float(r[idx - 1]) if idx > 0 else 0.0
        rows.append({"beta": float(beta),
                     "min_slope": float(dp.min()), "max_slope": float(dp.max()),
                     "min_gap_margin": float(margin.min()),
                     "empirical_r0": r0,
                     "convex": bool(d2p.min() > 0.0)})
    return {"rows": rows, "failures": failures, "passed": not failures}


# ---------------------------------------------------------------------------
# cutoffs


def _plateau(u, lo, hi, scale3):
    """exp(-(scale/(hi-u))^3 ((u-lo)/(hi-lo))^4) on lo < u < hi; 1 below lo,
    0 above hi.  C^3 at the inner seam, smooth at the outer one."""
    u = np.asarray(u, dtype=float)
    out = np.ones_like(u)
    out[u >= hi] = 0.0
    band = (u > lo) & (u < hi)
    ub = u[band]
    out[band] = np.exp(-(scale3 / (hi - ub)) ** 3
                       * ((ub - lo) / (hi - lo)) ** 4)
    return out


def _plateau_prime(u, lo, hi, scale3):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    band = (u > lo) & (u < hi)
    ub = u[band]
    g = (scale3 / (hi - ub)) ** 3 * ((ub - lo) / (hi - lo)) ** 4
    dg = (3.0 * scale3 ** 3 / (hi - ub) ** 4 * ((ub - lo) / (hi - lo)) ** 4
          + (scale3 / (hi - ub)) ** 3 * 4.0 * (ub - lo) ** 3 / (hi - lo) ** 4)
    out[band] = -dg * np.exp(-g)
    return out


def _plateau_second(u, lo, hi, scale3):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    band = (u > lo) & (u < hi)
    ub = u[band]
    s3 = scale3 ** 3
    q4 = (hi - lo) ** 4
    g = s3 / (hi - ub) ** 3 * (ub - lo) ** 4 / q4
    dg = (3.0 * s3 / (hi - ub) ** 4 * (ub - lo) ** 4
          + 4.0 * s3 / (hi - ub) ** 3 * (ub - lo) ** 3) / q4
    d2g = (12.0 * s3 / (hi - ub) ** 5 * (ub - lo) ** 4
           + 24.0 * s3 / (hi - ub) ** 4 * (ub - lo) ** 3
           + 12.0 * s3 / (hi - ub) ** 3 * (ub - lo) ** 2) / q4
    out[band] = (dg ** 2 - d2g) * np.exp(-g)
    return out


@dataclass(frozen=True)
class CutoffPair:
    """chi(t): 1 on |t| <= T2, 0 on |t| >= T1 with T1 = T - t0/2 and
    T2 = T - t0; zeta(tau) is the analogous plateau centered at tau_hat/2
    with radii tau_2 = tau_hat/2 - tau0 < tau_1 = tau_hat/2 - tau0/2."""

    horizon: float       # T
    t0: float
    tau_hat: float
    tau0: float

    def __post_init__(self):
        if not 0 < self.t0 < self.horizon:
            raise CarlemanError("need 0 < t0 < T")
        if not 0 < self.tau0 < self.tau_hat / 2.0:
            raise CarlemanError("need 0 < tau0 < tau_hat/2")

    @property
    def t1(self) -> float:
        return self.horizon - self.t0 / 2.0

    @property
    def t2(self) -> float:
        return self.horizon - self.t0

    @property
    def tau1(self) -> float:
        return self.tau_hat / 2.0 - self.tau0 / 2.0

    @property
    def tau2(self) -> float:
        return self.tau_hat / 2.0 - self.tau0

    def chi(self, t):
        return _plateau(np.abs(t), self.t2, self.t1, self.horizon)

    def chi_prime(self, t):
        t = np.asarray(t, dtype=float)
        return np.sign(t) * _plateau_prime(np.abs(t), self.t2, self.t1,
                                           self.horizon)

    def chi_second(self, t):
        return _plateau_second(np.abs(t), self.t2, self.t1, self.horizon)

    def zeta(self, tau):
        u = np.abs(np.asarray(tau, dtype=float) - self.tau_hat / 2.0)
        return _plateau(u, self.tau2, self.tau1, self.tau_hat / 8.0)

    def zeta_prime(self, tau):
        tau = np.asarray(tau, dtype=float)
        d = tau - self.tau_hat / 2.0
        return np.sign(d) * _plateau_prime(np.abs(d), self.tau2, self.tau1,
                                           self.tau_hat / 8.0)

    def zeta_second(self, tau):
        u = np.abs(np.asarray(tau, dtype=float) - self.tau_hat / 2.0)
        return _plateau_second(u, self.tau2, self.tau1, self.tau_hat / 8.0)


# ---------------------------------------------------------------------------
# polar fields and the operator algebra (n = 2)


@dataclass(frozen=True)
class PolarField:
    """Samples v(y_i, theta_j) on a uniform y-grid times equispaced angles;
    angular Fourier modes carry the sphere decomposition."""

    y: np.ndarray
    values: np.ndarray        # (ny, ntheta), complex or real

    def __post_init__(self):
        if self.values.shape[0] != len(self.y):
            raise CarlemanError("value rows must match the y grid")
        if np.ptp(np.diff(self.y)) > 1e-12 * np.abs(np.diff(self.y)).max():
            raise CarlemanError("y grid must be uniform")

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def num_theta(self) -> int:
        return self.values.shape[1]

    @property
    def theta(self) -> np.ndarray:
        m = self.num_theta
        return 2.0 * np.pi * np.arange(m) / m

    def to_modes(self) -> np.ndarray:
        return np.fft.fft(self.values, axis=1) / self.num_theta

    @classmethod
    def from_modes(cls, y: np.ndarray, modes: np.ndarray) -> "PolarField":
        return cls(y, np.fft.ifft(modes * modes.shape[1], axis=1))

    def mode_energies(self) -> np.ndarray:
        """Per-mode energies; their sum equals the quadrature energy of the
        field (discrete Parseval over the circle)."""
        c = self.to_modes()
        return (2.0 * np.pi) * np.sum(np.abs(c) ** 2, axis=0) * self.dy

    def total_energy(self) -> float:
        w = 2.0 * np.pi / self.num_theta
        return float(np.sum(np.abs(self.values) ** 2) * w * self.dy)


def _ddy4(vals: np.ndarray, dy: float) -> np.ndarray:
    """4th-order first derivative along axis 0 with one-sided closures."""
    out = np.empty_like(vals)
    out[2:-2] = (vals[:-4] - 8 * vals[1:-3] + 8 * vals[3:-1]
                 - vals[4:]) / (12 * dy)
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * dy)
    for i in (0, 1):
        out[i] = sum(cc * vals[i + j] for j, cc in enumerate(c))
    for i in (-1, -2):
        out[i] = -sum(cc * vals[i - j] for j, cc in enumerate(c))
    return out


def angular_degrees(num_theta: int) -> np.ndarray:
    """|k| for the FFT ordering of angular modes: the spherical-harmonic
    degree of mode e^(i k theta) on the circle."""
    return np.abs(np.fft.fftfreq(num_theta, d=1.0 / num_theta))


def polar_ops(v: PolarField, weight: CarlemanWeight | None = None,
              n: int = 2) -> dict:
    """Lambda v, L^+/- v, the composition L+ L- v (= e^(-2y) Laplacian), the
    commutator L+L- - L-L+, and (when a weight is given) the conjugated
    operators L_beta^+/- = L^+/- - psi'."""
    if n != 2:
        raise CarlemanError("polar operator algebra implemented for n = 2")
    half = (n - 2) / 2.0
    deg = angular_degrees(v.num_theta) + half
    modes = v.to_modes()

    def lam_apply(m):
        return m * deg[None, :]

    def back(m):
        return np.fft.ifft(m * v.num_theta, axis=1)

    def lpm(m, sign):
        dy = np.fft.fft(_ddy4(back(m), v.dy), axis=1) / v.num_theta
        return dy - half * m + sign * lam_apply(m)

    lam_v = back(lam_apply(modes))
    lp = lpm(modes, +1.0)
    lm = lpm(modes, -1.0)
    comp_pm = back(lpm(lm, +1.0))
    comp_mp = back(lpm(lp, -1.0))
    out = {"lambda_v": lam_v, "lplus": back(lp), "lminus": back(lm),
           "lplus_lminus": comp_pm, "lminus_lplus": comp_mp,
           "commutator": float(np.abs(comp_pm - comp_mp).max())}
    if weight is not None:
        dp = weight.dpsi(v.y)[:, None]
        out["lplus_beta"] = out["lplus"] - dp * v.values
        out["lminus_beta"] = out["lminus"] - dp * v.values
    return out


# ---------------------------------------------------------------------------
# separable test fields with analytic derivatives


@dataclass(frozen=True)
class SeparableAtom:
    """w(t, tau, r, theta) = a(t) b(tau) c(r) cos(k theta + phase) with all
    needed closed-form derivatives supplied as callables."""

    a: Callable
    da: Callable
    b: Callable
    db: Callable
    c: Callable
    dc: Callable
    d2c: Callable
    k: int
    phase: float = 0.0
    amplitude: float = 1.0


def smooth_bump(u):
    """exp(1 - 1/(1-u^2)) on |u| < 1, zero outside; C-infinity."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    z = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z * z))
    return out


def smooth_bump_prime(u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    z = u[inside]
    out[inside] = smooth_bump(z) * (-2.0 * z / (1.0 - z * z) ** 2)
    return out


def smooth_bump_second(u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    z = u[inside]
    q = 1.0 - z * z
    d1 = -2.0 * z / q ** 2
    d2 = -2.0 / q ** 2 - 8.0 * z * z / q ** 3
    out[inside] = smooth_bump(z) * (d1 ** 2 + d2)
    return out


def random_atoms(rng: np.random.Generator, num_atoms: int,
                 r_inner: float, r_outer: float,
                 t_span: float, tau_center: float, tau_span: float,
                 max_degree: int = 4) -> list[SeparableAtom]:
    """Randomized band-limited annulus-supported atoms for the scan."""
    atoms = []
    mid, half = 0.5 * (r_inner + r_outer), 0.5 * (r_outer - r_inner)
    for _ in range(num_atoms):
        wt = rng.uniform(0.5, 2.5)
        wtau = rng.uniform(0.5, 2.5)
        wr = rng.uniform(0.5, 6.0)
        pt, ptau, pr = rng.uniform(0, 2 * np.pi, 3)
        k = int(rng.integers(0, max_degree + 1))
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.3, 1.0)

        def make(w, p):
            return ((lambda x, w=w, p=p: np.cos(w * x + p)),
                    (lambda x, w=w, p=p: -w * np.sin(w * x + p)))

        a, da = make(wt / t_span, pt)
        b, db = make(wtau / tau_span, ptau)

        def c(r, wr=wr, pr=pr):
            u = (np.asarray(r, dtype=float) - mid) / half
            return np.cos(wr * u + pr) * smooth_bump(u)

        def dc(r, wr=wr, pr=pr):
            u = (np.asarray(r, dtype=float) - mid) / half
            return (-wr * np.sin(wr * u + pr) * smooth_bump(u)
                    + np.cos(wr * u + pr) * smooth_bump_prime(u)) / half

        def d2c(r, wr=wr, pr=pr):
            u = (np.asarray(r, dtype=float) - mid) / half
            return (-wr * wr * np.cos(wr * u + pr) * smooth_bump(u)
                    - 2.0 * wr * np.sin(wr * u + pr) * smooth_bump_prime(u)
                    + np.cos(wr * u + pr) * smooth_bump_second(u)) / half ** 2

        atoms.append(SeparableAtom(a, da, b, db, c, dc, d2c, k, phase, amp))
    return atoms


# ---------------------------------------------------------------------------
# weighted quadrature of both sides


def _gauss_axis(lo: float, hi: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (hi + lo) + 0.5 * (hi - lo) * x, 0.5 * (hi - lo) * w


def carleman_lhs_rhs(atoms: list[SeparableAtom], weight: CarlemanWeight,
                     cutoffs: CutoffPair, r_inner: float, r_outer: float,
                     num_t: int = 48, num_tau: int = 48, num_y: int = 64,
                     num_theta: int = 64, n: int = 2) -> tuple[float, float]:
    """Tensor-product quadrature of both sides of the weighted inequality
    for w = sum of separable atoms, written in y = -log r where the measures
    |x|^(2-n) dx, |x|^-n dx, |x|^(4-n) dx all collapse to powers of e^-y.

    Both sides share exp(2 psi); the integrand is normalized by its maximum
    over the support so the ratio is computed without overflow even for
    large beta."""
    if r_outer > np.e or r_inner <= 0:
        raise CarlemanError("support must sit inside 0 < |x| < e")
    y_lo, y_hi = -np.log(r_outer), -np.log(r_inner)
    t, wt = _gauss_axis(-cutoffs.t1, cutoffs.t1, num_t)
    tau, wtau = _gauss_axis(cutoffs.tau_hat / 2.0 - cutoffs.tau1,
                            cutoffs.tau_hat / 2.0 + cutoffs.tau1, num_tau)
    y, wy = _gauss_axis(y_lo, y_hi, num_y)
    theta = 2.0 * np.pi * np.arange(num_theta) / num_theta
    wth = 2.0 * np.pi / num_theta
    r = np.exp(-y)

    # shifted weight: exp(2 (psi - psi_max)) keeps the ratio and avoids
    # overflow (psi grows linearly toward the inner radius)
    psi = weight.psi(y)
    phi2 = np.exp(2.0 * (psi - psi.max()))
    d2p = weight.d2psi(y)
    chi, dchi = cutoffs.chi(t), cutoffs.chi_prime(t)
    zet, dzet = cutoffs.zeta(tau), cutoffs.zeta_prime(tau)

    # per-atom factors; the t axis is streamed to bound memory
    parts = []
    for at in atoms:
        C, dC, d2C = at.c(r), at.dc(r), at.d2c(r)
        lapC = d2C + dC / r - (at.k ** 2) * C / r ** 2
        Y = np.cos(at.k * theta + at.phase)
        dY = -at.k * np.sin(at.k * theta + at.phase)
        parts.append((at.amplitude, at.a(t), at.da(t), at.b(tau), at.db(tau),
                      C, dC, lapC, Y, dY))

    lw = (phi2 * (1.0 + d2p)) * wy
    e2 = np.exp(-2.0 * y)
    e4w = (phi2 * np.exp(-4.0 * y)) * wy
    mtau = wtau * wth
    beta2 = weight.beta ** 2
    shape = (num_tau, num_y, num_theta)
    lhs = rhs = 0.0
    for i in range(num_t):
        w = np.zeros(shape)
        wr = np.zeros(shape)
        wth_d = np.zeros(shape)
        lap = np.zeros(shape)
        w_t = np.zeros(shape)
        w_tau = np.zeros(shape)
        for amp, A, dA, B, dB, C, dC, lapC, Y, dY in parts:
            radial = np.einsum("j,k,l->jkl", B, C, Y)
            w += (amp * A[i]) * radial
            wr += (amp * A[i]) * np.einsum("j,k,l->jkl", B, dC, Y)
            wth_d += (amp * A[i]) * np.einsum("j,k,l->jkl", B, C, dY)
            lap += (amp * A[i]) * np.einsum("j,k,l->jkl", B, lapC, Y)
            w_t += (amp * dA[i]) * radial
            w_tau += (amp * A[i]) * np.einsum("j,k,l->jkl", dB, C, Y)

        grad2 = wr ** 2 + (wth_d / r[None, :, None]) ** 2
        cz2 = (chi[i] * zet) ** 2
        lhs += wt[i] * np.einsum(
            "j,jk->", cz2 * mtau,
            np.einsum("jkl,k->jk",
                      e2[None, :, None] * grad2 + beta2 * w ** 2, lw))
        res = (lap - w_t - w_tau) ** 2
        edge = ((dchi[i] * zet) ** 2 + (chi[i] * dzet) ** 2)
        rhs += wt[i] * (
            np.einsum("j,jk->", cz2 * mtau,
                      np.einsum("jkl,k->jk", res, e4w))
            + np.einsum("j,jk->", edge * mtau,
                        np.einsum("jkl,k->jk", w ** 2, e4w)))
    return float(lhs), float(rhs)


def carleman_scan(betas, num_samples: int = 50, seed: int = 0,
                  r_inner: float = 0.05 * np.e, r_outer: float = 0.9 * np.e,
                  cutoffs: CutoffPair | None = None,
                  atoms_per_sample: int = 3, **quad) -> dict:
    """Max LHS/RHS ratio per beta over a randomized annulus-supported test
    family; the envelope should be bounded and non-increasing beyond the
    empirical knee.  Sampling-based falsification only."""
    betas = [float(b) for b in betas]
    for b in betas:
        _check_beta(b)
        if b < 5.25:
            raise CarlemanError("scan restricted to beta >= 5.25")
    if cutoffs is None:
        cutoffs = CutoffPair(horizon=1.0, t0=0.4, tau_hat=2.0, tau0=0.4)
    rng = np.random.default_rng(seed)
    samples = [random_atoms(rng, atoms_per_sample, r_inner, r_outer,
                            cutoffs.t1, cutoffs.tau_hat / 2.0, cutoffs.tau1)
               for _ in range(num_samples)]
    rows = []
    for beta in betas:
        weight = CarlemanWeight(beta)
        for sid, atoms in enumerate(samples):
            lhs, rhs = carleman_lhs_rhs(atoms, weight, cutoffs,
                                        r_inner, r_outer, **quad)
            if rhs <= 0.0:
                raise CarlemanError(
                    f"vanishing right-hand side for sample {sid}")
            rows.append({"beta": beta, "sample_id": sid, "lhs": lhs,
                         "rhs": rhs, "ratio": lhs / rhs})
    envelope = {b: max(r["ratio"] for r in rows if r["beta"] == b)
                for b in betas}
    env = [envelope[b] for b in betas]
    knee = int(np.argmax(env))
    monotone = all(env[i + 1] <= env[i] * (1.0 + 1e-12)
                   for i in range(knee, len(env) - 1))
    return {"rows": rows, "envelope": envelope, "knee_beta": betas[knee],
            "monotone_after_knee": monotone}


# ---------------------------------------------------------------------------
# mode-wise inequality


def a_tilde(y, k: int, beta: float, n: int = 2):
    """(psi' - k)(psi' + k + n - 2) - psi''."""
    w = CarlemanWeight(beta)
    dp = w.dpsi(y)
    return (dp - k) * (dp + k + n - 2) - w.d2psi(y)


def b_tilde(y, beta: float, n: int = 2):
    """2 psi' + n - 2."""
    return 2.0 * CarlemanWeight(beta).dpsi(y) + n - 2


def modewise_inequality_check(profile: Callable, dprofile: Callable,
                              d2profile: Callable, k: int, beta: float,
                              cutoffs: CutoffPair,
                              y_lo: float = -1.0, y_hi: float = 3.0,
                              num_t: int = 48, num_tau: int = 48,
                              num_y: int = 96, n: int = 2) -> dict:
    """Both sides of the conjugated inequality restricted to angular degree
    k, for v(t, tau, y) = chi-compatible separable profiles: the second-order
    factorized form is d^2/dy^2 - b~ d/dy + a~.

    left  = sum_{j<=1} int (1+psi'') (beta^(2-2j) + k^(2-2j))
            |d_y^j (chi zeta v)|^2
    right = int |chi zeta (v'' - b~ v' + a~ v - e^{-2y}(v_t + v_tau))|^2
            + int |chi' zeta e^{-2y} v|^2 + int |chi zeta' e^{-2y} v|^2
    """
    weight = CarlemanWeight(beta)
    t, wt = _gauss_axis(-cutoffs.t1, cutoffs.t1, num_t)
    tau, wtau = _gauss_axis(cutoffs.tau_hat / 2.0 - cutoffs.tau1,
                            cutoffs.tau_hat / 2.0 + cutoffs.tau1, num_tau)
    y, wy = _gauss_axis(y_lo, y_hi, num_y)
    chi, dchi = cutoffs.chi(t), cutoffs.chi_prime(t)
    zet, dzet = cutoffs.zeta(tau), cutoffs.zeta_prime(tau)
    # separable time parts: smooth plateaus inside the cutoff band
    at = np.cos(np.pi * t / (2.0 * cutoffs.t1))
    dat = -np.pi / (2.0 * cutoffs.t1) * np.sin(np.pi * t / (2.0 * cutoffs.t1))
    bt = np.cos(np.pi * (tau - cutoffs.tau_hat / 2.0) / (2.0 * cutoffs.tau1))
    dbt = -np.pi / (2.0 * cutoffs.tau1) * np.sin(
        np.pi * (tau - cutoffs.tau_hat / 2.0) / (2.0 * cutoffs.tau1))

    g, dg, d2g = profile(y), dprofile(y), d2profile(y)
    d2p = weight.d2psi(y)
    atil = a_tilde(y, k, beta, n)
    btil = b_tilde(y, beta, n)
    e2 = np.exp(-2.0 * y)

    cz = np.einsum("i,j->ij", chi * at, zet * bt)
    meas = np.einsum("i,j->ij", wt, wtau)

    # left side: j = 0 carries beta^2 + k^2, j = 1 carries the flat weight
    v0 = np.einsum("ij,k->ijk", cz, g)
    v1 = np.einsum("ij,k->ijk", cz, dg)
    mode_w = (1.0 + d2p)[None, None, :]
    left0 = (beta ** 2 + k ** 2) * np.sum(mode_w * v0 ** 2
                                          * meas[:, :, None] * wy)
    left1 = np.sum(mode_w * v1 ** 2 * meas[:, :, None] * wy)
    left = float(left0 + left1)

    # right side
    second = d2g - btil * dg + atil * g
    v_t = np.einsum("i,j,k->ijk", dat, bt, g)
    v_tau = np.einsum("i,j,k->ijk", at, dbt, g)
    core = (np.einsum("ij,k->ijk", cz, second)
            - e2[None, None, :] * np.einsum("ij,ijk->ijk",
                                            np.einsum("i,j->ij", chi, zet),
                                            v_t + v_tau))
    r1 = np.sum(core ** 2 * meas[:, :, None] * wy)
    edge_t = np.einsum("i,j,k->ijk", dchi * at, zet * bt, e2 * g)
    edge_tau = np.einsum("i,j,k->ijk", chi * at, dzet * bt, e2 * g)
    r2 = np.sum(edge_t ** 2 * meas[:, :, None] * wy)
    r3 = np.sum(edge_tau ** 2 * meas[:, :, None] * wy)
    right = float(r1 + r2 + r3)
    return {"k": k, "beta": beta, "left": left, "right": right,
            "ratio": left / right if right > 0 else np.inf}
