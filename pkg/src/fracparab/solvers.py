"""Forward solvers: the nonlocal exterior-value problem for the fractional
operator (matrix-free GMRES on the interior rows) and the local parabolic
initial-boundary problem (theta scheme), together with extraction of the
nonlocal and local Cauchy data pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (BoxGrid, ConductivityField, RegionMasks, SpectralDecomposition,
                   TimeGrid)
from .semigroup import SpaceTimeField
from .fractional import FractionalOrder, hs_apply_spectral, symbol


class SolverError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


# ---------------------------------------------------------------------------
# exterior data


@dataclass(frozen=True)
class ExteriorData:
    """Exterior Dirichlet datum: a space-time field supported on the
    measurement-set closure and vanishing for t <= -T."""

    field: SpaceTimeField
    smoothness: str = "poly-bump"

    def __post_init__(self):
        masks = self.field.metadata.get("masks")
        if masks is not None:
            vals = self.field.values
            if np.any(vals[:, masks.omega] != 0):
                raise ValueError("exterior datum must vanish on Omega-bar")
            outside = ~(masks.w if masks.w2 is None else (masks.w | masks.w2))
            outside &= ~masks.omega
            if np.any(vals[:, outside] != 0):
                raise ValueError("exterior datum must be supported on W-bar")


def poly_bump(r: np.ndarray, order: int = 4) -> np.ndarray:
    """(1 - r^2)^order on |r| < 1, zero outside: a C^(order-1) bump."""
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, np.maximum(1.0 - r ** 2, 0.0) ** order, 0.0)


def bump_exterior_data(grid: BoxGrid, timegrid: TimeGrid, masks: RegionMasks,
                       center, width: float, t_center: float = 0.0,
                       t_width: float = 0.5, order: int = 4,
                       amplitude: float = 1.0,
                       use_w2: bool = False) -> ExteriorData:
    """Separable polynomial bump amplitude * B((x-c)/width) * B((t-tc)/tw),
    truncated to the requested measurement set."""
    mask = masks.w2 if use_w2 else masks.w
    if mask is None:
        raise ValueError("requested measurement set is not defined")
    c = np.atleast_1d(np.asarray(center, dtype=float))
    r = np.linalg.norm(grid.nodes - c[None, :], axis=1) / width
    prof = poly_bump(r, order) * mask
    tprof = poly_bump((timegrid.times - t_center) / t_width, order)
    vals = amplitude * tprof[:, None] * prof[None, :]
    fld = SpaceTimeField(grid, timegrid, vals, {"masks": masks})
    return ExteriorData(fld)


# ---------------------------------------------------------------------------
# Cauchy data


@dataclass(frozen=True)
class CauchyDataLocal:
    """Lateral Dirichlet trace and conormal flux on the Sigma band."""

    trace: np.ndarray          # (nt, num_sigma)
    flux: np.ndarray           # (nt, num_sigma)
    sigma_idx: np.ndarray

    def __post_init__(self):
        if self.trace.shape != self.flux.shape:
            raise ValueError("trace/flux shape mismatch")
        if self.trace.shape[1] != len(self.sigma_idx):
            raise ValueError("Sigma index count mismatch")
        if not np.all(np.isfinite(self.flux)):
            raise ValueError("non-finite conormal flux")


@dataclass(frozen=True)
class CauchyDataNonlocal:
    """u on the exterior and H^s u on the measurement set, per time step."""

    exterior_values: np.ndarray   # (nt, num_exterior)
    operator_values: np.ndarray   # (nt, num_w)
    exterior_idx: np.ndarray
    w_idx: np.ndarray


# ---------------------------------------------------------------------------
# nonlocal solve


def _embed(grid, masks, w_flat, nt):
    full = np.zeros((nt, grid.num_nodes))
    full[:, masks.omega] = w_flat.reshape(nt, -1)
    return full


def solve_nonlocal(decomp: SpectralDecomposition, timegrid: TimeGrid,
                   order: FractionalOrder, f: ExteriorData,
                   masks: RegionMasks, tol: float = 1e-8,
                   maxiter: int = 400, restart: int = 60,
                   precond_decomp: SpectralDecomposition | None = None) -> SpaceTimeField:
    """Solve the exterior-value problem: find u with u = f outside Omega-bar,
    u = 0 for t <= -T, and the rows of the discrete fractional operator at
    Omega-bar nodes equal to zero.  Matrix-free restarted GMRES on the
    interior correction w, preconditioned by the inverse symbol
    ((lambda + i rho)^s + eps)^(-1) of the identity-coefficient operator.
    """
    if not masks.omega.any():
        raise SolverError("Omega region is empty")
    grid = f.field.grid
    nt = timegrid.num_steps
    n_in = int(masks.omega.sum())
    size = nt * n_in

    def hs_rows(full_vals):
        fld = SpaceTimeField(grid, timegrid, full_vals)
        out = hs_apply_spectral(decomp, timegrid, fld, order)
        return out.values[:, masks.omega]

    def matvec(w_flat):
        return hs_rows(_embed(grid, masks, w_flat, nt)).ravel()

    pdec = precond_decomp if precond_decomp is not None else decomp
    eps = 1e-8
    rho = timegrid.frequencies
    inv_symbol = 1.0 / (symbol(pdec.lam[:, None], rho[None, :], order.s) + eps)

    def precond(r_flat):
        full = _embed(grid, masks, r_flat, nt)
        chat = np.fft.fft(pdec.to_modes(full.T), n=timegrid.num_padded, axis=1)
        chat *= inv_symbol
        coeff = np.fft.ifft(chat, axis=1)[:, :nt]
        return pdec.from_modes(coeff).T.real[:, masks.omega].ravel()

    rhs = -hs_rows(f.field.values).ravel()
    A = spla.LinearOperator((size, size), matvec=matvec, dtype=float)
    M = spla.LinearOperator((size, size), matvec=precond, dtype=float)

    iters = [0]

    def cb(_):
        iters[0] += 1

    w, info = spla.gmres(A, rhs, rtol=tol, atol=0.0, restart=restart,
                         maxiter=maxiter, M=M, callback=cb,
                         callback_type="pr_norm")
    if info != 0:
        res = np.linalg.norm(matvec(w) - rhs) / max(np.linalg.norm(rhs), 1e-300)
        raise SolverError(f"GMRES did not converge after {info} iterations "
                          f"(relative residual {res:.3e})", residual=res)

    u_vals = f.field.values + _embed(grid, masks, w, nt)
    u = SpaceTimeField(grid, timegrid, u_vals,
                       {"masks": masks, "gmres_iterations": iters[0]})
    hs_f = np.linalg.norm(hs_rows(f.field.values))
    res = np.linalg.norm(hs_rows(u_vals)) / max(hs_f, 1e-300)
    return u.copy_with(u_vals, interior_residual=float(res))


# ---------------------------------------------------------------------------
# local solve


def solve_local(grid: BoxGrid, cond: ConductivityField, masks: RegionMasks,
                timegrid: TimeGrid, g: np.ndarray, F: np.ndarray,
                theta: float = 0.5) -> SpaceTimeField:
    """Theta scheme for d_t v + L v = F on the Omega-bar nodes with Dirichlet
    values g pinned on the Sigma band and v(-T) = 0.

    ``g`` has shape (nt, num_sigma), ``F`` shape (nt, num_nodes) (only the
    Omega values are used).  theta = 1/2 is Crank-Nicolson, theta = 1 is
    implicit Euler.
    """
    if not 0.5 <= theta <= 1.0:
        raise ValueError("theta must lie in [1/2, 1]")
    from .grid import assemble_elliptic

    op = assemble_elliptic(grid, cond)
    nt = timegrid.num_steps
    dt = timegrid.dt
    a_full = sp.diags(1.0 / op.weights) @ op.stiffness      # L = D^-1 K

    inner = masks.omega & ~masks.sigma_band
    ii = np.flatnonzero(inner)
    bi = masks.sigma_idx
    if len(ii) == 0:
        raise SolverError("no interior nodes after pinning the Sigma band")
    A_ii = a_full[ii][:, ii].tocsc()
    A_ib = a_full[ii][:, bi].tocsc()
    n_i = len(ii)
    lhs = (sp.identity(n_i, format="csc") + theta * dt * A_ii)
    lu = spla.splu(lhs)

    v = np.zeros((nt, grid.num_nodes))
    vi = np.zeros(n_i)
    gb_prev = np.zeros(len(bi))
    F_prev = np.zeros(n_i)
    max_l2 = 0.0
    w_i = op.weights[ii]
    for m in range(nt):
        gb = g[m]
        Fi = F[m][ii]
        rhs = (vi - (1.0 - theta) * dt * (A_ii @ vi + A_ib @ gb_prev)
               - theta * dt * (A_ib @ gb)
               + dt * (theta * Fi + (1.0 - theta) * F_prev))
        vi = lu.solve(rhs)
        if not np.all(np.isfinite(vi)):
            raise SolverError(f"linear solve failed at step {m}")
        v[m, ii] = vi
        v[m, bi] = gb
        gb_prev, F_prev = gb, Fi
        max_l2 = max(max_l2, float(np.sqrt(np.sum(w_i * vi ** 2))))

    return SpaceTimeField(grid, timegrid, v,
                          {"masks": masks, "theta": theta,
                           "max_l2_over_time": max_l2})


# ---------------------------------------------------------------------------
# Cauchy-data extraction


def _one_sided_gradient(grid: BoxGrid, masks: RegionMasks,
                        vals: np.ndarray) -> np.ndarray:
    """Spatial gradient at Sigma nodes, second order, one-sided along any
    axis whose outward neighbor leaves Omega-bar.  ``vals`` is (nt, nn);
    returns (nt, num_sigma, dim)."""
    n = grid.dimension
    nx = grid.nodes_per_axis
    h = grid.h
    omega = masks.omega
    strides = [nx ** (n - 1 - d) for d in range(n)]

    def shift_ok(idx, d, step):
        coord = (idx // strides[d]) % nx
        tgt = coord + step
        if tgt < 0 or tgt >= nx:
            return None
        j = idx + step * strides[d]
        return j if omega[j] else None

    grad = np.empty((vals.shape[0], len(masks.sigma_idx), n))
    for si, idx in enumerate(masks.sigma_idx):
        for d in range(n):
            p1 = shift_ok(idx, d, 1)
            m1 = shift_ok(idx, d, -1)
            if p1 is not None and m1 is not None:
                grad[:, si, d] = (vals[:, p1] - vals[:, m1]) / (2 * h)
            elif p1 is None and m1 is not None:
                m2 = shift_ok(idx, d, -2)
                if m2 is None:
                    raise SolverError(
                        f"Sigma node {idx} lacks two interior neighbors on axis {d}")
                grad[:, si, d] = (3 * vals[:, idx] - 4 * vals[:, m1]
                                  + vals[:, m2]) / (2 * h)
            elif m1 is None and p1 is not None:
                p2 = shift_ok(idx, d, 2)
                if p2 is None:
                    raise SolverError(
                        f"Sigma node {idx} lacks two interior neighbors on axis {d}")
                grad[:, si, d] = (-3 * vals[:, idx] + 4 * vals[:, p1]
                                  - vals[:, p2]) / (2 * h)
            else:
                raise SolverError(
                    f"Sigma node {idx} has no interior neighbors on axis {d}")
    return grad


def extract_local_cauchy(v: SpaceTimeField, cond: ConductivityField,
                         masks: RegionMasks) -> CauchyDataLocal:
    """Dirichlet trace and conormal flux sigma grad(v) . nu on Sigma."""
    vals = np.asarray(v.values, dtype=float)
    grad = _one_sided_gradient(v.grid, masks, vals)
    sig = cond.sig[masks.sigma_idx]                      # (ns, n, n)
    flux_vec = np.einsum("sij,tsj->tsi", sig, grad)
    flux = np.einsum("tsi,si->ts", flux_vec, masks.normals)
    trace = vals[:, masks.sigma_idx]
    return CauchyDataLocal(trace, flux, masks.sigma_idx)


def extract_nonlocal_cauchy(u: SpaceTimeField, decomp: SpectralDecomposition,
                            timegrid: TimeGrid, order: FractionalOrder,
                            masks: RegionMasks) -> CauchyDataNonlocal:
    """(u on the exterior, H^s u on W) with the operator applied spectrally."""
    hsu = hs_apply_spectral(decomp, timegrid, u, order)
    return CauchyDataNonlocal(
        exterior_values=u.values[:, masks.omega_e],
        operator_values=hsu.values[:, masks.w],
        exterior_idx=np.flatnonzero(masks.omega_e),
        w_idx=masks.w_idx)
