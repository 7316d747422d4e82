"""Spatial/temporal grids, conductivity fields, region masks, and the
divergence-form elliptic operator with its dense eigendecomposition.

The ambient space is truncated to a box [-X_max, X_max]^n (n = 1 or 2) with
reflecting (zero-flux) boundary, so the discrete heat kernel conserves mass
exactly.  The elliptic operator -div(sigma grad) is assembled with bilinear
(Q1) elements and a lumped mass matrix: this keeps the matrix symmetric
positive semidefinite for arbitrary symmetric elliptic tensor fields,
including the full matrices produced by conductivity push-forwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    """Invalid grid, region, or conductivity configuration."""


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class BoxGrid:
    """Uniform tensor grid on the box [-X_max, X_max]^n, n in {1, 2}."""

    dimension: int
    x_max: float
    nodes_per_axis: int

    @property
    def h(self) -> float:
        return 2.0 * self.x_max / (self.nodes_per_axis - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.x_max, self.x_max, self.nodes_per_axis)

    @property
    def num_nodes(self) -> int:
        return self.nodes_per_axis ** self.dimension

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (num_nodes, dimension), C-order raveling."""
        ax = self.axis
        if self.dimension == 1:
            return ax[:, None]
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def quadrature_weights(self) -> np.ndarray:
        """Lumped trapezoid weights: h^n interior, halved on each box face."""
        w1 = np.full(self.nodes_per_axis, self.h)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        if self.dimension == 1:
            return w1
        return np.outer(w1, w1).ravel()


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time samples on (-T, T_end] with a zero-padded Fourier window.

    Fields are identically zero for t <= -T; storage starts at -T + dt, and
    the value at -T itself is structurally zero.
    """

    horizon: float          # T
    t_end: float            # T_end >= T
    dt: float
    pad_factor: int = 4     # T_pad = pad_factor * (T_end + T)

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise GridError("time grid needs dt > 0 and T > 0")
        if self.t_end < self.horizon:
            raise GridError("T_end must be >= T")
        if self.pad_factor < 4:
            raise GridError("padded window must be at least 4*(T_end + T)")

    @property
    def num_steps(self) -> int:
        return int(round((self.t_end + self.horizon) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return -self.horizon + self.dt * np.arange(1, self.num_steps + 1)

    @property
    def num_padded(self) -> int:
        return self.pad_factor * self.num_steps

    @property
    def t_pad(self) -> float:
        return self.num_padded * self.dt

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies rho_m of the padded-window Fourier transform."""
        return 2.0 * np.pi * np.fft.fftfreq(self.num_padded, d=self.dt)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.t_end, self.dt / factor, self.pad_factor)


def build_grid(n, x_max, n_x, t, t_end, dt) -> tuple[BoxGrid, TimeGrid]:
    if n not in (1, 2):
        raise GridError(f"dimension must be 1 or 2, got {n}")
    if n_x < 8:
        raise GridError("need at least 8 nodes per axis")
    if x_max <= 0:
        raise GridError("x_max must be positive")
    return BoxGrid(n, float(x_max), int(n_x)), TimeGrid(float(t), float(t_end), float(dt))


# ---------------------------------------------------------------------------
# conductivity fields


@dataclass(frozen=True)
class ConductivityField:
    """Node-wise symmetric matrix sigma(x), identity outside Omega-bar.

    ``sig`` has shape (num_nodes, n, n).  ``c0`` is the ellipticity constant:
    all eigenvalues of sigma(x) lie in [c0, 1/c0].
    """

    grid: BoxGrid
    sig: np.ndarray
    c0: float
    lipschitz: float

    def eigen_range(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.sig)
        return float(ev.min()), float(ev.max())


def _validate_sigma(grid: BoxGrid, sig: np.ndarray) -> tuple[float, float]:
    if sig.shape != (grid.num_nodes, grid.dimension, grid.dimension):
        raise GridError(f"sigma has wrong shape {sig.shape}")
    if not np.allclose(sig, np.swapaxes(sig, 1, 2), atol=1e-12):
        raise GridError("sigma must be symmetric at every node")
    ev = np.linalg.eigvalsh(sig)
    lo, hi = float(ev.min()), float(ev.max())
    if lo <= 0:
        raise GridError(f"sigma not elliptic: min eigenvalue {lo}")
    return lo, hi


def _estimate_lipschitz(grid: BoxGrid, sig: np.ndarray) -> float:
    n = grid.nodes_per_axis
    if grid.dimension == 1:
        d = np.abs(np.diff(sig, axis=0)).max() / grid.h if n > 1 else 0.0
        return float(d)
    s = sig.reshape(n, n, grid.dimension, grid.dimension)
    dx = np.abs(np.diff(s, axis=0)).max() if n > 1 else 0.0
    dy = np.abs(np.diff(s, axis=1)).max() if n > 1 else 0.0
    return float(max(dx, dy) / grid.h)


def build_conductivity(grid: BoxGrid, family: str, params: dict | None = None,
                       omega_mask: np.ndarray | None = None) -> ConductivityField:
    """Build a conductivity field from a named family.

    Families: ``identity``; ``scalar-bump`` (gamma(x) * I with a smooth bump
    restricted to Omega, = 1 outside); ``anisotropic`` (diag(1 + bump, 1),
    identity outside Omega); ``matrix`` (explicit per-node matrices in
    params["sig"]).
    """
    params = params or {}
    nn = grid.num_nodes
    eye = np.broadcast_to(np.eye(grid.dimension), (nn, grid.dimension, grid.dimension)).copy()

    if family == "identity":
        sig = eye
    elif family in ("scalar-bump", "anisotropic"):
        amp = float(params.get("amplitude", 0.5))
        width = float(params.get("width", 0.1))
        center = np.asarray(params.get("center", np.zeros(grid.dimension)), dtype=float)
        r2 = ((grid.nodes - center) ** 2).sum(axis=1)
        bump = amp * np.exp(-r2 / width)
        if omega_mask is not None:
            bump = np.where(omega_mask, bump, 0.0)
        sig = eye
        if family == "scalar-bump":
            for d in range(grid.dimension):
                sig[:, d, d] += bump
        else:
            sig[:, 0, 0] += bump
    elif family == "matrix":
        sig = np.asarray(params["sig"], dtype=float)
    else:
        raise GridError(f"unknown conductivity family {family!r}")

    lo, hi = _validate_sigma(grid, sig)
    c0 = min(lo, 1.0 / hi)
    c0 = min(c0, 0.999999)
    return ConductivityField(grid, sig, c0, _estimate_lipschitz(grid, sig))


def conductivity_from_matrices(grid: BoxGrid, sig: np.ndarray) -> ConductivityField:
    return build_conductivity(grid, "matrix", {"sig": np.asarray(sig, dtype=float)})


# ---------------------------------------------------------------------------
# region masks


def _region_mask(grid: BoxGrid, spec: dict) -> np.ndarray:
    kind = spec["kind"]
    nodes = grid.nodes
    center = np.asarray(spec.get("center", np.zeros(grid.dimension)), dtype=float)
    if kind == "ball":
        r = float(spec["radius"])
        return np.linalg.norm(nodes - center, axis=1) <= r + 1e-12
    if kind == "box":
        half = np.asarray(spec["half_width"], dtype=float) * np.ones(grid.dimension)
        return np.all(np.abs(nodes - center) <= half + 1e-12, axis=1)
    if kind == "annulus":
        r = np.linalg.norm(nodes - center, axis=1)
        th = np.arctan2(nodes[:, 1], nodes[:, 0]) if grid.dimension == 2 else np.zeros(len(nodes))
        ok = (r >= spec["r_inner"] - 1e-12) & (r <= spec["r_outer"] + 1e-12)
        if "theta_range" in spec:
            lo, hi = spec["theta_range"]
            ok &= (th >= lo) & (th <= hi)
        return ok
    raise GridError(f"unknown region kind {kind!r}")


def _neighbors(grid: BoxGrid, idx: int) -> list[int]:
    n = grid.nodes_per_axis
    if grid.dimension == 1:
        return [j for j in (idx - 1, idx + 1) if 0 <= j < n]
    i, j = divmod(idx, n)
    out = []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        a, b = i + di, j + dj
        if 0 <= a < n and 0 <= b < n:
            out.append(a * n + b)
    return out


@dataclass(frozen=True)
class RegionMasks:
    """Boolean node masks for Omega, the exterior, the measurement set W,
    and the boundary band Sigma with outward unit normals."""

    grid: BoxGrid
    omega: np.ndarray          # closed interior region Omega-bar
    omega_e: np.ndarray        # exterior (complement of Omega-bar)
    w: np.ndarray              # measurement set, subset of omega_e
    sigma_band: np.ndarray     # Omega-bar nodes adjacent to the exterior
    normals: np.ndarray        # (num_sigma, dim) unit outward normals
    sigma_idx: np.ndarray      # node indices of the Sigma band
    w2: np.ndarray | None = None

    @property
    def omega_idx(self) -> np.ndarray:
        return np.flatnonzero(self.omega)

    @property
    def w_idx(self) -> np.ndarray:
        return np.flatnonzero(self.w)


def region_masks(grid: BoxGrid, omega_spec: dict, w_spec: dict,
                 w2_spec: dict | None = None) -> RegionMasks:
    omega = _region_mask(grid, omega_spec)
    w = _region_mask(grid, w_spec)
    if not omega.any():
        raise GridError("Omega region contains no grid nodes")
    if not w.any():
        raise GridError("W region contains no grid nodes")
    if (omega & w).any():
        raise GridError("Omega-bar and W-bar overlap")

    # margin >= 4h between Omega and the truncation box
    h = grid.h
    onodes = grid.nodes[omega]
    if np.abs(onodes).max() > grid.x_max - 4 * h + 1e-12:
        raise GridError("Omega must keep a margin of at least 4h from the box boundary")
    wnodes = grid.nodes[w]
    if np.abs(wnodes).max() >= grid.x_max - 1e-12:
        raise GridError("W must not touch the box boundary")

    omega_e = ~omega
    # adjacency check: disjoint closures need at least one cell of separation
    oidx = np.flatnonzero(omega)
    for i in oidx:
        for j in _neighbors(grid, i):
            if w[j]:
                raise GridError("Omega-bar and W-bar closures are not disjoint")

    sig_list, nrm_list = [], []
    for i in oidx:
        dirs = []
        for j in _neighbors(grid, i):
            if omega_e[j]:
                dirs.append(grid.nodes[j] - grid.nodes[i])
        if dirs:
            v = np.sum(dirs, axis=0)
            norm = np.linalg.norm(v)
            if norm == 0.0:
                v = dirs[0]
                norm = np.linalg.norm(v)
            sig_list.append(i)
            nrm_list.append(v / norm)
    sigma_band = np.zeros(grid.num_nodes, dtype=bool)
    sigma_band[sig_list] = True
    w2 = _region_mask(grid, w2_spec) if w2_spec is not None else None
    return RegionMasks(grid, omega, omega_e, w, sigma_band,
                       np.asarray(nrm_list), np.asarray(sig_list, dtype=int), w2)


# ---------------------------------------------------------------------------
# elliptic operator (Q1 finite elements, lumped mass, zero-flux boundary)


@dataclass(frozen=True)
class EllipticOperator:
    """Sparse stiffness matrix K for -div(sigma grad) with reflecting
    boundary, plus lumped quadrature weights.  The operator acting on nodal
    values is L = diag(w)^-1 K; K itself is symmetric PSD with constants in
    its kernel."""

    grid: BoxGrid
    stiffness: sp.csr_matrix
    weights: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        """L v = diag(w)^-1 K v, vectorized over trailing axes."""
        flat = v.reshape(v.shape[0], -1)
        out = self.stiffness @ flat
        out /= self.weights[:, None]
        return out.reshape(v.shape)

    def dense(self) -> np.ndarray:
        return self.stiffness.toarray() / self.weights[:, None]


def assemble_elliptic(grid: BoxGrid, sigma: ConductivityField) -> EllipticOperator:
    if grid.dimension == 1:
        return _assemble_1d(grid, sigma)
    return _assemble_2d(grid, sigma)


def _assemble_1d(grid: BoxGrid, sigma: ConductivityField) -> EllipticOperator:
    n = grid.nodes_per_axis
    h = grid.h
    # element conductivity = arithmetic mean of endpoint values
    s = sigma.sig[:, 0, 0]
    ke = 0.5 * (s[:-1] + s[1:]) / h
    rows, cols, vals = [], [], []
    idx = np.arange(n - 1)
    for (a, b, sgn) in ((idx, idx, 1.0), (idx + 1, idx + 1, 1.0),
                        (idx, idx + 1, -1.0), (idx + 1, idx, -1.0)):
        rows.append(a)
        cols.append(b)
        vals.append(sgn * ke)
    k = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return EllipticOperator(grid, k, grid.quadrature_weights())


def _q1_reference_gradients() -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the 4 bilinear shape functions at 2x2 Gauss points on
    the reference square [0,1]^2; returns (grads (4,2,4), gauss weights)."""
    g = 0.5 - 0.5 / np.sqrt(3.0)
    pts = np.array([[g, g], [g, 1 - g], [1 - g, g], [1 - g, 1 - g]])
    grads = np.empty((4, 2, 4))
    for q, (u, v) in enumerate(pts):
        # node order: (0,0), (1,0), (0,1), (1,1) in (xi, eta)
        grads[:, :, q] = [[-(1 - v), -(1 - u)],
                          [(1 - v), -u],
                          [-v, (1 - u)],
                          [v, u]]
    return grads, np.full(4, 0.25)


def _assemble_2d(grid: BoxGrid, sigma: ConductivityField) -> EllipticOperator:
    n = grid.nodes_per_axis
    h = grid.h
    ii, jj = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    base = (ii * n + jj).ravel()
    # element node indices, order (0,0),(1,0),(0,1),(1,1) in (x,y) offsets
    enodes = np.stack([base, base + n, base + 1, base + n + 1], axis=1)

    sig_e = sigma.sig[enodes].mean(axis=1)        # (ne, 2, 2) element average
    grads, gw = _q1_reference_gradients()         # physical grad = ref grad / h
    ne = enodes.shape[0]
    ke = np.zeros((ne, 4, 4))
    for q in range(4):
        g = grads[:, :, q] / h                    # (4, 2)
        sg = np.einsum("eab,jb->eja", sig_e, g)   # (ne, 4, 2)
        ke += gw[q] * np.einsum("ia,eja->eij", g, sg) * h * h

    rows = np.repeat(enodes, 4, axis=1).ravel()
    cols = np.tile(enodes, (1, 4)).ravel()
    k = sp.coo_matrix((ke.ravel(), (rows, cols)),
                      shape=(grid.num_nodes, grid.num_nodes)).tocsr()
    k.sum_duplicates()
    return EllipticOperator(grid, k, grid.quadrature_weights())


# ---------------------------------------------------------------------------
# spectral decomposition


class EigensolverError(RuntimeError):
    """Dense eigendecomposition failed its residual check."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of L = diag(w)^-1 K, orthonormal in the weighted inner
    product: Phi^T diag(w) Phi = I.  lam[0] = 0 with constant eigenvector."""

    grid: BoxGrid
    lam: np.ndarray           # ascending, >= 0
    phi: np.ndarray           # (num_nodes, num_modes)
    weights: np.ndarray
    operator: EllipticOperator = field(repr=False, default=None)

    @property
    def num_modes(self) -> int:
        return self.lam.size

    def to_modes(self, v: np.ndarray) -> np.ndarray:
        """Forward transform: coefficients = Phi^T diag(w) v.

        ``v`` may have trailing axes; the node axis is axis 0.
        """
        flat = v.reshape(v.shape[0], -1) * self.weights[:, None]
        return (self.phi.T @ flat).reshape((self.phi.shape[1],) + v.shape[1:])

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        return (self.phi @ c.reshape(c.shape[0], -1)).reshape(
            (self.phi.shape[0],) + c.shape[1:])

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return np.sum(np.conj(u) * v * self.weights)

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(np.real(self.inner(u, u))))


MAX_DENSE_NODES = 4096


def spectral_decompose(op: EllipticOperator) -> SpectralDecomposition:
    nn = op.grid.num_nodes
    if nn > MAX_DENSE_NODES:
        raise EigensolverError(f"{nn} nodes exceeds the dense desk-scale limit "
                               f"of {MAX_DENSE_NODES}")
    w = op.weights
    rw = 1.0 / np.sqrt(w)
    b = rw[:, None] * op.stiffness.toarray() * rw[None, :]
    b = 0.5 * (b + b.T)
    lam, psi = np.linalg.eigh(b)
    # clamp the eigenvalue round-off of the zero mode (constants)
    lam = np.where(np.abs(lam) < 1e-10 * max(lam.max(), 1.0), 0.0, lam)
    if lam[0] < 0:
        raise EigensolverError(f"negative eigenvalue {lam[0]} after clamping; "
                               f"residual check failed")
    phi = rw[:, None] * psi
    dec = SpectralDecomposition(op.grid, lam, phi, w, op)
    recon = (phi * lam) @ (phi.T * w[None, :])
    dense_l = op.dense()
    res = np.linalg.norm(recon - dense_l) / max(np.linalg.norm(dense_l), 1e-30)
    if res > 1e-8:
        raise EigensolverError(f"eigendecomposition reconstruction residual {res:.3e}")
    return dec
