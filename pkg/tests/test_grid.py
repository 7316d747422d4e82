"""Grids, conductivities, region masks, elliptic operator, eigenpairs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracparab.grid import (BoxGrid, GridError, TimeGrid, assemble_elliptic,
                            build_conductivity, build_grid,
                            conductivity_from_matrices, region_masks,
                            spectral_decompose)

OMEGA = {"kind": "ball", "radius": 0.35}
WSET = {"kind": "ball", "center": [0.65], "radius": 0.15}


def test_box_grid_basic():
    g = BoxGrid(2, 1.0, 17)
    assert g.h > 0
    assert g.num_nodes == 17 ** 2
    assert g.nodes.shape == (289, 2)
    # lumped trapezoid weights integrate constants exactly
    assert np.isclose(g.quadrature_weights().sum(), 4.0)


def test_time_grid_window_and_padding():
    tg = TimeGrid(1.0, 1.0, 0.0625)
    t = tg.times
    assert t[0] > -tg.horizon and np.isclose(t[-1], tg.t_end)
    assert np.allclose(np.diff(t), tg.dt)
    assert tg.t_pad >= 4.0 * (tg.t_end + tg.horizon) - 1e-12


def test_time_grid_rejects_bad_inputs():
    with pytest.raises(GridError):
        TimeGrid(1.0, 0.5, 0.1)           # T_end < T
    with pytest.raises(GridError):
        TimeGrid(1.0, 1.0, -0.1)
    with pytest.raises(GridError):
        TimeGrid(1.0, 1.0, 0.1, pad_factor=2)
    with pytest.raises(GridError):
        build_grid(3, 1.0, 16, 1.0, 1.0, 0.1)


def test_conductivity_identity_outside_omega(small_1d):
    grid, _, masks, _, _ = small_1d
    cond = build_conductivity(grid, "scalar-bump", {"amplitude": 0.5},
                              masks.omega)
    eye = np.eye(1)
    outside = ~masks.omega
    assert np.array_equal(cond.sig[outside], np.broadcast_to(eye, (outside.sum(), 1, 1)))
    lo, hi = cond.eigen_range()
    assert cond.c0 <= lo and hi <= 1.0 / cond.c0


def test_conductivity_rejects_nonelliptic():
    grid = BoxGrid(1, 1.0, 16)
    sig = np.zeros((16, 1, 1))
    with pytest.raises(GridError):
        conductivity_from_matrices(grid, sig)


def test_conductivity_rejects_asymmetric():
    grid = BoxGrid(2, 1.0, 9)
    sig = np.broadcast_to(np.array([[1.0, 0.3], [0.0, 1.0]]),
                          (81, 2, 2)).copy()
    with pytest.raises(GridError):
        conductivity_from_matrices(grid, sig)


@settings(max_examples=25, deadline=None)
@given(amp=st.floats(0.05, 2.0), width=st.floats(0.02, 0.3))
def test_scalar_bump_ellipticity_bounds(amp, width):
    grid = BoxGrid(1, 1.0, 32)
    cond = build_conductivity(grid, "scalar-bump",
                              {"amplitude": amp, "width": width})
    # random unit directions stay inside the ellipticity corridor
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((100, 1))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    q = np.einsum("ki,nij,kj->nk", xi, cond.sig, xi)
    assert np.all(q >= cond.c0 - 1e-12)
    assert np.all(q <= 1.0 / cond.c0 + 1e-12)


def test_region_masks_partition_and_normals(small_1d):
    grid, _, masks, _, _ = small_1d
    assert not (masks.omega & masks.w).any()
    assert np.array_equal(masks.omega_e, ~masks.omega)
    assert masks.sigma_band.sum() == len(masks.sigma_idx) > 0
    assert np.allclose(np.linalg.norm(masks.normals, axis=1), 1.0)
    assert masks.w[masks.w_idx].all() and not masks.omega[masks.w_idx].any()


def test_region_masks_2d_partition():
    grid = BoxGrid(2, 1.0, 32)
    masks = region_masks(grid, {"kind": "box", "half_width": [0.3]},
                         {"kind": "annulus", "center": [0, 0],
                          "r_inner": 0.6, "r_outer": 0.8,
                          "theta_range": [-0.5, 0.5]})
    assert not (masks.omega & masks.w).any()
    assert np.allclose(np.linalg.norm(masks.normals, axis=1), 1.0)


def test_region_masks_reject_overlap_and_margin():
    grid = BoxGrid(1, 1.0, 32)
    with pytest.raises(GridError):
        region_masks(grid, {"kind": "ball", "radius": 0.5},
                     {"kind": "ball", "center": [0.4], "radius": 0.2})
    with pytest.raises(GridError):   # Omega too close to the box boundary
        region_masks(grid, {"kind": "ball", "radius": 0.9},
                     {"kind": "ball", "center": [0.95], "radius": 0.02})


def test_elliptic_operator_symmetric_psd_constants(small_1d):
    grid, _, _, cond, dec = small_1d
    op = dec.operator
    k = op.stiffness.toarray()
    assert np.abs(k - k.T).max() <= 1e-12 * np.abs(k).max()
    ev = np.linalg.eigvalsh(0.5 * (k + k.T))
    assert ev.min() >= -1e-10 * max(ev.max(), 1.0)
    assert np.abs(k @ np.ones(grid.num_nodes)).max() <= 1e-10


def test_elliptic_operator_2d_laplacian_eigenvalue():
    # sigma = I on [-1,1]^2: lowest nonzero Neumann eigenvalue is (pi/2)^2
    grid = BoxGrid(2, 1.0, 24)
    cond = build_conductivity(grid, "identity")
    dec = spectral_decompose(assemble_elliptic(grid, cond))
    assert dec.lam[0] == 0.0
    assert abs(dec.lam[1] - (np.pi / 2.0) ** 2) < 2e-2


def test_spectral_decomposition_orthonormal_roundtrip(small_1d, rng):
    _, _, _, _, dec = small_1d
    gram = dec.phi.T @ (dec.phi * dec.weights[:, None])
    assert np.abs(gram - np.eye(dec.num_modes)).max() <= 1e-10
    u = rng.standard_normal(dec.grid.num_nodes)
    back = dec.from_modes(dec.to_modes(u))
    assert np.linalg.norm(back - u) <= 1e-10 * np.linalg.norm(u)
    # operator reconstruction
    recon = (dec.phi * dec.lam) @ (dec.phi.T * dec.weights[None, :])
    dense = dec.operator.dense()
    assert np.linalg.norm(recon - dense) <= 1e-8 * np.linalg.norm(dense)
