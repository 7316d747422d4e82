"""Heat kernel, heat semigroup, and the evolution semigroup on space-time
fields (spatial smoothing combined with a backward time shift).

All operators act through the dense spectral decomposition of the elliptic
operator; exponential factors are cached per requested time lag.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .grid import BoxGrid, SpectralDecomposition, TimeGrid


@dataclass
class SpaceTimeField:
    """Samples u[t_i, node] on TimeGrid x BoxGrid.

    Values for t <= -T are structurally zero: storage starts at -T + dt.
    ``past_fn``, when set, overrides the vanishing-past convention in tests
    (it maps a time to a spatial slice and is used for t <= -T lookups).
    """

    grid: BoxGrid
    timegrid: TimeGrid
    values: np.ndarray
    metadata: dict = dc_field(default_factory=dict)
    past_fn: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        expect = (self.timegrid.num_steps, self.grid.num_nodes)
        if self.values.shape != expect:
            raise ValueError(f"field shape {self.values.shape} != {expect}")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def copy_with(self, values: np.ndarray, **meta) -> "SpaceTimeField":
        md = dict(self.metadata)
        md.update(meta)
        return SpaceTimeField(self.grid, self.timegrid, values, md, self.past_fn)

    def sample_shifted(self, tau: float) -> np.ndarray:
        """u(t_i - tau, .) for every stored t_i.  Times before the window
        start are exactly zero (or taken from ``past_fn``); interior values
        use cubic Lagrange interpolation, which is exact on the grid and
        O(dt^4) between nodes."""
        tg = self.timegrid
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        nt = tg.num_steps
        nn = self.grid.num_nodes
        # fractional index of t_i - tau; index j corresponds to t = -T + j dt
        s = np.arange(1, nt + 1) - tau / tg.dt

        if self.past_fn is not None:
            out = np.zeros((nt, nn), dtype=np.result_type(self.values.dtype,
                                                          np.float64))
            ext = np.vstack([np.zeros((1, nn), dtype=self.values.dtype),
                             self.values])
            lo = np.floor(s).astype(int)
            frac = s - lo
            inside = lo >= 0
            li = np.clip(lo, 0, nt - 1)
            hi = np.clip(lo + 1, 0, nt)
            out[inside] = ((1.0 - frac[inside, None]) * ext[li[inside]]
                           + frac[inside, None] * ext[hi[inside]])
            times = tg.times - tau
            for i in np.flatnonzero(~inside):
                out[i] = self.past_fn(times[i])
            edge = inside & (lo == 0)
            for i in np.flatnonzero(edge):
                out[i] = ((1.0 - frac[i]) * self.past_fn(-tg.horizon)
                          + frac[i] * ext[1])
            return out

        # two leading zero rows extend the exact vanishing past; row j + 2
        # holds u(-T + j dt)
        ext = np.vstack([np.zeros((2, nn), dtype=self.values.dtype),
                         np.zeros((1, nn), dtype=self.values.dtype),
                         self.values])
        out = np.zeros((nt, nn), dtype=self.values.dtype)
        inside = s >= 0.0
        base = np.minimum(np.floor(s).astype(int) - 1, nt - 3)
        x = s - base
        b = base + 2
        xi = x[inside][:, None]
        bi = b[inside]
        w0 = -(xi - 1) * (xi - 2) * (xi - 3) / 6.0
        w1 = xi * (xi - 2) * (xi - 3) / 2.0
        w2 = -xi * (xi - 1) * (xi - 3) / 2.0
        w3 = xi * (xi - 1) * (xi - 2) / 6.0
        out[inside] = (w0 * ext[bi] + w1 * ext[bi + 1]
                       + w2 * ext[bi + 2] + w3 * ext[bi + 3])
        return out


def field_from_function(grid: BoxGrid, timegrid: TimeGrid, fn,
                        past_fn=None) -> SpaceTimeField:
    """Sample u(t, x) = fn(t, nodes) on the stored window."""
    vals = np.stack([np.asarray(fn(t, grid.nodes)) for t in timegrid.times])
    return SpaceTimeField(grid, timegrid, vals, past_fn=past_fn)


@dataclass
class SemigroupHandle:
    """Heat semigroup P_tau = Phi diag(exp(-lam tau)) Phi^T W, with cached
    exponential factors per distinct tau."""

    decomp: SpectralDecomposition
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def factors(self, tau: float) -> np.ndarray:
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        key = float(tau)
        got = self._cache.get(key)
        if got is None:
            got = np.exp(-self.decomp.lam * tau)
            if len(self._cache) < 4096:
                self._cache[key] = got
        return got


def semigroup_apply(handle: SemigroupHandle, g: np.ndarray, tau: float) -> np.ndarray:
    """P_tau g: contraction in the mass-weighted norm, identity at tau = 0."""
    dec = handle.decomp
    c = dec.to_modes(g)
    c = c * handle.factors(tau).reshape((-1,) + (1,) * (c.ndim - 1))
    return dec.from_modes(c)


def kernel_eval(handle: SemigroupHandle, xi: int, zi: int, tau: float) -> float:
    """Heat kernel p(x, z, tau) between the grid nodes with indices xi, zi."""
    if tau <= 0:
        raise ValueError("kernel is distributional at tau = 0; need tau > 0")
    dec = handle.decomp
    return float(np.sum(handle.factors(tau) * dec.phi[xi] * dec.phi[zi]))


def kernel_row(handle: SemigroupHandle, xi: int, tau: float) -> np.ndarray:
    """p(x_i, ., tau) as a spatial field."""
    if tau <= 0:
        raise ValueError("kernel is distributional at tau = 0; need tau > 0")
    dec = handle.decomp
    return (dec.phi * handle.factors(tau)) @ dec.phi[xi]


def evolution_apply(handle: SemigroupHandle, u: SpaceTimeField,
                    tau: float) -> SpaceTimeField:
    """(P^H_tau u)(t, .) = P_tau[u(t - tau, .)]."""
    shifted = u.sample_shifted(tau)
    dec = handle.decomp
    out = dec.from_modes(handle.factors(tau)[:, None] * dec.to_modes(shifted.T)).T
    return u.copy_with(out)


def gaussian_free_kernel(d2: np.ndarray, tau: float, n: int) -> np.ndarray:
    """Free-space heat kernel (4 pi tau)^(-n/2) exp(-|x-z|^2 / 4 tau)."""
    return (4.0 * np.pi * tau) ** (-n / 2.0) * np.exp(-d2 / (4.0 * tau))
