"""Truncated cylindrical Wiener forcing and the scalar director noise.

The velocity noise is W(t) = sum_j q_j w_j(t) e_j over real solenoidal
Fourier pairs e_j orthonormal in L2, with q_j = (1 + |k|^2)^(-gamma/2).
The director noise is a single scalar Brownian motion eta shared by every
grid point, entering through rotations about the static axis field h.

Increments are drawn from a counter-based generator keyed by
(seed, path_id) with the counter encoding (step, level, slot), so any step
of any path is reproducible in isolation and refined replays of a rejected
step consume disjoint substreams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DirectorField, SpectralGrid, VelocityField

__all__ = ["NoiseModel", "WienerIncrement", "sample_increment", "hs_mass"]

_NORM = 1.0 / (np.pi * np.sqrt(2.0))  # L2-normalizes cos(k.x) on the torus


@dataclass(frozen=True)
class NoiseModel:
    """Noise specification attached to one sample path.

    Parameters
    ----------
    grid : SpectralGrid
    gamma : float
        Spectral decay exponent; must exceed 2 so the V-weighted mass of Q
        stays bounded as the cutoff grows.
    mode_cutoff : int
        Retain every sin/cos pair with 0 < |k| <= mode_cutoff.  Must stay
        inside the dealias region (<= N/3).
    seed, path_id : int
        Stream key; distinct path_ids give independent Brownian paths.
    h : DirectorField or None
        Static axis field of the director rotations (None disables them).
    """

    grid: SpectralGrid
    gamma: float = 3.0
    mode_cutoff: int = 0  # 0 means the default N // 4
    seed: int = 0
    path_id: int = 0
    velocity_on: bool = True
    director_on: bool = True
    h: DirectorField | None = None
    # derived tables
    k_points: np.ndarray = field(init=False, repr=False, compare=False)
    q_weights: np.ndarray = field(init=False, repr=False, compare=False)
    h_grad: np.ndarray | None = field(init=False, repr=False, compare=False)
    h_mag: np.ndarray | None = field(init=False, repr=False, compare=False)
    h_unit: np.ndarray | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.grid.n_modes
        cutoff = self.mode_cutoff if self.mode_cutoff > 0 else n // 4
        if not (self.gamma > 2.0):
            raise ValueError(f"noise.gamma must be > 2, got {self.gamma}")
        if cutoff > n / 3.0:
            raise ValueError(
                f"noise.mode_cutoff must stay within the dealias region (<= N/3), got {cutoff}"
            )
        object.__setattr__(self, "mode_cutoff", cutoff)
        # half-plane enumeration: k1 > 0, or k1 == 0 and k2 > 0; lexicographic
        pts = [
            (k1, k2)
            for k1 in range(0, cutoff + 1)
            for k2 in range(-cutoff, cutoff + 1)
            if (k1 > 0 or (k1 == 0 and k2 > 0)) and 0 < k1 * k1 + k2 * k2 <= cutoff * cutoff
        ]
        k_points = np.array(pts, dtype=np.int64).reshape(-1, 2)
        ksq = np.sum(k_points.astype(np.float64) ** 2, axis=1)
        q = (1.0 + ksq) ** (-self.gamma / 2.0)
        k_points.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "k_points", k_points)
        object.__setattr__(self, "q_weights", q)
        if self.h is not None:
            g = self.grid
            hg = np.stack([g.grad_phys(self.h.spec[m]) for m in range(3)], axis=1)
            mag = np.sqrt(np.sum(self.h.phys**2, axis=0))
            safe = np.where(mag > 0.0, mag, 1.0)
            unit = self.h.phys / safe
            for arr, name in [(hg, "h_grad"), (mag, "h_mag"), (unit, "h_unit")]:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        else:
            for name in ("h_grad", "h_mag", "h_unit"):
                object.__setattr__(self, name, None)

    @property
    def n_basis(self) -> int:
        """Number of retained basis elements (a cos and a sin per k point)."""
        return 2 * len(self.k_points)

    @property
    def trace_q(self) -> float:
        """Trace of Q in L2: sum of q_j^2 over the retained basis."""
        return float(2.0 * np.sum(self.q_weights**2))

    def basis_field(self, j: int) -> VelocityField:
        """The j-th basis element (ordering: per k point, cos then sin)."""
        if not 0 <= j < self.n_basis:
            raise IndexError(j)
        k1, k2 = self.k_points[j // 2]
        x1, x2 = self.grid.meshgrid()
        phase = k1 * x1 + k2 * x2
        wave = np.cos(phase) if j % 2 == 0 else np.sin(phase)
        norm = np.sqrt(float(k1 * k1 + k2 * k2))
        perp = np.array([-k2 / norm, k1 / norm])
        return VelocityField(self.grid, phys=_NORM * wave * perp[:, None, None])


def hs_mass(model: NoiseModel) -> tuple[float, float]:
    """(trace of Q in L2, V-weighted mass sum q_j^2 |k_j|^2)."""
    ksq = np.sum(model.k_points.astype(np.float64) ** 2, axis=1)
    q2 = model.q_weights**2
    return float(2.0 * np.sum(q2)), float(2.0 * np.sum(q2 * ksq))


@dataclass(frozen=True)
class WienerIncrement:
    """Increments applied over one (sub)step of size dt."""

    dW: VelocityField
    d_eta: float
    dt: float
    step_index: int
    level: int = 0
    slot: int = 0


def _stream(model: NoiseModel, step_index: int, level: int, slot: int) -> np.random.Generator:
    key = np.array([model.seed, model.path_id], dtype=np.uint64)
    counter = np.array([0, slot, level, step_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sample_increment(model: NoiseModel, dt: float, step_index: int,
                     level: int = 0, slot: int = 0) -> WienerIncrement:
    """Draw (dW, d_eta) for one step; deterministic in (seed, path_id, step, level, slot).

    The draw layout is fixed (2 per k point for W, then one for eta) so the
    same stream position always feeds the same mode.
    """
    rng = _stream(model, step_index, level, slot)
    m = len(model.k_points)
    xi = rng.standard_normal(2 * m + 1) * np.sqrt(dt)
    g = model.grid
    spec = np.zeros((2, g.n_modes, g.n_modes), dtype=np.complex128)
    if m > 0:
        k1 = model.k_points[:, 0]
        k2 = model.k_points[:, 1]
        norm = np.sqrt((k1 * k1 + k2 * k2).astype(np.float64))
        perp = np.stack([-k2 / norm, k1 / norm])  # (2, m)
        coeff = 0.5 * _NORM * model.q_weights * (xi[0:2 * m:2] - 1j * xi[1:2 * m:2])
        n = g.n_modes
        ip, jp = k1 % n, k2 % n
        im, jm = (-k1) % n, (-k2) % n
        for c in range(2):
            np.add.at(spec[c], (ip, jp), coeff * perp[c])
            np.add.at(spec[c], (im, jm), np.conj(coeff) * perp[c])
    dw = VelocityField(g, spec=spec)
    return WienerIncrement(dW=dw, d_eta=float(xi[-1]), dt=dt,
                           step_index=step_index, level=level, slot=slot)
