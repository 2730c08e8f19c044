"""Fourier grid and field containers on the periodic square [0, 2*pi)^2.

Spectral convention: f(x) = sum_k c(k) exp(i k.x) with integer wavenumbers,
so ``to_spec`` divides the raw FFT by N^2 and Parseval reads
|f|_{L2}^2 = (2*pi)^2 * sum_k |c(k)|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralGrid",
    "VelocityField",
    "DirectorField",
    "to_spectral",
    "to_physical",
    "sobolev_norm",
    "random_band_limited",
]


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform N x N collocation grid with precomputed wavenumber tables.

    Parameters
    ----------
    n_modes : int
        Number of collocation points per direction. Must be even and >= 16
        so the 2/3-rule dealiasing mask is nonempty and symmetric.

    Notes
    -----
    Index [i, j] corresponds to the point (x1[i], x2[j]); wavenumber arrays
    broadcast the same way.  ``dealias_mask`` keeps |k1|, |k2| <= N/3 and
    ``diff_mask`` kills the unpaired Nyquist line k = -N/2, which is applied
    after every differentiation.
    """

    n_modes: int
    x1: np.ndarray = field(init=False, repr=False, compare=False)
    x2: np.ndarray = field(init=False, repr=False, compare=False)
    kx: np.ndarray = field(init=False, repr=False, compare=False)
    ky: np.ndarray = field(init=False, repr=False, compare=False)
    k2: np.ndarray = field(init=False, repr=False, compare=False)
    dealias_mask: np.ndarray = field(init=False, repr=False, compare=False)
    diff_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_modes
        if n < 16 or n % 2 != 0:
            raise ValueError(f"n_modes must be even and >= 16, got {n}")
        x = 2.0 * np.pi * np.arange(n) / n
        k = np.fft.fftfreq(n, d=1.0 / n)  # 0, 1, ..., n/2-1, -n/2, ..., -1
        kx = k[:, None]
        ky = k[None, :]
        cut = n / 3.0
        dealias = (np.abs(kx) <= cut) & (np.abs(ky) <= cut)
        nyq = -(n // 2)
        diff = (kx != nyq) & (ky != nyq)
        for name, val in [
            ("x1", x), ("x2", x), ("kx", kx), ("ky", ky),
            ("k2", kx**2 + ky**2), ("dealias_mask", dealias), ("diff_mask", diff),
        ]:
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def size(self) -> int:
        return self.n_modes * self.n_modes

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.n_modes

    @property
    def quad_weight(self) -> float:
        """Quadrature weight (2*pi/N)^2; exact for band-limited integrands."""
        return self.dx * self.dx

    def meshgrid(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    # -- transforms ---------------------------------------------------------

    def to_spec(self, phys: np.ndarray) -> np.ndarray:
        return np.fft.fft2(phys, axes=(-2, -1)) / self.size

    def to_phys(self, spec: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(spec, axes=(-2, -1))) * self.size

    # -- spectral calculus --------------------------------------------------

    def deriv(self, spec: np.ndarray, axis: int) -> np.ndarray:
        """Partial derivative along axis 1 or 2, Nyquist line zeroed."""
        wave = self.kx if axis == 1 else self.ky
        return (1j * wave) * spec * self.diff_mask

    def laplacian(self, spec: np.ndarray) -> np.ndarray:
        return -self.k2 * spec * self.diff_mask

    def grad_phys(self, spec: np.ndarray) -> np.ndarray:
        """Physical-space gradient, shape (..., 2, N, N)."""
        return np.stack(
            [self.to_phys(self.deriv(spec, 1)), self.to_phys(self.deriv(spec, 2))],
            axis=-3,
        )

    def dealias(self, spec: np.ndarray) -> np.ndarray:
        return spec * self.dealias_mask

    # -- quadrature ---------------------------------------------------------

    def integrate(self, phys: np.ndarray) -> float:
        return float(np.sum(phys)) * self.quad_weight

    def l2_norm_phys(self, phys: np.ndarray) -> float:
        """L2 norm of a (multi-component) physical field."""
        return float(np.sqrt(np.sum(phys * phys) * self.quad_weight))

    def l2_norm_spec(self, spec: np.ndarray) -> float:
        return float(2.0 * np.pi * np.sqrt(np.sum(np.abs(spec) ** 2)))

    def l2_inner_spec(self, a: np.ndarray, b: np.ndarray) -> float:
        return float((2.0 * np.pi) ** 2 * np.sum(np.real(a * np.conj(b))))


class _Field:
    """Immutable field snapshot holding physical and/or spectral data.

    The missing representation is computed on first access and cached; both
    arrays are marked read-only.
    """

    n_components = 0

    def __init__(self, grid: SpectralGrid, phys=None, spec=None):
        if phys is None and spec is None:
            raise ValueError("need at least one representation")
        for arr in (phys, spec):
            if arr is not None and arr.shape != (self.n_components, grid.n_modes, grid.n_modes):
                raise ValueError(
                    f"expected shape {(self.n_components, grid.n_modes, grid.n_modes)}, got {arr.shape}"
                )
        if phys is not None:
            phys = np.asarray(phys, dtype=np.float64)
            phys.setflags(write=False)
        if spec is not None:
            spec = np.asarray(spec, dtype=np.complex128)
            spec.setflags(write=False)
        self.grid = grid
        self._phys = phys
        self._spec = spec

    @classmethod
    def from_physical(cls, grid, phys):
        return cls(grid, phys=np.array(phys, dtype=np.float64))

    @classmethod
    def from_spectral(cls, grid, spec):
        return cls(grid, spec=np.array(spec, dtype=np.complex128))

    @property
    def phys(self) -> np.ndarray:
        if self._phys is None:
            p = self.grid.to_phys(self._spec)
            p.setflags(write=False)
            self._phys = p
        return self._phys

    @property
    def spec(self) -> np.ndarray:
        if self._spec is None:
            s = self.grid.to_spec(self._phys)
            s.setflags(write=False)
            self._spec = s
        return self._spec

    def mean_defect(self) -> float:
        """Magnitude of the k=0 coefficient (spatial mean)."""
        return float(np.max(np.abs(self.spec[:, 0, 0])))

    def conj_symmetry_defect(self) -> float:
        """Relative size of the imaginary part left by the inverse transform."""
        p = np.fft.ifft2(self.spec, axes=(-2, -1)) * self.grid.size
        scale = max(float(np.max(np.abs(p))), 1e-300)
        return float(np.max(np.abs(np.imag(p)))) / scale


class VelocityField(_Field):
    """Two-component velocity; valid states are mean-zero and solenoidal."""

    n_components = 2

    def divergence_defect(self) -> float:
        g = self.grid
        div = g.deriv(self.spec[0], 1) + g.deriv(self.spec[1], 2)
        scale = max(g.l2_norm_spec(self.spec), 1e-300)
        return g.l2_norm_spec(div) / scale


class DirectorField(_Field):
    """Three-component director field on the 2D torus."""

    n_components = 3

    @classmethod
    def from_scalar_axis(cls, grid, scalar_phys, axis=(1.0, 1.0, 1.0)):
        """Field h(x) * axis from a scalar profile h(x)."""
        axis = np.asarray(axis, dtype=np.float64)
        return cls.from_physical(grid, scalar_phys[None, :, :] * axis[:, None, None])

    def norm_phys(self) -> np.ndarray:
        """Pointwise Euclidean magnitude |n(x)|, shape (N, N)."""
        return np.sqrt(np.sum(self.phys**2, axis=0))


def to_spectral(f: _Field) -> _Field:
    """Materialize the spectral representation (cached on the snapshot)."""
    f.spec
    return f


def to_physical(f: _Field) -> _Field:
    f.phys
    return f


def sobolev_norm(f: _Field, order: float, homogeneous: bool | None = None) -> float:
    """Spectral Sobolev norm of order ``order``.

    The homogeneous form is ((2*pi)^2 * sum |k|^(2s) |c|^2)^(1/2).  Velocity
    fields default to it (their zero mode vanishes); director fields with
    s >= 1 default to the full norm, which adds the |k|^0 (L2) term.
    """
    if homogeneous is None:
        homogeneous = not (isinstance(f, DirectorField) and order >= 1.0)
    g = f.grid
    with np.errstate(divide="ignore"):
        weight = g.k2**order if order != 0.0 else np.ones_like(g.k2)
    weight = np.where(np.isfinite(weight), weight, 0.0)
    if not homogeneous:
        weight = weight + 1.0
    total = np.sum(weight * np.abs(f.spec) ** 2)
    return float(2.0 * np.pi * np.sqrt(total))


def random_band_limited(grid: SpectralGrid, n_components: int, k_max: int,
                        rng: np.random.Generator, amplitude: float = 1.0,
                        zero_mean: bool = True) -> np.ndarray:
    """Smooth random physical field with |k1|, |k2| <= k_max, sup-normalized."""
    white = rng.standard_normal((n_components, grid.n_modes, grid.n_modes))
    spec = grid.to_spec(white)
    box = (np.abs(grid.kx) <= k_max) & (np.abs(grid.ky) <= k_max)
    spec = spec * box
    if zero_mean:
        spec[:, 0, 0] = 0.0
    phys = grid.to_phys(spec)
    peak = max(float(np.max(np.abs(phys))), 1e-300)
    return phys * (amplitude / peak)
