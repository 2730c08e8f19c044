"""Spatial operators: projection, transport, elastic stress, relaxation terms.

All quadratic/cubic nonlinearities are evaluated pointwise on the collocation
grid and dealiased by the 2/3 rule; derivatives act in spectral space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DirectorField, SpectralGrid, VelocityField

__all__ = [
    "GLParams",
    "leray_project",
    "stokes_apply",
    "convect_velocity",
    "convect_director",
    "ericksen_stress",
    "gl_penalty",
    "gl_potential_mass",
    "harmonic_term",
    "director_cross_h",
    "stratonovich_correction",
    "bilaplacian_identity_residual",
    "cross3",
]


@dataclass(frozen=True)
class GLParams:
    """Relaxation parameters: penalty f(n) = (1/epsilon^2)(1-|n|^2) n."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ValueError(f"gl.epsilon must be > 0, got {self.epsilon}")


# -- array kernels (hot path, reused by the time stepper) --------------------

def leray_project_spec(grid: SpectralGrid, u_spec: np.ndarray) -> np.ndarray:
    """Remove the gradient part mode-by-mode and zero the mean."""
    k2 = np.where(grid.k2 == 0.0, 1.0, grid.k2)
    kdotu = grid.kx * u_spec[0] + grid.ky * u_spec[1]
    out = np.stack([u_spec[0] - grid.kx * kdotu / k2, u_spec[1] - grid.ky * kdotu / k2])
    out[:, 0, 0] = 0.0
    return out


def convect_spec(grid: SpectralGrid, u_phys: np.ndarray, f_spec: np.ndarray) -> np.ndarray:
    """(u . grad) f for any component stack f, dealiased, in spectral space."""
    d1 = grid.to_phys(grid.deriv(f_spec, 1))
    d2 = grid.to_phys(grid.deriv(f_spec, 2))
    return grid.dealias(grid.to_spec(u_phys[0] * d1 + u_phys[1] * d2))


def ericksen_stress_spec(grid: SpectralGrid, n_spec: np.ndarray) -> np.ndarray:
    """Projected divergence of the elastic stress grad(n) (.) grad(n)."""
    d1 = grid.to_phys(grid.deriv(n_spec, 1))  # (3, N, N)
    d2 = grid.to_phys(grid.deriv(n_spec, 2))
    t11 = grid.dealias(grid.to_spec(np.sum(d1 * d1, axis=0)))
    t12 = grid.dealias(grid.to_spec(np.sum(d1 * d2, axis=0)))
    t22 = grid.dealias(grid.to_spec(np.sum(d2 * d2, axis=0)))
    div = np.stack([
        grid.deriv(t11, 1) + grid.deriv(t12, 2),
        grid.deriv(t12, 1) + grid.deriv(t22, 2),
    ])
    return leray_project_spec(grid, div)


def coupling_drift_spec(grid: SpectralGrid, u_spec: np.ndarray, n_spec: np.ndarray):
    """Drift of the exchange stage: (-P(u.grad u) - P div stress, -(u.grad) n)."""
    u_phys = grid.to_phys(u_spec)
    du_spec = -(convect_spec(grid, u_phys, u_spec) + ericksen_stress_spec(grid, n_spec))
    du_spec = leray_project_spec(grid, du_spec)
    dn_spec = -convect_spec(grid, u_phys, n_spec)
    return du_spec, dn_spec


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of (3, ...) component stacks."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def gl_penalty_phys(n_phys: np.ndarray, epsilon: float) -> np.ndarray:
    return (1.0 - np.sum(n_phys * n_phys, axis=0)) * n_phys / epsilon**2


# -- field-level operations ---------------------------------------------------

def leray_project(u: VelocityField) -> VelocityField:
    return VelocityField(u.grid, spec=leray_project_spec(u.grid, u.spec))


def stokes_apply(u: VelocityField) -> VelocityField:
    """A u = -P laplacian u; the multiplier |k|^2 on solenoidal fields."""
    return VelocityField(u.grid, spec=u.grid.k2 * u.spec * u.grid.diff_mask)


def convect_velocity(u: VelocityField) -> VelocityField:
    g = u.grid
    return VelocityField(g, spec=leray_project_spec(g, convect_spec(g, u.phys, u.spec)))


def convect_director(u: VelocityField, n: DirectorField) -> DirectorField:
    return DirectorField(n.grid, spec=convect_spec(n.grid, u.phys, n.spec))


def ericksen_stress(n: DirectorField) -> VelocityField:
    return VelocityField(n.grid, spec=ericksen_stress_spec(n.grid, n.spec))


def gl_penalty(n: DirectorField, gl: GLParams) -> DirectorField:
    g = n.grid
    return DirectorField(g, spec=g.dealias(g.to_spec(gl_penalty_phys(n.phys, gl.epsilon))))


def gl_potential_mass(n: DirectorField, gl: GLParams) -> float:
    """Integral of (1 - |n|^2)^2 / (4 epsilon^2) by grid quadrature."""
    defect = 1.0 - np.sum(n.phys**2, axis=0)
    return n.grid.integrate(defect**2) / (4.0 * gl.epsilon**2)


def harmonic_term(n: DirectorField) -> DirectorField:
    g = n.grid
    d1 = g.to_phys(g.deriv(n.spec, 1))
    d2 = g.to_phys(g.deriv(n.spec, 2))
    grad_sq = np.sum(d1 * d1 + d2 * d2, axis=0)
    return DirectorField(g, spec=g.dealias(g.to_spec(grad_sq * n.phys)))


def director_cross_h(n: DirectorField, h: DirectorField) -> DirectorField:
    return DirectorField(n.grid, phys=cross3(n.phys, h.phys))


def stratonovich_correction(n: DirectorField, h: DirectorField) -> DirectorField:
    """Drift 0.5 (n x h) x h matching the rotation noise in mean."""
    return DirectorField(n.grid, phys=0.5 * cross3(cross3(n.phys, h.phys), h.phys))


def bilaplacian_identity_residual(d: DirectorField) -> float:
    """L2 residual of
    d . lap^2 d = 0.5 lap^2 |d|^2 - 4 grad d . grad lap d - 2 |hess d|^2 - |lap d|^2.

    Exact (to roundoff) when d is band-limited to |k_i| < N/4: quadratic
    products then stay strictly below the unpaired Nyquist line N/2 that
    differentiation masks out.
    """
    g = d.grid
    spec = d.spec
    lap = g.laplacian(spec)
    bilap = g.laplacian(lap)
    lhs = np.sum(d.phys * g.to_phys(bilap), axis=0)

    mag2 = np.sum(d.phys**2, axis=0)
    term_sq = 0.5 * g.to_phys(g.laplacian(g.laplacian(g.to_spec(mag2))))

    grad_d = np.stack([g.to_phys(g.deriv(spec, 1)), g.to_phys(g.deriv(spec, 2))])
    grad_lap = np.stack([g.to_phys(g.deriv(lap, 1)), g.to_phys(g.deriv(lap, 2))])
    term_mix = 4.0 * np.sum(grad_d * grad_lap, axis=(0, 1))

    hess = np.stack([
        g.to_phys(g.deriv(g.deriv(spec, 1), 1)),
        g.to_phys(g.deriv(g.deriv(spec, 1), 2)),
        g.to_phys(g.deriv(g.deriv(spec, 2), 1)),
        g.to_phys(g.deriv(g.deriv(spec, 2), 2)),
    ])
    term_hess = 2.0 * np.sum(hess**2, axis=(0, 1))

    lap_phys = g.to_phys(lap)
    term_lap = np.sum(lap_phys**2, axis=0)

    residual = lhs - (term_sq - term_mix - term_hess - term_lap)
    return g.l2_norm_phys(residual[None, :, :])
