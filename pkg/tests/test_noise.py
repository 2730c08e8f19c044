"""Basis enumeration, spectral weights, and increment stream properties."""

import numpy as np
import pytest

from nsgl.noise import NoiseModel, hs_mass, sample_increment


def brute_force_half_plane(cutoff):
    pts = []
    for k1 in range(0, cutoff + 1):
        for k2 in range(-cutoff, cutoff + 1):
            if (k1 > 0 or (k1 == 0 and k2 > 0)) and 0 < k1 * k1 + k2 * k2 <= cutoff**2:
                pts.append((k1, k2))
    return sorted(pts)


def test_half_plane_enumeration(grid32):
    model = NoiseModel(grid=grid32, mode_cutoff=2)
    got = [tuple(p) for p in model.k_points]
    assert got == brute_force_half_plane(2)
    assert len(got) == 6
    assert model.n_basis == 12
    # exactly one of +-k is retained, so the doubled set covers the annulus
    signed = set(got) | {(-a, -b) for a, b in got}
    full = {(a, b) for a in range(-2, 3) for b in range(-2, 3)
            if 0 < a * a + b * b <= 4}
    assert signed == full


def test_parameter_validation(grid32):
    with pytest.raises(ValueError):
        NoiseModel(grid=grid32, gamma=2.0)
    with pytest.raises(ValueError):
        NoiseModel(grid=grid32, mode_cutoff=11)  # > 32/3
    default = NoiseModel(grid=grid32)
    assert default.mode_cutoff == 8  # auto N // 4


def test_spectral_weights_and_trace(grid32):
    model = NoiseModel(grid=grid32, mode_cutoff=2, gamma=3.0)
    ksq = np.sum(model.k_points**2, axis=1)
    assert np.allclose(model.q_weights, (1.0 + ksq) ** -1.5, rtol=1e-14)
    expect_trace = 2.0 * float(np.sum((1.0 + ksq) ** -3.0))
    assert np.isclose(model.trace_q, expect_trace, rtol=1e-14)
    tq, vmass = hs_mass(model)
    assert np.isclose(tq, expect_trace, rtol=1e-14)
    assert np.isclose(vmass, 2.0 * float(np.sum(ksq * (1.0 + ksq) ** -3.0)),
                      rtol=1e-14)


def test_v_mass_bounded_as_cutoff_grows(grid64):
    """gamma > 2 keeps sum q_j^2 |k|^2 bounded in the cutoff."""
    masses = [hs_mass(NoiseModel(grid=grid64, mode_cutoff=c, gamma=2.5))[1]
              for c in (4, 8, 16, 21)]
    assert all(np.isfinite(m) for m in masses)
    increments = np.diff(masses)
    assert increments[-1] < increments[0]  # tail contributions decay


def test_basis_fields_orthonormal_solenoidal(grid32):
    model = NoiseModel(grid=grid32, mode_cutoff=2)
    fields = [model.basis_field(j) for j in range(model.n_basis)]
    g = grid32
    gram = np.array([[g.integrate(np.sum(a.phys * b.phys, axis=0)) for b in fields]
                     for a in fields])
    assert np.allclose(gram, np.eye(model.n_basis), atol=1e-12)
    for f in fields:
        assert f.divergence_defect() < 1e-12
        assert f.mean_defect() < 1e-14


def test_increment_determinism_and_stream_separation(grid32):
    model = NoiseModel(grid=grid32, mode_cutoff=4, seed=5, path_id=3)
    a = sample_increment(model, 1e-3, step_index=7)
    b = sample_increment(model, 1e-3, step_index=7)
    assert np.array_equal(a.dW.spec, b.dW.spec)
    assert a.d_eta == b.d_eta
    c = sample_increment(model, 1e-3, step_index=8)
    assert not np.array_equal(a.dW.spec, c.dW.spec)
    import dataclasses
    other_path = dataclasses.replace(model, path_id=4)
    d = sample_increment(other_path, 1e-3, step_index=7)
    assert not np.array_equal(a.dW.spec, d.dW.spec)
    e = sample_increment(model, 5e-4, step_index=7, level=1, slot=0)
    f = sample_increment(model, 5e-4, step_index=7, level=1, slot=1)
    assert not np.array_equal(e.dW.spec, f.dW.spec)
    assert not np.array_equal(e.dW.spec, a.dW.spec)


def test_increment_structure(grid32):
    model = NoiseModel(grid=grid32, mode_cutoff=3, seed=2)
    inc = sample_increment(model, 2e-3, step_index=0)
    dw = inc.dW
    assert dw.conj_symmetry_defect() < 1e-14
    assert dw.divergence_defect() < 1e-12
    assert dw.mean_defect() < 1e-15
    # support is exactly the retained annulus
    g = grid32
    k_abs = np.sqrt(g.k2)
    outside = (k_abs > 3.0) | (k_abs == 0.0)
    assert np.max(np.abs(dw.spec[:, outside])) == 0.0
    spec_rt = g.to_spec(dw.phys)
    assert np.max(np.abs(spec_rt - dw.spec)) < 1e-15


def test_increment_moments(grid32):
    """E |dW|^2 = TrQ dt and E d_eta^2 = dt, by Monte Carlo at fixed seed."""
    model = NoiseModel(grid=grid32, mode_cutoff=2, gamma=3.0, seed=0)
    dt = 1e-2
    n_draws = 2000
    w_mass = 0.0
    eta_sq = 0.0
    eta_sum = 0.0
    for j in range(n_draws):
        inc = sample_increment(model, dt, step_index=j)
        w_mass += grid_l2_sq(inc.dW)
        eta_sq += inc.d_eta**2
        eta_sum += inc.d_eta
    w_mass /= n_draws
    eta_sq /= n_draws
    assert abs(w_mass - model.trace_q * dt) < 0.05 * model.trace_q * dt
    assert abs(eta_sq - dt) < 0.15 * dt
    assert abs(eta_sum / n_draws) < 3.0 * np.sqrt(dt / n_draws)


def grid_l2_sq(field):
    return field.grid.l2_norm_phys(field.phys) ** 2
