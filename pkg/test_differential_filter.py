import numpy as np
import pytest

from analysis import error_norms
from differential_filter import (
    FilterSpec,
    apply_filter,
    delta_norm,
    filter_trajectory,
    filtered_error,
    helmholtz_matrix,
    l2_norm_sq,
)
from mesh_field import MeshError, NodalField, build_mesh, constant_field, interpolate
from time_integration import SolverConfig, solve
from viscosity import ViscositySpec


def _sine(n, k=1):
    return interpolate(lambda x: np.sin(2 * np.pi * k * x), build_mesh(n))


def test_filter_spec_rejects_non_positive_width():
    with pytest.raises(ValueError):
        FilterSpec(0.0, build_mesh(4))


def test_constant_is_unchanged():
    mesh = build_mesh(20)
    u = constant_field(mesh, 1.7)
    assert apply_filter(u, FilterSpec(0.3, mesh)).values == pytest.approx(u.values, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 4])
@pytest.mark.parametrize("delta", [1.0, 0.1])
def test_fourier_attenuation(k, delta):
    u = _sine(6400, k)
    filtered = apply_filter(u, FilterSpec(delta, u.mesh))
    factor = np.dot(filtered.values, u.values) / np.dot(u.values, u.values)
    expected = 1.0 / (1.0 + delta * delta * (2 * np.pi * k) ** 2)
    assert factor == pytest.approx(expected, rel=1e-3)


def test_attenuation_k1_delta1_value():
    u = _sine(1600)
    filtered = apply_filter(u, FilterSpec(1.0, u.mesh))
    assert np.max(np.abs(filtered.values)) == pytest.approx(0.02471, abs=1e-4)


def test_mean_is_preserved():
    rng = np.random.default_rng(4)
    mesh = build_mesh(64)
    u = NodalField(mesh, rng.normal(size=64))
    filtered = apply_filter(u, FilterSpec(0.05, mesh))
    assert np.sum(filtered.values) == pytest.approx(np.sum(u.values), abs=1e-12)


def test_filter_is_linear():
    rng = np.random.default_rng(9)
    mesh = build_mesh(32)
    spec = FilterSpec(0.2, mesh)
    u = NodalField(mesh, rng.normal(size=32))
    v = NodalField(mesh, rng.normal(size=32))
    combined = apply_filter(u.with_values(2.0 * u.values - 0.5 * v.values), spec).values
    separate = 2.0 * apply_filter(u, spec).values - 0.5 * apply_filter(v, spec).values
    assert combined == pytest.approx(separate, abs=1e-12)


def test_filter_contracts_in_l2_and_delta_norm():
    rng = np.random.default_rng(15)
    mesh = build_mesh(40)
    for delta in (0.01, 0.1, 1.0):
        spec = FilterSpec(delta, mesh)
        for _ in range(20):
            u = NodalField(mesh, rng.normal(size=40))
            filtered = apply_filter(u, spec)
            norm_u = np.sqrt(l2_norm_sq(u))
            assert np.sqrt(l2_norm_sq(filtered)) <= norm_u + 1e-12
            assert delta_norm(filtered, delta) <= norm_u + 1e-12


def test_filter_rejects_foreign_mesh():
    with pytest.raises(MeshError):
        apply_filter(constant_field(build_mesh(8), 1.0), FilterSpec(0.1, build_mesh(16)))


def test_helmholtz_matrix_is_cached_and_read_only():
    a = helmholtz_matrix(12, 0.5)
    assert helmholtz_matrix(12, 0.5) is a
    with pytest.raises(ValueError):
        a.diag[0] = 0.0


def test_delta_norm_examples():
    mesh = build_mesh(10)
    assert delta_norm(constant_field(mesh, -2.0), 3.0) == pytest.approx(2.0)
    u = _sine(800)
    assert delta_norm(u, 0.0) == pytest.approx(np.sqrt(l2_norm_sq(u)))
    assert delta_norm(u, 1.0) == pytest.approx(4.4995, abs=1e-2)
    with pytest.raises(ValueError):
        delta_norm(u, -1.0)


def test_delta_norm_is_a_norm():
    rng = np.random.default_rng(21)
    mesh = build_mesh(30)
    for _ in range(30):
        u = NodalField(mesh, rng.normal(size=30))
        v = NodalField(mesh, rng.normal(size=30))
        delta = rng.uniform(0.0, 1.0)
        assert delta_norm(u.with_values(-3.0 * u.values), delta) == pytest.approx(3.0 * delta_norm(u, delta))
        assert delta_norm(u.with_values(u.values + v.values), delta) <= delta_norm(u, delta) + delta_norm(v, delta) + 1e-12


def test_filtered_error_of_injected_solution_is_zero():
    coarse = _sine(50)
    fine_mesh = build_mesh(400)
    u_ref = interpolate(lambda x: coarse(x), fine_mesh)
    assert filtered_error(u_ref, coarse, FilterSpec(1.0, fine_mesh)) == pytest.approx(0.0, abs=1e-12)


def test_filtered_error_small_width_limit():
    rng = np.random.default_rng(33)
    fine_mesh = build_mesh(200)
    u_ref = NodalField(fine_mesh, rng.normal(size=200))
    coarse = NodalField(build_mesh(50), rng.normal(size=50))
    _, l2 = error_norms(coarse, u_ref)
    assert filtered_error(u_ref, coarse, FilterSpec(1e-6, fine_mesh)) == pytest.approx(l2, rel=1e-6)


def test_filtered_error_requires_fine_filter_mesh():
    coarse = _sine(50)
    with pytest.raises(MeshError):
        filtered_error(_sine(400), coarse, FilterSpec(1.0, build_mesh(200)))


def test_filter_trajectory_returns_each_snapshot():
    config = SolverConfig(mesh=build_mesh(20), viscosity=ViscositySpec(), t_final=0.05, record_every=5)
    traj = solve(config, lambda x: 0.25 * (np.cos(2 * np.pi * x) + 1.0))
    filtered = filter_trajectory(traj, 0.1)
    assert [t for t, _ in filtered] == traj.snapshot_times
    assert all(f.mesh == traj.config.mesh for _, f in filtered)
