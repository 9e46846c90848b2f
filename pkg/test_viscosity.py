import numpy as np
import pytest

import viscosity
from mesh_field import NodalField, build_mesh, constant_field, interpolate
from viscosity import (
    Nu1Variant,
    ViscositySpec,
    artificial_viscosity,
    excess_viscosity_norm,
    linear_viscosity,
    linear_viscosity_reynolds,
    mesh_reynolds_number,
    nonlinear_viscosity,
    nu0_element,
    nu0_field,
    nu1_element,
    nu1_field,
    xi_field,
    xi_indicator,
)


def _from_slopes(slopes):
    """Periodic field whose element slopes are the given (zero-sum) list, starting at 0."""
    n = len(slopes)
    h = 1.0 / n
    values = np.concatenate([[0.0], np.cumsum(np.asarray(slopes[:-1], dtype=float) * h)])
    return NodalField(build_mesh(n), values)


@pytest.mark.parametrize(
    "nu, expected",
    [(0.0, 0.005), (0.1, 0.1), (0.005, 0.005)],
)
def test_linear_viscosity_examples(nu, expected):
    spec = ViscositySpec(kind="linear", nu=nu, u0_sup=1.0)
    field = linear_viscosity(spec, build_mesh(100))
    assert np.allclose(field.values, expected)


def test_reynolds_form_matches_linear_viscosity():
    mesh = build_mesh(100)
    for nu in (0.001, 0.005, 0.1):
        spec = ViscositySpec(kind="linear", nu=nu, u0_sup=1.0)
        assert np.allclose(linear_viscosity_reynolds(spec, mesh).values, linear_viscosity(spec, mesh).values)
    assert mesh_reynolds_number(ViscositySpec(kind="linear", nu=0.0), mesh) == float("inf")
    with pytest.raises(ValueError):
        linear_viscosity_reynolds(ViscositySpec(kind="linear", nu=0.0), mesh)


def test_spec_rejects_negative_parameters():
    with pytest.raises(ValueError):
        ViscositySpec(nu=-1.0)
    with pytest.raises(ValueError):
        ViscositySpec(epsilon=-0.1)
    with pytest.raises(ValueError):
        ViscositySpec(u0_sup=0.0)


def test_nu0_on_hat():
    u = NodalField(build_mesh(4), [0.0, 1.0, 0.0, 0.0])
    assert nu0_element(u, 0, 0.0) == pytest.approx(0.5)


def test_nu0_at_local_maximum_is_half_sup():
    u = _from_slopes([3.0, -3.0, 1.0, -1.0])
    # Node 1 is a local max with slopes +3, -3: quotient 1.
    assert nu0_element(u, 0, 0.0) == pytest.approx(0.5 * max(abs(u.values[0]), abs(u.values[1])))


def test_nu0_zero_for_constant_and_kinkless_element():
    assert np.all(nu0_field(constant_field(build_mesh(6), 2.0), 0.0) == 0.0)
    u = _from_slopes([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    # Element 1 has equal slopes on both sides of both endpoints.
    assert nu0_element(u, 1, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_xi_examples():
    assert xi_indicator(_from_slopes([1.0, 2.0, 1.0, -2.0, -2.0]), 1) == 1
    assert xi_indicator(_from_slopes([1.0, 2.0, -1.0, -1.0, -1.0]), 1) == 0
    assert xi_indicator(_from_slopes([2.0, 2.0, 1.0, -2.5, -2.5]), 1) == 1


def test_nu1_with_prescribed_neighbour_nu0(monkeypatch):
    u = _from_slopes([1.0, 2.0, 1.0, -2.0, -2.0])
    assert xi_indicator(u, 1) == 1
    monkeypatch.setattr(viscosity, "nu0_field", lambda field, eps: np.array([0.3, 0.0, 0.1, 0.0, 0.0]))
    assert nu1_element(u, 1, 0.0, Nu1Variant.RATIO) == pytest.approx(0.15)
    assert nu1_element(u, 1, 0.0, Nu1Variant.SIMPLIFIED) == pytest.approx(0.3)


def test_nu1_zero_where_xi_zero():
    rng = np.random.default_rng(5)
    u = NodalField(build_mesh(20), rng.normal(size=20))
    nu1 = nu1_field(u, 0.0)
    assert np.all(nu1[xi_field(u) == 0] == 0.0)


def test_ratio_variant_never_exceeds_simplified():
    rng = np.random.default_rng(17)
    mesh = build_mesh(30)
    for _ in range(50):
        u = NodalField(mesh, rng.normal(size=30))
        ratio = nu1_field(u, 0.0, Nu1Variant.RATIO)
        simplified = nu1_field(u, 0.0, Nu1Variant.SIMPLIFIED)
        assert np.all(ratio <= simplified + 1e-15)


def test_xi_excludes_neighbours_on_random_fields():
    rng = np.random.default_rng(23)
    mesh = build_mesh(25)
    for _ in range(100):
        u = NodalField(mesh, rng.normal(size=25))
        xi = xi_field(u)
        assert not np.any((xi == 1) & (np.roll(xi, -1) == 1))
        # Continuous random data has no exact slope ties, so the left neighbour is excluded too.
        assert not np.any((xi == 1) & (np.roll(xi, 1) == 1))


def test_nu0_bounds_and_epsilon_monotonicity():
    rng = np.random.default_rng(29)
    mesh = build_mesh(16)
    for _ in range(50):
        u = NodalField(mesh, rng.normal(size=16))
        sup = np.maximum(np.abs(u.values), np.abs(np.roll(u.values, -1)))
        nu0 = nu0_field(u, 0.0)
        assert np.all(nu0 >= 0.0)
        assert np.all(nu0 <= 0.5 * sup + 1e-14)
        regularised = nu0_field(u, 0.1)
        active = nu0 > 0.0
        assert np.all(regularised[active] < nu0[active])


def test_nu0_scales_with_u():
    rng = np.random.default_rng(31)
    u = NodalField(build_mesh(12), rng.normal(size=12))
    assert np.allclose(nu0_field(u.with_values(3.0 * u.values), 0.0), 3.0 * nu0_field(u, 0.0), rtol=1e-12)


@pytest.mark.parametrize("kind", ["linear", "nonlinear"])
def test_viscosity_never_below_physical(kind):
    rng = np.random.default_rng(37)
    spec = ViscositySpec(kind=kind, nu=0.003, epsilon=0.0, u0_sup=2.0)
    u = NodalField(build_mesh(40), rng.normal(size=40))
    assert np.all(artificial_viscosity(u, spec).values >= spec.nu)


def test_nonlinear_viscosity_constant_state():
    spec = ViscositySpec(kind="nonlinear", nu=0.01)
    assert np.all(nonlinear_viscosity(constant_field(build_mesh(10), 1.0), spec).values == 0.01)


def test_nonlinear_viscosity_at_local_max_reaches_linear_level():
    u = _from_slopes([3.0, -3.0, 1.0, -1.0])
    spec = ViscositySpec(kind="nonlinear", nu=0.0)
    h = u.mesh.h
    sup = max(abs(u.values[0]), abs(u.values[1]))
    assert nonlinear_viscosity(u, spec).values[0] >= h * sup / 2.0 - 1e-15


def test_smooth_profile_viscosity_scaling():
    peaks = []
    ns = [200, 400, 800]
    for n in ns:
        mesh = build_mesh(n)
        u = interpolate(lambda x: np.sin(2 * np.pi * x), mesh)
        nu_hat = nonlinear_viscosity(u, ViscositySpec(kind="nonlinear", nu=0.0))
        mid = mesh.nodes + 0.5 * mesh.h
        away = (np.abs(mid - 0.25) > 0.1) & (np.abs(mid - 0.75) > 0.1)
        peaks.append(np.max(nu_hat.values[away]))
    slope, _ = np.polyfit(np.log(ns), np.log(peaks), 1)
    assert 1.3 <= -slope <= 2.1


def test_excess_viscosity_norm():
    u = NodalField(build_mesh(4), [0.0, 1.0, 0.0, 0.0])
    nu_hat = linear_viscosity(ViscositySpec(kind="linear", u0_sup=1.0), u.mesh)
    expected = np.sqrt(0.25 * 0.125 * 32.0)
    assert excess_viscosity_norm(u, nu_hat, 0.0) == pytest.approx(expected)
    assert excess_viscosity_norm(u, nu_hat, 1.0) == 0.0
