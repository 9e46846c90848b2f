import dataclasses

import numpy as np
import pytest
from scipy.integrate import trapezoid

from analysis import (
    Constants,
    ErrorReport,
    EstimatorError,
    aposteriori_estimate,
    compute_constants,
    convergence_rates,
    error_norms,
    fitted_order,
    invariant_report,
    observed_rate,
)
from mesh_field import NodalField, build_mesh, constant_field, interpolate
from reference import case_reference, get_case
from time_integration import SolverConfig, solve
from viscosity import ViscositySpec


def _run(u0, n=50, t_final=0.1, kind="nonlinear", nu=0.0, record_every=5):
    config = SolverConfig(
        mesh=build_mesh(n), viscosity=ViscositySpec(kind=kind, nu=nu), t_final=t_final, record_every=record_every
    )
    return solve(config, u0)


def _report(n, err):
    return ErrorReport(n_elems=n, l1_error=err, l2_error=err, delta1_error=err, deltah_error=err)


def test_constants_of_constant_data():
    constants = compute_constants(lambda x: 0.4 + 0.0 * x, build_mesh(20))
    assert constants.u0_sup == pytest.approx(0.4, abs=1e-12)
    assert constants.d0 == pytest.approx(0.0, abs=1e-6)


def test_constants_of_cosine_data():
    case = get_case("cosine")
    constants = compute_constants(case.u0, build_mesh(200), case.u0_prime)
    assert constants.u0_sup == pytest.approx(1.0, abs=1e-3)
    assert constants.d0 == pytest.approx(np.pi, abs=1e-2)
    # Finite differences land on the same value.
    approx = compute_constants(case.u0, build_mesh(200))
    assert approx.d0 == pytest.approx(constants.d0, abs=1e-5)


def test_constants_reject_non_positive_sup():
    with pytest.raises(ValueError):
        Constants(u0_sup=0.0, d0=1.0)


def test_error_norms_examples():
    coarse_mesh, fine_mesh = build_mesh(100), build_mesh(6400)
    sine = interpolate(lambda x: np.sin(2 * np.pi * x), fine_mesh)
    same = interpolate(lambda x: np.sin(2 * np.pi * x), fine_mesh)
    assert error_norms(same, sine) == pytest.approx((0.0, 0.0), abs=1e-14)

    l1, l2 = error_norms(constant_field(coarse_mesh, 0.3), constant_field(fine_mesh, 0.0))
    assert l1 == pytest.approx(0.3)
    assert l2 == pytest.approx(0.3)

    l1, l2 = error_norms(constant_field(coarse_mesh, 0.0), sine)
    assert l1 == pytest.approx(2.0 / np.pi, abs=1e-5)
    assert l2 == pytest.approx(np.sqrt(0.5), abs=1e-5)


def test_l1_norm_handles_sign_change_inside_element():
    mesh = build_mesh(4)
    # Linear from 1 to -1 on I_0, so |e| integrates to h/2 there; I_1 and I_3 give h/2 each too.
    e = NodalField(mesh, [1.0, -1.0, 0.0, 0.0])
    l1, _ = error_norms(constant_field(mesh, 0.0), e)
    assert l1 == pytest.approx(3 * 0.25 * 0.5)


@pytest.mark.parametrize(
    "coarse, fine, expected",
    [(4.0, 1.0, 2.0), (0.036, 0.018, 1.0), (0.071, 0.049, 0.535)],
)
def test_observed_rate_examples(coarse, fine, expected):
    assert observed_rate(coarse, fine, 100, 200) == pytest.approx(expected, abs=1e-3)


def test_observed_rate_absent_for_zero_error():
    assert observed_rate(0.0, 1.0, 100, 200) is None


def test_convergence_rates_self_similar_errors():
    reports = [_report(n, 3.0 * n**-1.5) for n in (400, 100, 200, 800)]
    rows = convergence_rates(reports)
    assert [row.n_elems for row in rows] == [100, 200, 400, 800]
    assert all(rate is None for rate in rows[0].rates.values())
    for row in rows[1:]:
        for column in ("l1", "l2", "d1", "dh"):
            assert row.rate(column) == pytest.approx(1.5)


def test_convergence_rates_need_doubling():
    with pytest.raises(ValueError):
        convergence_rates([_report(100, 1.0), _report(300, 0.5)])


def test_error_report_columns():
    report = ErrorReport(100, 0.1, 0.2, 0.3, 0.4, extra_errors={"d0.1": 0.5})
    assert report.errors() == {"l1": 0.1, "l2": 0.2, "d1": 0.3, "dh": 0.4, "d0.1": 0.5}
    with pytest.raises(ValueError):
        ErrorReport(100, -0.1, 0.2, 0.3, 0.4)


def test_fitted_order():
    assert fitted_order([100, 200, 400], [1.0, 0.25, 0.0625]) == pytest.approx(2.0)


def test_estimator_vanishes_for_constant_state():
    u0 = lambda x: 0.5 + 0.0 * x  # noqa: E731
    traj = _run(u0)
    fine = constant_field(build_mesh(200), 0.5)
    breakdown = aposteriori_estimate(traj, fine, compute_constants(u0, traj.config.mesh), 1.0, 0.0)
    assert breakdown.total == pytest.approx(0.0, abs=1e-12)
    assert breakdown.artvisc_u0_factor == pytest.approx(np.sqrt(0.5))


def test_estimator_terms_are_non_negative():
    case = get_case("smooth")
    traj = _run(case.u0, kind="linear", nu=0.001)
    fine = case_reference(case, 0.0, 400)
    constants = compute_constants(case.u0, traj.config.mesh, case.u0_prime)
    breakdown = aposteriori_estimate(traj, fine, constants, 1.0, 0.001)
    values = dict(breakdown.as_rows())
    assert all(value >= 0.0 for value in values.values())
    assert breakdown.term_jump > 0.0
    inner = sum(values[k] for k in ("term_initial", "term_residual", "term_dtgrad", "term_artvisc", "term_jump"))
    assert breakdown.total == pytest.approx(breakdown.prefactor * inner)
    h = traj.config.mesh.h
    assert breakdown.prefactor == pytest.approx(np.exp(constants.d0 * 0.1) * np.sqrt(h))


def test_estimator_jump_term_zero_without_physical_viscosity():
    case = get_case("smooth")
    traj = _run(case.u0)
    constants = compute_constants(case.u0, traj.config.mesh, case.u0_prime)
    breakdown = aposteriori_estimate(traj, case_reference(case, 0.0, 400), constants, 1.0, 0.0)
    assert breakdown.term_jump == 0.0


def test_estimator_rejects_incomplete_trajectories():
    case = get_case("smooth")
    traj = _run(case.u0)
    constants = compute_constants(case.u0, traj.config.mesh)
    fine = case_reference(case, 0.0, 400)
    with pytest.raises(EstimatorError):
        aposteriori_estimate(dataclasses.replace(traj, time_increments=[]), fine, constants, 1.0, 0.0)
    with pytest.raises(EstimatorError):
        aposteriori_estimate(dataclasses.replace(traj, complete=False), fine, constants, 1.0, 0.0)
    with pytest.raises(ValueError):
        aposteriori_estimate(traj, fine, constants, 0.0, 0.0)


@pytest.mark.parametrize("kind", ["linear", "nonlinear"])
def test_invariant_report_passes_for_scheme_output(kind):
    case = get_case("smooth")
    traj = _run(case.u0, n=100, t_final=0.5, kind=kind)
    report = invariant_report(traj, compute_constants(case.u0, traj.config.mesh), 0.0)
    assert report.passed, [check.name for check in report.failures()]
    assert report.check("max_abs_u").worst_margin >= 0.0


def test_invariant_report_flags_corrupted_record():
    case = get_case("smooth")
    traj = _run(case.u0, n=50, t_final=0.2)
    records = list(traj.records)
    records[-1] = dataclasses.replace(records[-1], max_abs_u=1.1 * traj.u0_sup)
    corrupted = dataclasses.replace(traj, records=records)
    report = invariant_report(corrupted, compute_constants(case.u0, traj.config.mesh), 0.0)
    assert not report.passed
    sup = report.check("max_abs_u")
    assert not sup.passed
    assert sup.violations[0].step == len(records) - 1
    assert sup.worst_margin < 0.0


def test_invariant_report_skips_perturbed_bounds_for_large_epsilon():
    case = get_case("smooth")
    traj = _run(case.u0, n=50, t_final=0.5)
    report = invariant_report(traj, compute_constants(case.u0, traj.config.mesh), 4.0)
    for name in ("max_abs_u", "max_slope"):
        assert report.check(name).skipped
        assert report.check(name).notice
    assert report.check("total_variation").skipped
    assert not report.check("energy_final").skipped
    with pytest.raises(KeyError):
        report.check("unknown")


def test_total_variation_only_checked_without_perturbation():
    case = get_case("smooth")
    traj = _run(case.u0, n=50, t_final=0.2)
    records = list(traj.records)
    records[-1] = dataclasses.replace(records[-1], total_variation=records[-2].total_variation + 1e-3)
    corrupted = dataclasses.replace(traj, records=records)
    constants = compute_constants(case.u0, traj.config.mesh)
    assert not invariant_report(corrupted, constants, 0.0).check("total_variation").passed
    perturbed = invariant_report(corrupted, constants, 0.02).check("total_variation")
    assert perturbed.skipped and perturbed.passed
    assert "epsilon = 0" in perturbed.notice


@pytest.mark.slow
def test_estimator_decreases_under_refinement():
    case = get_case("smooth")
    ns = [100, 200, 400, 800]
    totals = []
    fine = case_reference(case, 0.0, 1600)
    for n in ns:
        traj = _run(case.u0, n=n, t_final=0.5, record_every=50)
        constants = compute_constants(case.u0, traj.config.mesh, case.u0_prime)
        totals.append(aposteriori_estimate(traj, fine, constants, 1.0, 0.0).total)
    assert np.all(np.diff(totals) < 0.0)
    assert fitted_order(ns, totals) >= 0.4


def test_time_derivative_term_uses_trapezoid_rule():
    case = get_case("smooth")
    traj = _run(case.u0, kind="linear")
    constants = compute_constants(case.u0, traj.config.mesh, case.u0_prime)
    breakdown = aposteriori_estimate(traj, case_reference(case, 0.0, 400), constants, 1.0, 0.0)
    levels = traj.column("dtgrad_norm")
    assert levels[0] == 0.0
    levels[0] = levels[1]
    h = traj.config.mesh.h
    assert breakdown.term_dtgrad == pytest.approx(h**1.5 * trapezoid(levels, traj.times), rel=1e-14)
