"""
Post-processing of solver runs.

Error norms against a fine reference, convergence rates, the constants U0 and
D0, the a posteriori estimator term by term, and the report of the discrete
maximum principle, slope, total variation and energy invariants.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from assembly import l2_project
from mesh_field import Mesh, NodalField, inject
from time_integration import Trajectory

logger = logging.getLogger(__name__)

SAMPLES_PER_ELEMENT = 16
DMP_REL_TOL = 1e-10
SLOPE_REL_TOL = 1e-8
ABS_TOL = 1e-8
ENERGY_STEP_FACTOR = 10.0
ENERGY_FINAL_REL_TOL = 1e-12


class EstimatorError(ValueError):
    """Trajectory lacks the records the estimator integrates."""


@dataclass(frozen=True)
class Constants:
    u0_sup: float
    d0: float

    def __post_init__(self):
        if not self.u0_sup > 0:
            raise ValueError(f"U0 must be positive, got {self.u0_sup}")


def compute_constants(u0: Callable, mesh: Mesh, u0_prime: Optional[Callable] = None) -> Constants:
    """
    U0 = sup |pi_h u0| and D0 = sup (u0' + (pi_h u0)') / 2.

    Both suprema are taken over the coarse nodes and 16 samples per element.
    Without an analytic derivative u0' is approximated by central differences.

    Args:
        u0 (Callable): Vectorised 1-periodic initial data
        mesh (Mesh): Solver mesh
        u0_prime (Optional[Callable]): Derivative of u0

    Returns:
        Constants: U0 and D0
    """
    projected = l2_project(u0, mesh)
    n = mesh.n_elems
    theta = (np.arange(SAMPLES_PER_ELEMENT) + 0.5) / SAMPLES_PER_ELEMENT
    x = (mesh.nodes[:, None] + mesh.h * theta[None, :]).reshape(-1)
    element = np.repeat(np.arange(n), SAMPLES_PER_ELEMENT)

    u0_sup = max(float(np.max(np.abs(projected.values))), float(np.max(np.abs(projected(x)))))
    if u0_prime is not None:
        du0 = np.asarray(u0_prime(x), dtype=float)
    else:
        step = 1e-6
        du0 = (np.asarray(u0(x + step), dtype=float) - np.asarray(u0(x - step), dtype=float)) / (2.0 * step)
    d0 = float(np.max(0.5 * (du0 + projected.slopes()[element])))

    if u0_sup <= 0.0:
        logger.warning("Projected initial data vanish, flooring U0")
        u0_sup = np.finfo(float).tiny
    return Constants(u0_sup=u0_sup, d0=d0)


def _pw_linear_l1(a: np.ndarray, b: np.ndarray, h: float) -> float:
    # Exact integral of |linear| over each element, with a sign change handled separately.
    same_sign = a * b >= 0.0
    abs_sum = np.abs(a) + np.abs(b)
    crossing = np.divide(a * a + b * b, 2.0 * abs_sum, out=np.zeros_like(a), where=abs_sum > 0.0)
    return float(np.sum(np.where(same_sign, 0.5 * np.abs(a + b), crossing)) * h)


def _pw_linear_l2(a: np.ndarray, b: np.ndarray, h: float) -> float:
    return float(np.sqrt(np.sum((h / 3.0) * (a * a + a * b + b * b))))


def error_field(u_h: NodalField, u_ref: NodalField) -> NodalField:
    """u_ref - u_h at the fine nodes."""
    return u_ref.with_values(u_ref.values - inject(u_h, u_ref.mesh).values)


def error_norms(u_h: NodalField, u_ref: NodalField) -> Tuple[float, float]:
    """
    L1 and L2 norms of u_ref - u_h on the fine mesh.

    Args:
        u_h (NodalField): Coarse solution
        u_ref (NodalField): Reference on a mesh refining u_h.mesh

    Returns:
        Tuple[float, float]: (l1, l2)
    """
    e = error_field(u_h, u_ref).values
    nxt = np.roll(e, -1)
    h = u_ref.mesh.h
    return _pw_linear_l1(e, nxt, h), _pw_linear_l2(e, nxt, h)


@dataclass(frozen=True)
class ErrorReport:
    """
    One row of a convergence table.

    extra_errors holds filtered errors for additional filter widths, keyed by
    their column name (e.g. "d0.1"). rates maps column name to the observed
    order against the previous row, None when absent.
    """

    n_elems: int
    l1_error: float
    l2_error: float
    delta1_error: float
    deltah_error: float
    extra_errors: Dict[str, float] = field(default_factory=dict)
    rates: Dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.errors().items():
            if not value >= 0.0:
                raise ValueError(f"Error column {name} must be non-negative, got {value}")

    def errors(self) -> Dict[str, float]:
        columns = {"l1": self.l1_error, "l2": self.l2_error, "d1": self.delta1_error, "dh": self.deltah_error}
        columns.update(self.extra_errors)
        return columns

    def rate(self, column: str) -> Optional[float]:
        return self.rates.get(column)


def observed_rate(coarse_error: float, fine_error: float, n_coarse: int, n_fine: int) -> Optional[float]:
    if coarse_error <= 0.0 or fine_error <= 0.0:
        return None
    return math.log(coarse_error / fine_error) / math.log(n_fine / n_coarse)


def convergence_rates(reports: Sequence[ErrorReport]) -> List[ErrorReport]:
    """
    Fill in log2(err_{k-1} / err_k) for every column.

    The first row gets no rates; a zero error on either side leaves the rate absent.
    """
    result = []
    previous = None
    for report in sorted(reports, key=lambda r: r.n_elems):
        rates: Dict[str, Optional[float]] = {}
        if previous is not None:
            if report.n_elems != 2 * previous.n_elems:
                raise ValueError(f"Rates need doubling meshes, got N={previous.n_elems} then N={report.n_elems}")
            prev_errors = previous.errors()
            for column, value in report.errors().items():
                rates[column] = observed_rate(prev_errors.get(column, 0.0), value, previous.n_elems, report.n_elems)
        else:
            rates = {column: None for column in report.errors()}
        result.append(replace(report, rates=rates))
        previous = report
    return result


def fitted_order(ns: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares order p in value ~ C N^(-p)."""
    slope, _ = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)
    return float(-slope)


@dataclass(frozen=True)
class EstimatorBreakdown:
    """
    Terms of the a posteriori bound.

    total = prefactor * (term_initial + term_residual + term_dtgrad
    + term_artvisc + term_jump). term_residual_jump and artvisc_u0_factor are
    reported alongside and do not enter the total.
    """

    term_initial: float
    term_residual: float
    term_dtgrad: float
    term_artvisc: float
    term_jump: float
    prefactor: float
    total: float
    term_residual_jump: float = 0.0
    artvisc_u0_factor: float = 1.0

    def as_rows(self) -> List[Tuple[str, float]]:
        return [
            ("term_initial", self.term_initial),
            ("term_residual", self.term_residual),
            ("term_dtgrad", self.term_dtgrad),
            ("term_artvisc", self.term_artvisc),
            ("term_jump", self.term_jump),
            ("prefactor", self.prefactor),
            ("total", self.total),
            ("term_residual_jump", self.term_residual_jump),
            ("artvisc_u0_factor", self.artvisc_u0_factor),
        ]


def _dtgrad_levels(traj: Trajectory) -> np.ndarray:
    # Level 0 has no incoming step; it takes the rate of the first step.
    levels = traj.column("dtgrad_norm").copy()
    levels[0] = levels[1]
    return levels


def aposteriori_estimate(
    traj: Trajectory,
    u_ref_initial: NodalField,
    constants: Constants,
    delta: float,
    nu: float,
) -> EstimatorBreakdown:
    """
    Evaluate the a posteriori estimator of the filtered error at T.

    Time integrals use the trapezoid rule over every time level.

    Args:
        traj (Trajectory): Complete run
        u_ref_initial (NodalField): u0 sampled on the fine mesh
        constants (Constants): U0 and D0 of the initial data
        delta (float): Filter width
        nu (float): Physical viscosity

    Returns:
        EstimatorBreakdown: All terms and the total
    """
    if not traj.complete:
        raise EstimatorError("Trajectory did not reach its final time")
    if len(traj.records) < 2 or not traj.time_increments:
        raise EstimatorError("Trajectory has no recorded time increments")
    if not delta > 0:
        raise ValueError(f"Filter width must be positive, got {delta}")

    h = traj.config.mesh.h
    t_final = traj.config.t_final
    times = traj.times

    term_initial = math.sqrt(h) * error_norms(traj.initial, u_ref_initial)[1]
    term_residual = math.sqrt(h) * float(trapezoid(traj.column("residual_norm"), times))
    term_dtgrad = h**1.5 * float(trapezoid(_dtgrad_levels(traj), times))
    term_artvisc = float(trapezoid(traj.column("artvisc_norm"), times))
    term_jump = h * math.sqrt(nu * float(trapezoid(traj.column("jump_norm") ** 2, times)))
    term_residual_jump = h * float(trapezoid(traj.column("residual_jump_norm"), times))

    prefactor = math.exp(constants.d0 * t_final) * math.sqrt(h / (delta * delta))
    total = prefactor * (term_initial + term_residual + term_dtgrad + term_artvisc + term_jump)
    logger.debug(f"Estimator N={traj.config.mesh.n_elems} delta={delta:g}: total={total:.4e}")
    return EstimatorBreakdown(
        term_initial=term_initial,
        term_residual=term_residual,
        term_dtgrad=term_dtgrad,
        term_artvisc=term_artvisc,
        term_jump=term_jump,
        prefactor=prefactor,
        total=total,
        term_residual_jump=term_residual_jump,
        artvisc_u0_factor=math.sqrt(constants.u0_sup),
    )


@dataclass(frozen=True)
class Violation:
    step: int
    t: float
    margin: float


@dataclass
class InvariantCheck:
    """
    One invariant evaluated over a trajectory.

    margin = bound - value at each step, so a check passes when every margin
    is non-negative.
    """

    name: str
    worst_margin: float = math.inf
    worst_step: int = -1
    violations: List[Violation] = field(default_factory=list)
    skipped: bool = False
    notice: str = ""

    @property
    def passed(self) -> bool:
        return self.skipped or not self.violations

    def observe(self, step: int, t: float, margin: float):
        if margin < self.worst_margin or self.worst_step < 0:
            self.worst_margin = margin
            self.worst_step = step
        if not margin >= 0.0:
            self.violations.append(Violation(step, t, margin))


@dataclass
class InvariantReport:
    checks: List[InvariantCheck]
    u0_sup: float
    d0: float
    epsilon: float

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[InvariantCheck]:
        return [check for check in self.checks if not check.passed]

    def check(self, name: str) -> InvariantCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


def invariant_report(traj: Trajectory, constants: Constants, epsilon: float) -> InvariantReport:
    """
    Check the monotonicity invariants at every recorded time level.

    With epsilon = 0: max|u| <= U0 (1 + 1e-10) and the maximal slope does not
    grow beyond 1e-8 relative slack. With 0 < epsilon T < 1 the perturbed
    bounds (1 + eps t) U0 and slope_0 + U0 (1 + eps t) eps t apply instead;
    for epsilon T >= 1 those two checks are skipped with a notice. The
    perturbed maximum principle gives no total variation bound, so total
    variation is only checked for epsilon = 0. Lumped energy is checked in
    every case.
    """
    records = traj.records
    u0_sup = traj.u0_sup
    t_final = traj.config.t_final

    sup_check = InvariantCheck("max_abs_u")
    slope_check = InvariantCheck("max_slope")
    tv_check = InvariantCheck("total_variation")
    energy_check = InvariantCheck("energy_step")
    energy_final = InvariantCheck("energy_final")

    perturbed = epsilon > 0.0
    if perturbed and epsilon * t_final >= 1.0:
        notice = f"epsilon*T = {epsilon * t_final:.3g} >= 1, perturbed bounds do not apply"
        for check in (sup_check, slope_check):
            check.skipped = True
            check.notice = notice
        logger.warning(f"Skipping max|u| and slope checks: {notice}")
    if perturbed:
        tv_check.skipped = True
        tv_check.notice = "total variation only diminishes for epsilon = 0"
        logger.info(f"Skipping total variation check at epsilon={epsilon:g}")

    slope_0 = records[0].max_slope
    for step, record in enumerate(records):
        t = record.t
        if not sup_check.skipped:
            if perturbed:
                bound = (1.0 + epsilon * t) * u0_sup + ABS_TOL
            else:
                bound = u0_sup * (1.0 + DMP_REL_TOL)
            sup_check.observe(step, t, bound - record.max_abs_u)

        if step == 0:
            continue
        prev = records[step - 1]
        if not slope_check.skipped:
            if perturbed:
                bound = slope_0 + u0_sup * (1.0 + epsilon * t) * epsilon * t + ABS_TOL
            else:
                bound = prev.max_slope + SLOPE_REL_TOL * abs(prev.max_slope)
            slope_check.observe(step, t, bound - record.max_slope)
        if not tv_check.skipped:
            tv_check.observe(step, t, prev.total_variation + ABS_TOL - record.total_variation)
        energy_check.observe(
            step, t, prev.energy * (1.0 + ENERGY_STEP_FACTOR * record.dt**2) - record.energy
        )

    first, last = records[0], records[-1]
    energy_final.observe(len(records) - 1, last.t, first.energy * (1.0 + ENERGY_FINAL_REL_TOL) - last.energy)

    report = InvariantReport(
        checks=[sup_check, slope_check, tv_check, energy_check, energy_final],
        u0_sup=u0_sup,
        d0=constants.d0,
        epsilon=epsilon,
    )
    if not report.passed:
        names = ", ".join(check.name for check in report.failures())
        logger.warning(f"Invariant violations in: {names}")
    return report
