"""
Explicit time stepping of the semidiscrete scheme.

Two-stage SSP Runge-Kutta (Heun), the viscosity recomputed from each stage
state, a CFL rule combining convective and diffusive limits, and an online
record of the diagnostics and estimator integrands of every time level.
"""

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from assembly import SolverError, convective_residual_norm, l2_project, semidiscrete_rhs
from debug_helper import debug
from mesh_field import (
    ElementField,
    Mesh,
    NodalField,
    flux_jump_norm,
    gradient_norm,
    interpolate,
    jump_norm,
    lumped_norm,
    total_variation,
)
from viscosity import (
    ViscosityKind,
    ViscositySpec,
    artificial_viscosity,
    excess_viscosity_norm,
    linear_viscosity,
)

logger = logging.getLogger(__name__)

SPEED_FLOOR = 1e-14
VISCOSITY_FLOOR = 1e-14
GUARD_REL_TOL = 1e-12


class InitialProjection(str, Enum):
    CONSISTENT_L2 = "l2"
    NODAL_INTERPOLANT = "interp"


class StepFailure(RuntimeError):
    """A time step produced non-finite values."""

    def __init__(self, message: str, node: int, t: float, trajectory: Optional["Trajectory"] = None):
        super().__init__(message)
        self.node = node
        self.t = t
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    """
    Discretisation and run parameters of one solve.

    Attributes:
        mesh: Spatial mesh
        viscosity: Artificial viscosity parameters; u0_sup is replaced by the
            sup of the initial state at solve time
        t_final: Final time T > 0
        cfl: Safety factor in (0, 1]
        initial_projection: L2 projection or nodal interpolation of u0
        record_every: Stride of stored snapshots and time increments
        allow_unstable: Accept cfl > 1 (negative-control runs only)
        slope_guard: Redo a nonlinear step with the linear viscosity when it
            raises the maximal slope (or max|u| beyond U0 at epsilon = 0)
    """

    mesh: Mesh
    viscosity: ViscositySpec
    t_final: float = 0.5
    cfl: float = 0.25
    initial_projection: InitialProjection = InitialProjection.CONSISTENT_L2
    record_every: int = 50
    allow_unstable: bool = False
    slope_guard: bool = True

    def __post_init__(self):
        object.__setattr__(self, "initial_projection", InitialProjection(self.initial_projection))
        if not self.t_final > 0:
            raise ValueError(f"Final time must be positive, got {self.t_final}")
        if not self.cfl > 0:
            raise ValueError(f"CFL number must be positive, got {self.cfl}")
        if self.cfl > 1 and not self.allow_unstable:
            raise ValueError(f"CFL number must lie in (0, 1], got {self.cfl}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be at least 1, got {self.record_every}")


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics of the state at one time level, plus the step that reached it."""

    t: float
    dt: float
    max_abs_u: float
    max_slope: float
    total_variation: float
    energy: float
    residual_norm: float
    residual_jump_norm: float
    artvisc_norm: float
    jump_norm: float
    dtgrad_norm: float
    linear_fallback: bool = False


@dataclass
class Trajectory:
    """
    Time history of one solve.

    records holds one entry per time level (t = 0 included); snapshots and
    time increments are kept every record_every steps and at T.
    """

    config: SolverConfig
    viscosity: ViscositySpec
    initial: NodalField
    records: List[StepRecord] = field(default_factory=list)
    snapshot_times: List[float] = field(default_factory=list)
    states: List[NodalField] = field(default_factory=list)
    increment_times: List[float] = field(default_factory=list)
    time_increments: List[NodalField] = field(default_factory=list)
    complete: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([record.t for record in self.records])

    @property
    def final(self) -> NodalField:
        return self.states[-1]

    @property
    def u0_sup(self) -> float:
        return self.viscosity.u0_sup

    @property
    def n_steps(self) -> int:
        return max(0, len(self.records) - 1)

    @property
    def n_fallbacks(self) -> int:
        return sum(1 for record in self.records if record.linear_fallback)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records])


def cfl_dt(u: NodalField, nu_hat: ElementField, cfl: float) -> float:
    """
    Time step from the convective and diffusive limits.

    dt = cfl * min(h / (2 max|u|), h^2 / (2 max nu_hat)), both maxima floored
    so that the result stays finite.
    """
    h = u.mesh.h
    speed = max(SPEED_FLOOR, float(np.max(np.abs(u.values))))
    diffusion = max(VISCOSITY_FLOOR, float(np.max(nu_hat.values)))
    return cfl * min(h / (2.0 * speed), h * h / (2.0 * diffusion))


def _check_finite(values: np.ndarray, t: float, stage: str):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        node = int(bad[0])
        raise StepFailure(f"Non-finite value in {stage} at node {node}", node=node, t=t)


def step_ssprk2(u: NodalField, spec: ViscositySpec, dt: float, nu_hat: Optional[ElementField] = None) -> NodalField:
    """
    One SSP-RK2 step with stage-fresh viscosity.

    u* = u + dt L(u); result = u/2 + (u* + dt L(u*))/2.

    Args:
        u (NodalField): State at t
        spec (ViscositySpec): Viscosity parameters
        dt (float): Step size, > 0
        nu_hat (Optional[ElementField]): nu_hat(u) when the caller already has it

    Returns:
        NodalField: State at t + dt
    """
    if not dt > 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    if nu_hat is None:
        nu_hat = artificial_viscosity(u, spec)
    stage = u.values + dt * semidiscrete_rhs(u, nu_hat).values
    _check_finite(stage, 0.0, "first stage")
    u_star = u.with_values(stage)
    second = u_star.values + dt * semidiscrete_rhs(u_star, artificial_viscosity(u_star, spec)).values
    result = 0.5 * u.values + 0.5 * second
    _check_finite(result, 0.0, "second stage")
    return u.with_values(result)


def linear_fallback(spec: ViscositySpec, u: NodalField) -> ViscositySpec:
    """Linear viscosity bounded by the larger of U0 and max|u|."""
    bound = max(spec.u0_sup, float(np.max(np.abs(u.values))))
    return dataclasses.replace(spec, kind=ViscosityKind.LINEAR, u0_sup=bound)


def breaks_monotonicity(u: NodalField, u_next: NodalField, spec: ViscositySpec) -> bool:
    """
    True when a step raised the maximal slope, or max|u| above U0 at epsilon = 0.
    """
    before = float(np.max(u.slopes()))
    after = float(np.max(u_next.slopes()))
    if after > before + GUARD_REL_TOL * max(abs(before), 1.0):
        return True
    if spec.epsilon == 0.0:
        bound = spec.u0_sup * (1.0 + GUARD_REL_TOL)
        return float(np.max(np.abs(u_next.values))) > bound
    return False


def step_guarded(
    u: NodalField, spec: ViscositySpec, dt: float, nu_hat: ElementField, config: SolverConfig
) -> Tuple[NodalField, float, bool]:
    """
    One SSP-RK2 step, redone with the linear viscosity when the nonlinear one
    breaks the slope or maximum bound.

    Returns:
        Tuple[NodalField, float, bool]: State, step size taken, whether the
        linear viscosity was used
    """
    u_next = step_ssprk2(u, spec, dt, nu_hat=nu_hat)
    if not config.slope_guard or spec.kind is not ViscosityKind.NONLINEAR:
        return u_next, dt, False
    if not breaks_monotonicity(u, u_next, spec):
        return u_next, dt, False

    fallback = linear_fallback(spec, u)
    nu_lin = linear_viscosity(fallback, u.mesh)
    dt_lin = min(dt, cfl_dt(u, nu_lin, config.cfl))
    u_lin = step_ssprk2(u, fallback, dt_lin, nu_hat=nu_lin)
    if breaks_monotonicity(u, u_lin, spec):
        logger.debug(f"Linear fallback still raised the slope bound (dt={dt_lin:.3e})")
    return u_lin, dt_lin, True


def initial_state(config: SolverConfig, u0: Callable) -> NodalField:
    if config.initial_projection is InitialProjection.NODAL_INTERPOLANT:
        return interpolate(u0, config.mesh)
    return l2_project(u0, config.mesh)


def _record(
    u: NodalField, nu_hat: ElementField, nu: float, t: float, dt: float, dtgrad: float, fallback: bool = False
) -> StepRecord:
    slopes = u.slopes()
    return StepRecord(
        t=t,
        dt=dt,
        max_abs_u=float(np.max(np.abs(u.values))),
        max_slope=float(np.max(slopes)),
        total_variation=total_variation(u),
        energy=lumped_norm(u),
        residual_norm=convective_residual_norm(u),
        residual_jump_norm=flux_jump_norm(u),
        artvisc_norm=excess_viscosity_norm(u, nu_hat, nu),
        jump_norm=jump_norm(u),
        dtgrad_norm=dtgrad,
        linear_fallback=fallback,
    )


def _check_record(record: StepRecord, t: float):
    # Finite states can still overflow in the diagnostics.
    bad = [f.name for f in dataclasses.fields(record) if not np.isfinite(getattr(record, f.name))]
    if bad:
        raise StepFailure(f"Non-finite diagnostics {', '.join(bad)}", node=-1, t=t)


def solve(config: SolverConfig, u0: Callable) -> Trajectory:
    """
    Advance u_h from the projected initial data to T.

    Args:
        config (SolverConfig): Run parameters
        u0 (Callable): Vectorised 1-periodic initial data

    Returns:
        Trajectory: Records for every time level, snapshots every record_every steps
    """
    u = initial_state(config, u0)
    u0_sup = float(np.max(np.abs(u.values)))
    if u0_sup <= 0.0:
        logger.warning("Initial data vanishes identically, flooring U0")
        u0_sup = np.finfo(float).tiny
    spec = dataclasses.replace(config.viscosity, u0_sup=u0_sup)
    label = f"{spec.kind.value} eps={spec.epsilon:g}"
    debug.log_solve_start(label, config.mesh.n_elems, config.t_final, u0_sup)
    started = time.perf_counter()

    traj = Trajectory(config=config, viscosity=spec, initial=u)
    nu_hat = artificial_viscosity(u, spec)
    traj.records.append(_record(u, nu_hat, spec.nu, 0.0, 0.0, 0.0))
    traj.snapshot_times.append(0.0)
    traj.states.append(u)

    t = 0.0
    step = 0
    t_final = config.t_final
    while t < t_final:
        dt = cfl_dt(u, nu_hat, config.cfl)
        if t + dt >= t_final:
            dt = t_final - t
        try:
            u_next, dt, fallback = step_guarded(u, spec, dt, nu_hat, config)
            t_next = t_final if t + dt >= t_final else t + dt
            increment = u_next.with_values((u_next.values - u.values) / dt)
            nu_next = artificial_viscosity(u_next, spec)
            record = _record(u_next, nu_next, spec.nu, t_next, dt, gradient_norm(increment), fallback)
            _check_record(record, t_next)
        except (StepFailure, SolverError) as e:
            node = getattr(e, "node", -1)
            debug.log_step_failure(step, t, node, str(e))
            if debug.enable_debug:
                debug.save_debug_state(u.values, f"{label}_N{config.mesh.n_elems}_step{step}")
            raise StepFailure(f"Step {step} from t={t:.6g} failed: {e}", node=node, t=t, trajectory=traj) from e

        step += 1
        t = t_next
        u = u_next
        nu_hat = nu_next
        traj.records.append(record)
        debug.log_progress(step, t, dt, record.max_abs_u)

        if step % config.record_every == 0 or t >= t_final:
            traj.snapshot_times.append(t)
            traj.states.append(u)
            traj.increment_times.append(t)
            traj.time_increments.append(increment)

    traj.complete = True
    if traj.n_fallbacks:
        logger.info(f"{label}: {traj.n_fallbacks} of {step} steps fell back to the linear viscosity")
    debug.log_solve_end(label, step, time.perf_counter() - started)
    return traj
