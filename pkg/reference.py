"""
Exact entropy solutions of inviscid Burgers used as references.

Smooth data are sampled before breaking through the characteristics fixed
point u = u0(x - u t). Piecewise-linear data are evolved exactly by front
tracking: linear segments stay linear, breakpoints move along characteristics
or as Rankine-Hugoniot shocks, and collapses, absorptions and shock mergers
are processed as discrete events.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from mesh_field import Mesh, NodalField
from time_integration import SolverConfig, solve
from viscosity import ViscositySpec

logger = logging.getLogger(__name__)

MAX_FIXED_POINT_ITERATIONS = 10_000
DAMPING = 0.5
MAX_EVENTS = 10_000
EVENT_SCAN_POINTS = 128
MERGE_TOL = 1e-11
CONTACT_TOL = 1e-12
BREAKING_SAMPLES = 4096


class ExactSolutionError(RuntimeError):
    """Exact solution cannot be computed for the requested data or time."""


@dataclass(frozen=True)
class Breakpoint:
    """Kink or shock of a piecewise-linear profile."""

    position: float
    value_left: float
    value_right: float
    is_shock: bool = False


@dataclass(frozen=True)
class PwLinearExact:
    """
    Periodic piecewise-linear profile at a given time.

    Between consecutive breakpoints the profile is linear, running from the
    value_right of one breakpoint to the value_left of the next; the last
    segment wraps around to the first breakpoint.
    """

    breakpoints: Tuple[Breakpoint, ...]
    time: float = 0.0

    def __post_init__(self):
        bps = tuple(self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        if not bps:
            raise ExactSolutionError("Piecewise-linear profile needs at least one breakpoint")
        positions = np.array([bp.position for bp in bps])
        if positions[0] < 0.0 or positions[-1] >= 1.0:
            raise ExactSolutionError(f"Breakpoint positions must lie in [0, 1), got {positions.tolist()}")
        if np.any(np.diff(positions) <= 0.0):
            raise ExactSolutionError("Breakpoint positions must be strictly increasing (zero-length segment)")
        for bp in bps:
            if bp.is_shock and not bp.value_left > bp.value_right:
                raise ExactSolutionError(
                    f"Shock at x={bp.position} violates the entropy condition ({bp.value_left} <= {bp.value_right})"
                )
            if not bp.is_shock and bp.value_left != bp.value_right:
                raise ExactSolutionError(f"Continuous breakpoint at x={bp.position} has unequal one-sided values")

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], time: float = 0.0) -> "PwLinearExact":
        """
        Continuous periodic profile through the given (x, value) nodes.

        Positions are taken modulo 1; repeated positions and a duplicate of
        the first node at x = 1 are rejected.
        """
        pairs = [(float(x) % 1.0, float(v)) for x, v in points]
        pairs.sort()
        positions = [x for x, _ in pairs]
        if len(set(positions)) != len(positions):
            raise ExactSolutionError("Initial breakpoints contain a zero-length segment")
        return cls(tuple(Breakpoint(x, v, v, False) for x, v in pairs), time)

    @property
    def positions(self) -> np.ndarray:
        return np.array([bp.position for bp in self.breakpoints])

    @property
    def shocks(self) -> List[Breakpoint]:
        return [bp for bp in self.breakpoints if bp.is_shock]

    def _segments(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        starts = self.positions
        ends = np.append(starts[1:], starts[0] + 1.0)
        start_vals = np.array([bp.value_right for bp in self.breakpoints])
        end_vals = np.roll(np.array([bp.value_left for bp in self.breakpoints]), -1)
        return starts, ends, start_vals, end_vals

    def __call__(self, x):
        starts, ends, start_vals, end_vals = self._segments()
        xs = np.mod(np.asarray(x, dtype=float), 1.0)
        xs = np.where(xs < starts[0], xs + 1.0, xs)
        index = np.clip(np.searchsorted(starts, xs, side="right") - 1, 0, len(starts) - 1)
        theta = (xs - starts[index]) / (ends[index] - starts[index])
        result = start_vals[index] + theta * (end_vals[index] - start_vals[index])
        if np.ndim(x) == 0:
            return float(result)
        return result

    def slopes(self) -> np.ndarray:
        starts, ends, start_vals, end_vals = self._segments()
        return (end_vals - start_vals) / (ends - starts)

    def derivative(self, x):
        """Piecewise-constant derivative (right-continuous at breakpoints)."""
        starts = self.positions
        xs = np.mod(np.asarray(x, dtype=float), 1.0)
        xs = np.where(xs < starts[0], xs + 1.0, xs)
        index = np.clip(np.searchsorted(starts, xs, side="right") - 1, 0, len(starts) - 1)
        result = self.slopes()[index]
        if np.ndim(x) == 0:
            return float(result)
        return result

    def max_slope(self) -> float:
        return float(np.max(self.slopes()))

    def mean(self) -> float:
        """Exact integral over one period."""
        starts, ends, start_vals, end_vals = self._segments()
        return float(np.sum(0.5 * (start_vals + end_vals) * (ends - starts)))

    def primitive(self, x):
        """Integral of the profile from the first breakpoint to x, continued periodically."""
        starts, ends, start_vals, end_vals = self._segments()
        widths = ends - starts
        cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (start_vals + end_vals) * widths)])
        offset = np.asarray(x, dtype=float) - starts[0]
        periods = np.floor(offset)
        ys = starts[0] + offset - periods
        index = np.clip(np.searchsorted(starts, ys, side="right") - 1, 0, len(starts) - 1)
        run = ys - starts[index]
        slope = (end_vals[index] - start_vals[index]) / widths[index]
        result = periods * cumulative[-1] + cumulative[index] + run * (start_vals[index] + 0.5 * slope * run)
        if np.ndim(x) == 0:
            return float(result)
        return result

    def cell_averages(self, left, right) -> np.ndarray:
        """Exact averages over the intervals [left, right], shocks included."""
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        return (self.primitive(right) - self.primitive(left)) / (right - left)

    def bounds(self) -> Tuple[float, float]:
        values = [v for bp in self.breakpoints for v in (bp.value_left, bp.value_right)]
        return min(values), max(values)


@dataclass
class _FrontState:
    """Breakpoints at a reference time, positions unwrapped and increasing over one period."""

    t_ref: float
    pos: np.ndarray
    vl: np.ndarray
    vr: np.ndarray
    shock: np.ndarray

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    def segment_slopes(self) -> np.ndarray:
        ends = np.append(self.pos[1:], self.pos[0] + 1.0)
        return (np.roll(self.vl, -1) - self.vr) / (ends - self.pos)

    def advance(self, tau) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Positions and one-sided values after time tau, assuming no event.

        tau may be a scalar or an array; results broadcast as (n,) + shape(tau).
        """
        tau = np.asarray(tau, dtype=float)
        shape = (self.n,) + (1,) * tau.ndim
        x0 = self.pos.reshape(shape)
        ua = self.vl.reshape(shape)
        ub = self.vr.reshape(shape)
        s = self.segment_slopes()
        sl = np.roll(s, 1).reshape(shape)
        sr = s.reshape(shape)
        is_shock = self.shock.reshape(shape)

        with np.errstate(divide="ignore", invalid="ignore"):
            root_l = np.sqrt(np.maximum(1.0 + sl * tau, 0.0))
            root_r = np.sqrt(np.maximum(1.0 + sr * tau, 0.0))
            width = (ua - ub) * tau
            denom = root_l + root_r
            left_part = np.where(denom > 0.0, width * root_l / np.where(denom > 0.0, denom, 1.0), 0.5 * width)
            x_left = x0 + ua * tau
            shock_pos = x_left - left_part
            shock_vl = ua - sl * left_part / (1.0 + sl * tau)
            shock_vr = ub + sr * (width - left_part) / (1.0 + sr * tau)

        pos = np.where(is_shock, shock_pos, x0 + ua * tau)
        vl = np.where(is_shock, shock_vl, ua)
        vr = np.where(is_shock, shock_vr, ub)
        return pos, vl, vr

    def gaps(self, tau) -> np.ndarray:
        pos, _, _ = self.advance(tau)
        ends = np.concatenate([pos[1:], pos[:1] + 1.0], axis=0)
        return ends - pos


def _state_from_profile(profile: PwLinearExact) -> _FrontState:
    return _FrontState(
        t_ref=profile.time,
        pos=profile.positions.astype(float),
        vl=np.array([bp.value_left for bp in profile.breakpoints], dtype=float),
        vr=np.array([bp.value_right for bp in profile.breakpoints], dtype=float),
        shock=np.array([bp.is_shock for bp in profile.breakpoints], dtype=bool),
    )


def _profile_from_arrays(t: float, pos, vl, vr, shock) -> PwLinearExact:
    wrapped = np.mod(pos, 1.0)
    # np.mod of a tiny negative number rounds to exactly 1.0
    wrapped = np.where(wrapped >= 1.0, 0.0, wrapped)
    order = np.argsort(wrapped, kind="stable")
    bps = []
    for k in order:
        if shock[k]:
            bps.append(Breakpoint(float(wrapped[k]), float(vl[k]), float(vr[k]), True))
        else:
            bps.append(Breakpoint(float(wrapped[k]), float(vl[k]), float(vl[k]), False))
    return PwLinearExact(tuple(bps), t)


def _next_event(state: _FrontState, horizon: float) -> Optional[float]:
    """Relative time of the first event within horizon, or None."""
    slopes = state.segment_slopes()
    collapse = np.where(slopes < 0.0, -1.0 / np.where(slopes < 0.0, slopes, -1.0), np.inf)
    first_collapse = float(np.min(collapse))
    collapse_limited = first_collapse <= horizon
    limit = first_collapse if collapse_limited else horizon

    touches_shock = state.shock | np.roll(state.shock, -1)
    if np.any(touches_shock) and limit > 0.0:
        grid = limit * np.arange(1, EVENT_SCAN_POINTS) / EVENT_SCAN_POINTS
        last = limit * (1.0 - 1e-10) if collapse_limited else limit
        grid = np.append(grid, last)
        gaps = state.gaps(grid)
        gaps[~touches_shock] = np.inf
        closed = gaps <= 0.0
        if np.any(closed):
            first_index = int(np.min(np.argmax(closed[np.any(closed, axis=1)], axis=1)))
            lo = 0.0 if first_index == 0 else float(grid[first_index - 1])
            hi = float(grid[first_index])
            roots = []
            for k in np.flatnonzero(closed[:, first_index]):
                def gap_k(tau, k=k):
                    return float(state.gaps(tau)[k])

                if gap_k(hi) == 0.0:
                    roots.append(hi)
                else:
                    roots.append(brentq(gap_k, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
            return min(roots)

    if collapse_limited:
        return first_collapse
    return None


def _rereference(state: _FrontState, tau: float) -> _FrontState:
    """Advance to an event time and merge the breakpoints bounding vanished segments."""
    pos, vl, vr = state.advance(tau)
    n = state.n
    ends = np.append(pos[1:], pos[0] + 1.0)
    vanished = (ends - pos) <= MERGE_TOL
    if np.all(vanished):
        raise ExactSolutionError("Every segment of the profile vanished at once")

    # Start at a breakpoint whose left segment survives so no group wraps past the start.
    start = next(k for k in range(n) if not vanished[(k - 1) % n])
    new_pos, new_vl, new_vr = [], [], []
    k = start
    visited = 0
    while visited < n:
        offset = 1.0 if k < start else 0.0
        first_pos = pos[k] + offset
        left_value = vl[k]
        while vanished[k] and visited < n - 1:
            k = (k + 1) % n
            visited += 1
        new_pos.append(first_pos)
        new_vl.append(left_value)
        new_vr.append(vr[k])
        k = (k + 1) % n
        visited += 1

    new_pos = np.array(new_pos)
    new_vl = np.array(new_vl)
    new_vr = np.array(new_vr)
    if np.any(new_vl < new_vr - CONTACT_TOL):
        raise ExactSolutionError(f"Rarefaction discontinuity produced at t={state.t_ref + tau}")
    is_shock = new_vl - new_vr > CONTACT_TOL
    mid = 0.5 * (new_vl + new_vr)
    new_vl = np.where(is_shock, new_vl, mid)
    new_vr = np.where(is_shock, new_vr, mid)
    if len(new_pos) < n:
        logger.debug(f"Front tracking event at t={state.t_ref + tau:.12g}: {n} -> {len(new_pos)} breakpoints")
    return _FrontState(state.t_ref + tau, new_pos, new_vl, new_vr, is_shock)


def front_tracking_solve(initial: PwLinearExact, t: float) -> PwLinearExact:
    """
    Exact entropy solution of periodic piecewise-linear data at time t.

    Args:
        initial (PwLinearExact): Profile at its own time (usually 0)
        t (float): Target time, not before initial.time

    Returns:
        PwLinearExact: Profile at time t
    """
    if t < initial.time:
        raise ExactSolutionError(f"Cannot evolve backwards from t={initial.time} to t={t}")
    state = _state_from_profile(initial)
    for _ in range(MAX_EVENTS):
        horizon = t - state.t_ref
        if horizon <= 0.0:
            return _profile_from_arrays(t, state.pos, state.vl, state.vr, state.shock)
        tau = _next_event(state, horizon)
        if tau is None or tau > horizon:
            pos, vl, vr = state.advance(horizon)
            return _profile_from_arrays(t, pos, vl, vr, state.shock)
        state = _rereference(state, tau)
    raise ExactSolutionError(f"Front tracking exceeded {MAX_EVENTS} events before t={t}")


def breaking_time(u0_prime: Callable, n_samples: int = BREAKING_SAMPLES) -> float:
    """First shock time 1 / max(-u0'), by sampling; inf when u0 is non-decreasing."""
    x = (np.arange(n_samples) + 0.5) / n_samples
    steepest = float(np.max(-np.asarray(u0_prime(x), dtype=float)))
    if steepest <= 0.0:
        return math.inf
    return 1.0 / steepest


def _value_bounds(u0: Callable) -> Tuple[float, float]:
    samples = np.asarray(u0(np.linspace(0.0, 1.0, 2049)), dtype=float)
    lo, hi = float(np.min(samples)), float(np.max(samples))
    pad = 1e-9 * max(1.0, hi - lo)
    return lo - pad, hi + pad


def characteristics_fixed_point(
    u0: Callable,
    x: float,
    t: float,
    tol: float = 1e-13,
    max_iter: int = MAX_FIXED_POINT_ITERATIONS,
) -> float:
    """
    Solve u = u0(x - u t) for a pre-shock time.

    Plain iteration first; damping by 0.5 once the update stops shrinking,
    and a bracketed root solve when damping does not help either.

    Args:
        u0 (Callable): Smooth 1-periodic initial data
        x (float): Position
        t (float): Time before breaking
        tol (float): Tolerance on the update

    Returns:
        float: u(x, t)
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    u = float(u0(x))
    if t == 0.0:
        return u

    damping = 1.0
    previous = math.inf
    for _ in range(max_iter):
        update = float(u0(x - u * t)) - u
        if abs(update) <= tol:
            return u + update
        if abs(update) >= previous:
            if damping == 1.0:
                damping = DAMPING
            else:
                return _bracketed_fixed_point(u0, x, t, tol)
        previous = abs(update)
        u += damping * update
    raise ExactSolutionError(f"Fixed point at x={x}, t={t} did not converge in {max_iter} iterations")


def _bracketed_fixed_point(u0: Callable, x: float, t: float, tol: float) -> float:
    lo, hi = _value_bounds(u0)

    def g(u):
        return u - float(u0(x - u * t))

    if g(lo) * g(hi) > 0:
        raise ExactSolutionError(f"No sign change of u - u0(x - u t) at x={x}, t={t}")
    u = brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    logger.debug(f"Fixed point at x={x:.6f} resolved by bracketing")
    return float(u)


@dataclass(frozen=True)
class SmoothReference:
    """Pre-shock exact solution of smooth data at time t."""

    u0: Callable
    time: float
    u0_prime: Optional[Callable] = None
    tol: float = 1e-13

    def __post_init__(self):
        if self.u0_prime is not None and self.time >= breaking_time(self.u0_prime):
            raise ExactSolutionError(
                f"t={self.time} is past the breaking time {breaking_time(self.u0_prime):.6g} of the smooth data"
            )

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        flat = xs.reshape(-1)
        u = np.asarray(self.u0(flat), dtype=float).copy()
        if self.time > 0.0:
            converged = np.zeros(flat.shape, dtype=bool)
            with np.errstate(over="ignore", invalid="ignore"):
                for _ in range(MAX_FIXED_POINT_ITERATIONS):
                    update = np.asarray(self.u0(flat - u * self.time), dtype=float) - u
                    converged = np.abs(update) <= self.tol
                    u = u + update
                    if np.all(converged):
                        break
            for i in np.flatnonzero(~converged):
                u[i] = characteristics_fixed_point(self.u0, float(flat[i]), self.time, self.tol)
        if np.ndim(x) == 0:
            return float(u[0])
        return u.reshape(xs.shape)


@dataclass(frozen=True)
class Case:
    """
    Initial data of one experiment family.

    initial is set for piecewise-linear data, which get a front-tracking
    reference; smooth data use the characteristics fixed point.
    """

    name: str
    u0: Callable
    u0_prime: Callable
    initial: Optional[PwLinearExact] = None

    @property
    def is_piecewise_linear(self) -> bool:
        return self.initial is not None


def _smooth_u0(x):
    return 0.25 * (np.cos(2.0 * np.pi * x) + 1.0)


def _smooth_u0_prime(x):
    return -0.5 * np.pi * np.sin(2.0 * np.pi * x)


def _cosine_u0(x):
    return 0.5 * (np.cos(2.0 * np.pi * x) + 1.0)


def _cosine_u0_prime(x):
    return -np.pi * np.sin(2.0 * np.pi * x)


TRIANGLE_WAVE_POINTS = ((0.0, 0.0), (0.75, 1.0))


def piecewise_linear_case(name: str, points: Sequence[Sequence[float]]) -> Case:
    profile = PwLinearExact.from_points(points)
    return Case(name=name, u0=profile, u0_prime=profile.derivative, initial=profile)


CASES: Dict[str, Callable[[], Case]] = {
    "smooth": lambda: Case("smooth", _smooth_u0, _smooth_u0_prime),
    "cosine": lambda: Case("cosine", _cosine_u0, _cosine_u0_prime),
    "nonsmooth": lambda: piecewise_linear_case("nonsmooth", TRIANGLE_WAVE_POINTS),
}


def get_case(name: str, custom_breakpoints: Optional[Sequence[Sequence[float]]] = None) -> Case:
    """
    Look up an experiment family by name.

    Args:
        name (str): smooth, cosine, nonsmooth or custom
        custom_breakpoints: (x, value) nodes, required for custom

    Returns:
        Case: Initial data and derivative
    """
    if name == "custom":
        if not custom_breakpoints:
            raise ValueError("Case 'custom' needs custom_breakpoints")
        return piecewise_linear_case("custom", custom_breakpoints)
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"Unknown case '{name}', expected one of {sorted(CASES) + ['custom']}")


def sample_reference(ref: Callable, mesh_fine: Mesh) -> NodalField:
    """
    Nodal values of an exact solution on the fine mesh.

    A piecewise-linear profile is averaged exactly over the dual cell
    [x_i - h/2, x_i + h/2] of every node, so the nodal mean equals the exact
    mean also after shocks form. Smooth references are sampled at the nodes.
    """
    nodes = mesh_fine.nodes
    if isinstance(ref, PwLinearExact):
        half = 0.5 * mesh_fine.h
        return NodalField(mesh_fine, ref.cell_averages(nodes - half, nodes + half))
    return NodalField(mesh_fine, np.asarray(ref(nodes), dtype=float))


def exact_solution(case: Case, t: float, tol: float = 1e-13) -> Callable:
    """Exact solution of a case at time t, as a vectorised callable."""
    if case.is_piecewise_linear:
        return front_tracking_solve(case.initial, t)
    return SmoothReference(case.u0, t, case.u0_prime, tol)


def case_reference(case: Case, t: float, n_fine: int, tol: float = 1e-13) -> NodalField:
    """Exact solution of a case at time t sampled on a fine mesh."""
    logger.info(f"Building {case.name} reference at t={t} on N={n_fine}")
    return sample_reference(exact_solution(case, t, tol), Mesh(n_fine))


def fine_grid_reference(case: Case, t_final: float, n_fine: int = 12800, cfl: float = 0.25) -> NodalField:
    """
    Secondary reference: the scheme itself on a fine mesh.

    Nonlinear viscosity with epsilon = 0 and no physical viscosity.
    """
    config = SolverConfig(
        mesh=Mesh(n_fine),
        viscosity=ViscositySpec(kind="nonlinear", nu=0.0, epsilon=0.0),
        t_final=t_final,
        cfl=cfl,
        record_every=10**9,
    )
    return solve(config, case.u0).final


