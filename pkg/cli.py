#!/usr/bin/env python3
"""
Command-line driver for burgers-lab.

Subcommands:
    convergence  error table over a list of meshes (CSV + rendered table)
    single       one run: final state, diagnostics and estimator CSVs
    checks       kernel oracles and the invariant suite, exit 0 iff all pass
    reference    exact solution sampled on the reference mesh
"""

import argparse
import dataclasses
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss

from analysis import (
    ErrorReport,
    EstimatorError,
    InvariantReport,
    aposteriori_estimate,
    compute_constants,
    convergence_rates,
    error_norms,
    invariant_report,
)
from assembly import CyclicTridiagonal, SolverError, convection_terms, cyclic_tridiag_solve, viscous_terms
from debug_helper import debug
from differential_filter import FilterSpec, apply_filter, filtered_error
from lab_config import ConfigError, get_section, load_experiment_file
from mesh_field import ElementField, Mesh, MeshError, NodalField, build_mesh, interpolate
from reference import (
    Case,
    ExactSolutionError,
    case_reference,
    characteristics_fixed_point,
    exact_solution,
    front_tracking_solve,
    get_case,
    sample_reference,
)
from time_integration import SolverConfig, StepFailure, Trajectory, solve
from viscosity import ViscositySpec

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_INVARIANT_FAILURE = 2
EXIT_CONFIG_ERROR = 3

# Exception family -> exit status; first match wins.
EXIT_CODES: List[Tuple[type, int]] = [
    (ConfigError, EXIT_CONFIG_ERROR),
    (StepFailure, EXIT_SOLVER_FAILURE),
    (SolverError, EXIT_SOLVER_FAILURE),
    (ExactSolutionError, EXIT_SOLVER_FAILURE),
    (EstimatorError, EXIT_SOLVER_FAILURE),
    (MeshError, EXIT_CONFIG_ERROR),
    (ValueError, EXIT_CONFIG_ERROR),
    (OSError, EXIT_SOLVER_FAILURE),
]


def exit_code_for(error: BaseException) -> int:
    for error_type, code in EXIT_CODES:
        if isinstance(error, error_type):
            return code
    return EXIT_SOLVER_FAILURE


@dataclass
class ExperimentConfig:
    """
    Everything a subcommand needs, merged from config.json, a user file and flags.

    eps and the entries of delta_list are strings: "0", "h" or a literal number.
    """

    case: str = "smooth"
    viscosity: str = "nonlinear"
    eps: str = "0"
    nu: float = 0.0
    t_final: float = 0.5
    cfl: float = 0.25
    n_list: List[int] = field(default_factory=lambda: [100, 200, 400, 800])
    delta_list: List[str] = field(default_factory=lambda: ["1", "h"])
    ref_n: Optional[int] = None
    nu1_variant: str = "ratio"
    init_proj: str = "l2"
    record_every: int = 50
    slope_guard: bool = True
    out: str = "output"
    seed: int = 20240101
    max_workers: int = 1
    custom_breakpoints: Optional[List[List[float]]] = None
    fixed_point_tol: float = 1e-13
    smooth_resolution: int = 6400
    nonsmooth_resolution: int = 12800
    table_digits: int = 3
    check_n: int = 100
    oracle_samples: int = 100
    allow_unstable: bool = False

    @classmethod
    def from_defaults(cls) -> "ExperimentConfig":
        solver = get_section("solver")
        viscosity = get_section("viscosity")
        experiments = get_section("experiments")
        reference = get_section("reference")
        checks = get_section("checks")
        output = get_section("output")
        base = cls()
        return cls(
            case=experiments.get("case", base.case),
            viscosity=viscosity.get("kind", base.viscosity),
            eps=str(viscosity.get("eps", base.eps)),
            nu=float(viscosity.get("nu", base.nu)),
            t_final=float(solver.get("t_final", base.t_final)),
            cfl=float(solver.get("cfl", base.cfl)),
            n_list=[int(n) for n in experiments.get("n_list", base.n_list)],
            delta_list=[str(d) for d in experiments.get("delta_list", base.delta_list)],
            nu1_variant=solver.get("nu1_variant", base.nu1_variant),
            init_proj=solver.get("initial_projection", base.init_proj),
            record_every=int(solver.get("record_every", base.record_every)),
            slope_guard=bool(solver.get("slope_guard", base.slope_guard)),
            out=output.get("directory", base.out),
            seed=int(checks.get("seed", base.seed)),
            max_workers=int(experiments.get("max_workers", base.max_workers)),
            fixed_point_tol=float(reference.get("fixed_point_tol", base.fixed_point_tol)),
            smooth_resolution=int(reference.get("smooth_resolution", base.smooth_resolution)),
            nonsmooth_resolution=int(reference.get("nonsmooth_resolution", base.nonsmooth_resolution)),
            table_digits=int(output.get("table_digits", base.table_digits)),
            check_n=int(checks.get("n_elems", base.check_n)),
            oracle_samples=int(checks.get("oracle_samples", base.oracle_samples)),
        )

    def updated(self, values: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        return dataclasses.replace(self, **values)

    def validate(self) -> "ExperimentConfig":
        if self.case not in ("smooth", "cosine", "nonsmooth", "custom"):
            raise ConfigError(f"Unknown case '{self.case}'")
        if self.case == "custom" and not self.custom_breakpoints:
            raise ConfigError("Case 'custom' needs custom_breakpoints in the config file")
        if self.viscosity not in ("linear", "nonlinear"):
            raise ConfigError(f"Unknown viscosity kind '{self.viscosity}'")
        if self.nu1_variant not in ("ratio", "simplified"):
            raise ConfigError(f"Unknown nu1 variant '{self.nu1_variant}'")
        if self.init_proj not in ("l2", "interp"):
            raise ConfigError(f"Unknown initial projection '{self.init_proj}'")
        if not self.t_final > 0:
            raise ConfigError(f"t_final must be positive, got {self.t_final}")
        if not self.cfl > 0 or (self.cfl > 1 and not self.allow_unstable):
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.nu < 0:
            raise ConfigError(f"nu must be non-negative, got {self.nu}")
        if not self.n_list:
            raise ConfigError("n_list is empty")
        for coarse, fine in zip(self.n_list, self.n_list[1:]):
            if fine != 2 * coarse:
                raise ConfigError(f"n_list must double from row to row, got {self.n_list}")
        for n in self.n_list:
            if self.reference_resolution() % n:
                raise ConfigError(f"Reference resolution {self.reference_resolution()} is not a multiple of N={n}")
        self.epsilon_for(1.0 / self.n_list[0])
        for spec in self.delta_list:
            _parse_width(spec, 1.0)
        return self

    def build_case(self) -> Case:
        return get_case(self.case, self.custom_breakpoints)

    def reference_resolution(self) -> int:
        if self.ref_n is not None:
            return int(self.ref_n)
        if self.case in ("nonsmooth", "custom"):
            return self.nonsmooth_resolution
        return self.smooth_resolution

    def epsilon_for(self, h: float) -> float:
        return _parse_width(self.eps, h, allow_zero=True)

    def extra_deltas(self) -> List[str]:
        return [spec for spec in self.delta_list if spec not in ("1", "1.0", "h")]

    def solver_config(self, n: int, eps: Optional[str] = None, viscosity: Optional[str] = None) -> SolverConfig:
        mesh = build_mesh(n)
        epsilon = _parse_width(eps if eps is not None else self.eps, mesh.h, allow_zero=True)
        kind = viscosity or self.viscosity
        spec = ViscositySpec(
            kind=kind,
            nu=self.nu,
            epsilon=epsilon if kind == "nonlinear" else 0.0,
            nu1_variant=self.nu1_variant,
        )
        return SolverConfig(
            mesh=mesh,
            viscosity=spec,
            t_final=self.t_final,
            cfl=self.cfl,
            initial_projection=self.init_proj,
            record_every=self.record_every,
            allow_unstable=self.allow_unstable,
            slope_guard=self.slope_guard,
        )


def _parse_width(spec: str, h: float, allow_zero: bool = False) -> float:
    """Turn "h", "0" or a literal into a number for a mesh of width h."""
    text = str(spec).strip()
    if text == "h":
        return h
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"Expected 'h' or a number, got '{spec}'")
    if value < 0 or (value == 0 and not allow_zero) or not math.isfinite(value):
        raise ConfigError(f"Invalid width '{spec}'")
    return value


def delta_column(spec: str) -> str:
    text = str(spec).strip()
    if text == "h":
        return "dh"
    return f"d{float(text):g}"


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceResult:
    reports: List[ErrorReport]
    failures: List[Tuple[int, str]]
    table: pd.DataFrame


def _convergence_level(config: ExperimentConfig, n: int, reference: NodalField) -> ErrorReport:
    """Solve on N elements and measure every error column against the fine reference."""
    case = config.build_case()
    traj = solve(config.solver_config(n), case.u0)
    final = traj.final
    h = final.mesh.h
    l1, l2 = error_norms(final, reference)
    d1 = filtered_error(reference, final, FilterSpec(1.0, reference.mesh))
    dh = filtered_error(reference, final, FilterSpec(h, reference.mesh))
    extra = {}
    for spec in config.extra_deltas():
        width = _parse_width(spec, h)
        extra[delta_column(spec)] = filtered_error(reference, final, FilterSpec(width, reference.mesh))
    logger.info(f"N={n}: L1={l1:.3e} L2={l2:.3e} d1={d1:.3e} dh={dh:.3e}")
    return ErrorReport(n, l1, l2, d1, dh, extra_errors=extra)


def convergence_table(reports: Sequence[ErrorReport]) -> pd.DataFrame:
    """One row per N: each error column followed by its rate; rates empty on the first row."""
    rows = []
    for report in reports:
        row: Dict[str, Any] = {"n": report.n_elems}
        for column, value in report.errors().items():
            row[column] = value
            rate = report.rate(column)
            row[f"{column}_rate"] = np.nan if rate is None else rate
        rows.append(row)
    columns = ["n", "l1", "l1_rate", "l2", "l2_rate", "d1", "d1_rate", "dh", "dh_rate"]
    if reports:
        for column in reports[0].extra_errors:
            columns += [column, f"{column}_rate"]
    return pd.DataFrame(rows, columns=columns)


def render_table(table: pd.DataFrame, digits: int = 3) -> str:
    """Errors in scientific notation, rates in parentheses."""
    rendered = pd.DataFrame({"N": table["n"].astype(int)})
    for column in table.columns:
        if column == "n" or column.endswith("_rate"):
            continue
        rates = table[f"{column}_rate"]
        rendered[column] = [
            f"{value:.{digits - 1}e}" + ("" if pd.isna(rate) else f" ({rate:.1f})")
            for value, rate in zip(table[column], rates)
        ]
    return rendered.to_string(index=False)


def run_convergence(config: ExperimentConfig) -> ConvergenceResult:
    """
    Convergence study over config.n_list.

    Levels run in a process pool when max_workers > 1; rows are ordered by N
    regardless of completion order. Failed levels are dropped from the table
    and listed in failures.
    """
    case = config.build_case()
    reference = case_reference(case, config.t_final, config.reference_resolution(), config.fixed_point_tol)

    outcomes: Dict[int, Any] = {}
    if config.max_workers > 1:
        with ProcessPoolExecutor(max_workers=config.max_workers) as pool:
            futures = {n: pool.submit(_convergence_level, config, n, reference) for n in config.n_list}
            for n, future in futures.items():
                try:
                    outcomes[n] = future.result()
                except (StepFailure, SolverError) as e:
                    outcomes[n] = e
    else:
        for n in config.n_list:
            try:
                outcomes[n] = _convergence_level(config, n, reference)
            except (StepFailure, SolverError) as e:
                outcomes[n] = e

    reports, failures = [], []
    for n in sorted(outcomes):
        outcome = outcomes[n]
        if isinstance(outcome, ErrorReport):
            reports.append(outcome)
        else:
            logger.error(f"Level N={n} failed: {outcome}")
            failures.append((n, str(outcome)))

    reports = _rates_over_doubling_runs(reports)
    return ConvergenceResult(reports=reports, failures=failures, table=convergence_table(reports))


def _rates_over_doubling_runs(reports: List[ErrorReport]) -> List[ErrorReport]:
    # A failed level breaks the doubling chain; rates restart after the gap.
    result: List[ErrorReport] = []
    run: List[ErrorReport] = []
    for report in reports:
        if run and report.n_elems != 2 * run[-1].n_elems:
            result += convergence_rates(run)
            run = []
        run.append(report)
    if run:
        result += convergence_rates(run)
    return result


def convergence_filename(config: ExperimentConfig) -> str:
    return f"convergence_{config.case}_{config.viscosity}_eps{config.eps}.csv"


def write_csv(frame: pd.DataFrame, path: str):
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(path, index=False, na_rep="", lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise OSError(f"Could not write {path}: {e}") from e
    logger.info(f"Wrote {path}")


# ---------------------------------------------------------------------------
# single
# ---------------------------------------------------------------------------


@dataclass
class SingleRunResult:
    trajectory: Trajectory
    final_state: pd.DataFrame
    diagnostics: pd.DataFrame
    estimator: pd.DataFrame
    paths: List[str] = field(default_factory=list)


def diagnostics_table(traj: Trajectory) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "t": traj.column("t"),
            "dt": traj.column("dt"),
            "max_u": traj.column("max_abs_u"),
            "max_slope": traj.column("max_slope"),
            "tv": traj.column("total_variation"),
            "energy": traj.column("energy"),
        }
    )


def run_single(config: ExperimentConfig, write: bool = True) -> SingleRunResult:
    """
    One solve at N = n_list[0] with its artifacts.

    The estimator table has one row per term and one column per filter width.
    """
    n = config.n_list[0]
    case = config.build_case()
    solver_config = config.solver_config(n)
    traj = solve(solver_config, case.u0)
    mesh = solver_config.mesh

    fine = Mesh(config.reference_resolution())
    u_ref_initial = sample_reference(case.u0, fine)
    constants = compute_constants(case.u0, mesh, case.u0_prime)

    estimator_columns: Dict[str, List[float]] = {}
    terms: List[str] = []
    for spec in config.delta_list:
        breakdown = aposteriori_estimate(traj, u_ref_initial, constants, _parse_width(spec, mesh.h), config.nu)
        rows = breakdown.as_rows()
        terms = [name for name, _ in rows]
        estimator_columns[delta_column(spec)] = [value for _, value in rows]
    estimator = pd.DataFrame({"term": terms, **estimator_columns})

    final_state = pd.DataFrame({"x": mesh.nodes, "u": traj.final.values})
    diagnostics = diagnostics_table(traj)
    result = SingleRunResult(traj, final_state, diagnostics, estimator)

    if write:
        prefix = f"single_{config.case}_{config.viscosity}_eps{config.eps}_N{n}"
        for suffix, frame in (("final", final_state), ("diagnostics", diagnostics), ("estimator", estimator)):
            path = os.path.join(config.out, f"{prefix}_{suffix}.csv")
            write_csv(frame, path)
            result.paths.append(path)
    return result


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


class CheckRunner:
    """Runs the oracle and invariant checks and keeps a pass/fail tally."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.passed_tests = 0
        self.failed_tests = 0
        self.invariant_failures = 0
        self.results: List[Dict[str, Any]] = []

    def log_test(self, test_name: str, passed: bool, message: str = ""):
        """Log check result"""
        status = "✅ PASS" if passed else "❌ FAIL"
        print(f"{status}: {test_name}")
        if message:
            print(f"   {message}")
        self.results.append({"test": test_name, "passed": passed, "message": message})
        if passed:
            self.passed_tests += 1
        else:
            self.failed_tests += 1

    def check_convection_oracle(self):
        n, worst = 8, 0.0
        mesh = Mesh(n)
        points, weights = leggauss(5)
        theta = 0.5 * (points + 1.0)
        for _ in range(self.config.oracle_samples):
            u = NodalField(mesh, self.rng.uniform(-1.0, 1.0, n))
            oracle = quadrature_convection(u, theta, weights)
            worst = max(worst, float(np.max(np.abs(convection_terms(u) - oracle))))
        self.log_test("Convection integral vs Gauss quadrature", worst <= 1e-13, f"max deviation {worst:.2e}")

    def check_viscous_oracle(self):
        n, worst = 8, 0.0
        mesh = Mesh(n)
        points, weights = leggauss(5)
        theta = 0.5 * (points + 1.0)
        for _ in range(self.config.oracle_samples):
            u = NodalField(mesh, self.rng.uniform(-1.0, 1.0, n))
            nu_hat = ElementField(mesh, self.rng.uniform(0.0, 0.1, n))
            oracle = quadrature_viscous(u, nu_hat, theta, weights)
            worst = max(worst, float(np.max(np.abs(viscous_terms(u, nu_hat) - oracle))))
        self.log_test("Viscous term vs Gauss quadrature", worst <= 1e-13, f"max deviation {worst:.2e}")

    def check_cyclic_solver(self):
        worst = 0.0
        for n in range(3, 13):
            m = random_spd_cyclic(self.rng, n)
            rhs = self.rng.uniform(-1.0, 1.0, n)
            x = cyclic_tridiag_solve(m, rhs)
            dense = np.linalg.solve(m.to_dense(), rhs)
            worst = max(worst, float(np.max(np.abs(x - dense))))
        self.log_test("Cyclic tridiagonal solve vs dense oracle", worst <= 1e-12, f"max deviation {worst:.2e}")

    def check_filter_attenuation(self):
        mesh = Mesh(1600)
        u = interpolate(lambda x: np.sin(2.0 * np.pi * x), mesh)
        filtered = apply_filter(u, FilterSpec(1.0, mesh))
        expected = 1.0 / (1.0 + (2.0 * np.pi) ** 2)
        observed = float(np.dot(filtered.values, u.values) / np.dot(u.values, u.values))
        rel = abs(observed - expected) / expected
        self.log_test("Filter attenuation of sin(2 pi x), delta=1", rel <= 1e-3, f"relative deviation {rel:.2e}")

    def check_front_tracking(self):
        case = get_case("nonsmooth")
        t = 0.2
        profile = front_tracking_solve(case.initial, t)
        x = (np.arange(64) + 0.5) / 64
        tracked = profile(x)
        fixed = np.array([characteristics_fixed_point(case.u0, xi, t, 1e-14) for xi in x])
        worst = float(np.max(np.abs(tracked - fixed)))
        self.log_test("Front tracking vs characteristics before breaking", worst <= 1e-10, f"max deviation {worst:.2e}")

        later = front_tracking_solve(case.initial, self.config.t_final)
        drift = abs(later.mean() - case.initial.mean())
        self.log_test("Front tracking conserves the mean", drift <= 1e-12, f"drift {drift:.2e}")

    def check_invariants(self, case_name: str, kind: str, eps: str):
        label = f"Invariants {case_name} {kind}" + (f" eps={eps}" if kind == "nonlinear" else "")
        config = dataclasses.replace(self.config, case=case_name)
        case = config.build_case()
        solver_config = config.solver_config(self.config.check_n, eps=eps, viscosity=kind)
        try:
            traj = solve(solver_config, case.u0)
            failure = ""
        except StepFailure as e:
            traj = e.trajectory
            failure = f"step failure at t={e.t:.4g}, node {e.node}"
        except SolverError as e:
            self.log_test(label, False, f"solver breakdown before the first step: {e}")
            self.invariant_failures += 1
            return
        constants = compute_constants(case.u0, solver_config.mesh, case.u0_prime)
        report = invariant_report(traj, constants, solver_config.viscosity.epsilon)
        passed = report.passed and not failure
        self.log_test(label, passed, describe_report(report, failure))
        if not passed:
            self.invariant_failures += 1

    def run_all_checks(self, eps_settings: Sequence[str], cases: Sequence[str]) -> bool:
        """Run all checks and print summary"""
        print("🧪 Starting burgers-lab checks...\n")
        self.check_convection_oracle()
        self.check_viscous_oracle()
        self.check_cyclic_solver()
        self.check_filter_attenuation()
        self.check_front_tracking()
        for case_name in cases:
            self.check_invariants(case_name, "linear", "0")
            for eps in eps_settings:
                self.check_invariants(case_name, "nonlinear", eps)

        total = self.passed_tests + self.failed_tests
        print()
        print("=" * 50)
        print("📊 Check Results Summary:")
        print(f"   Total Checks: {total}")
        print(f"   ✅ Passed: {self.passed_tests}")
        print(f"   ❌ Failed: {self.failed_tests}")
        if self.failed_tests:
            print("\n❌ Failed Checks:")
            for result in self.results:
                if not result["passed"]:
                    print(f"   - {result['test']}: {result['message']}")
        return self.failed_tests == 0


def describe_report(report: InvariantReport, failure: str = "") -> str:
    parts = []
    for check in report.checks:
        if check.skipped:
            parts.append(f"{check.name}: skipped ({check.notice})")
        elif check.violations:
            first = check.violations[0]
            parts.append(
                f"{check.name}: {len(check.violations)} violations, first at step {first.step} "
                f"(t={first.t:.4g}, margin {first.margin:.2e})"
            )
        else:
            parts.append(f"{check.name}: margin {check.worst_margin:.2e}")
    if failure:
        parts.append(failure)
    return "; ".join(parts)


def quadrature_convection(u: NodalField, theta: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Elementwise Gauss quadrature of u_h u_h' v_i, independent of the closed form."""
    n, h = u.mesh.n_elems, u.mesh.h
    result = np.zeros(n)
    slopes = u.slopes()
    for j in range(n):
        left, right = u.values[j], u.values[(j + 1) % n]
        uq = left + theta * (right - left)
        integrand = uq * slopes[j]
        result[j] += 0.5 * h * np.sum(weights * integrand * (1.0 - theta))
        result[(j + 1) % n] += 0.5 * h * np.sum(weights * integrand * theta)
    return result


def quadrature_viscous(u: NodalField, nu_hat: ElementField, theta: np.ndarray, weights: np.ndarray) -> np.ndarray:
    n, h = u.mesh.n_elems, u.mesh.h
    result = np.zeros(n)
    slopes = u.slopes()
    for j in range(n):
        integrand = nu_hat.values[j] * slopes[j] * np.ones_like(theta)
        # v_j falls with slope -1/h on I_j, v_{j+1} rises with +1/h.
        result[j] += 0.5 * h * np.sum(weights * integrand * (-1.0 / h))
        result[(j + 1) % n] += 0.5 * h * np.sum(weights * integrand * (1.0 / h))
    return result


def random_spd_cyclic(rng: np.random.Generator, n: int) -> CyclicTridiagonal:
    """Symmetric, strictly diagonally dominant periodic tridiagonal matrix."""
    off = rng.uniform(-1.0, 1.0, n)  # off[i] couples i and i+1
    diag = np.abs(off) + np.abs(np.roll(off, 1)) + rng.uniform(0.5, 1.5, n)
    return CyclicTridiagonal(np.roll(off, 1), diag, off)


def run_checks(config: ExperimentConfig, eps_settings: Optional[Sequence[str]] = None) -> int:
    """
    Kernel oracles plus the invariant suite on both cases.

    Returns:
        int: 0 when every check passes, 2 otherwise
    """
    runner = CheckRunner(config)
    cases = ["smooth", "nonsmooth"] if config.case in ("smooth", "nonsmooth") else [config.case]
    success = runner.run_all_checks(list(eps_settings or ["0", "h"]), cases)
    return EXIT_OK if success else EXIT_INVARIANT_FAILURE


# ---------------------------------------------------------------------------
# reference
# ---------------------------------------------------------------------------


def run_reference(config: ExperimentConfig) -> pd.DataFrame:
    """Exact solution of the configured case at t_final on the reference mesh."""
    case = config.build_case()
    fine = Mesh(config.reference_resolution())
    exact = exact_solution(case, config.t_final, config.fixed_point_tol)
    return pd.DataFrame({"x": fine.nodes, "u": sample_reference(exact, fine).values})


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _csv_ints(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated integers, got '{text}'")


def _csv_strings(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_file", help="JSON file with ExperimentConfig keys")
    common.add_argument("--case", choices=["smooth", "cosine", "nonsmooth", "custom"])
    common.add_argument("--viscosity", choices=["linear", "nonlinear"])
    common.add_argument("--eps", help="0, h or a number")
    common.add_argument("--nu", type=float)
    common.add_argument("--t-final", dest="t_final", type=float)
    common.add_argument("--cfl", type=float)
    common.add_argument("--n", type=int, help="single mesh size")
    common.add_argument("--n-list", dest="n_list", type=_csv_ints, help="comma-separated mesh sizes")
    common.add_argument("--delta-list", dest="delta_list", type=_csv_strings, help="comma-separated widths or h")
    common.add_argument("--ref-n", dest="ref_n", type=int)
    common.add_argument("--nu1-variant", dest="nu1_variant", choices=["ratio", "simplified"])
    common.add_argument("--init-proj", dest="init_proj", choices=["l2", "interp"])
    common.add_argument("--record-every", dest="record_every", type=int)
    common.add_argument(
        "--no-slope-guard", dest="slope_guard", action="store_false", default=None,
        help="keep nonlinear-viscosity steps that raise the maximal slope",
    )
    common.add_argument("--max-workers", dest="max_workers", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="burgers-lab", description="Stabilised FEM lab for periodic Burgers")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("convergence", parents=[common], help="convergence table over --n-list")
    sub.add_parser("single", parents=[common], help="one run with diagnostics and estimator")
    sub.add_parser("checks", parents=[common], help="oracles and invariant suite")
    sub.add_parser("reference", parents=[common], help="dump the exact reference solution")
    return parser


FLAG_KEYS = (
    "case", "viscosity", "eps", "nu", "t_final", "cfl", "n_list", "delta_list", "ref_n",
    "nu1_variant", "init_proj", "record_every", "slope_guard", "max_workers", "out", "seed",
)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults < config.json < --config file < flags."""
    config = ExperimentConfig.from_defaults()
    if args.config_file:
        allowed = [f.name for f in dataclasses.fields(ExperimentConfig)]
        config = config.updated(load_experiment_file(args.config_file, allowed))
    flags = {key: getattr(args, key) for key in FLAG_KEYS if getattr(args, key, None) is not None}
    if args.n is not None:
        flags["n_list"] = [args.n]
    config = config.updated(flags)
    if args.command == "checks":
        config = dataclasses.replace(config, allow_unstable=True)
        if args.n is not None:
            config = dataclasses.replace(config, check_n=args.n)
    return config.validate()


def configure_logging(args: argparse.Namespace):
    settings = get_section("logging")
    level = logging.DEBUG if settings.get("enable_debug_logging", False) else logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format=settings.get("log_format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"),
        stream=sys.stderr,
    )
    debug.enable_debug = bool(settings.get("dump_failed_states", True))
    debug.progress_every = max(1, int(settings.get("progress_every", 500)))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args)

    try:
        config = build_config(args)
    except (ConfigError, ValueError, MeshError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR

    try:
        if args.command == "convergence":
            result = run_convergence(config)
            write_csv(result.table, os.path.join(config.out, convergence_filename(config)))
            print(render_table(result.table, config.table_digits))
            if result.failures:
                for n, message in result.failures:
                    print(f"❌ N={n}: {message}")
                return EXIT_SOLVER_FAILURE
            return EXIT_OK

        if args.command == "single":
            result = run_single(config)
            for path in result.paths:
                print(f"✅ {path}")
            return EXIT_OK

        if args.command == "checks":
            eps_settings = [args.eps] if args.eps is not None else None
            return run_checks(config, eps_settings)

        if args.command == "reference":
            frame = run_reference(config)
            path = os.path.join(config.out, f"reference_{config.case}_t{config.t_final:g}.csv")
            write_csv(frame, path)
            print(f"✅ {path}")
            return EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed: {e}")
        return code

    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
