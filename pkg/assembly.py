"""
Finite element integrals of the stabilised Burgers scheme on V_h.

Lumped mass, the closed-form convection integral, the viscous term, the
consistent-mass L2 projection and the cyclic tridiagonal solver shared by the
projection and the differential filter.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss

from mesh_field import ElementField, Mesh, MeshError, NodalField

logger = logging.getLogger(__name__)

GAUSS_POINTS = 4
PIVOT_TOL = 1e-300
SINGULAR_TOL = 1e-13
RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    """Breakdown of the cyclic tridiagonal elimination."""


@dataclass(frozen=True, eq=False)
class CyclicTridiagonal:
    """
    Periodic tridiagonal matrix.

    Row i couples to columns i-1, i, i+1 modulo n: lower[i] = A[i, i-1],
    diag[i] = A[i, i], upper[i] = A[i, i+1]. In particular lower[0] is the
    corner A[0, n-1] and upper[n-1] the corner A[n-1, 0].
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("lower", "diag", "upper"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if not (self.lower.shape == self.diag.shape == self.upper.shape) or self.diag.ndim != 1:
            raise MeshError("CyclicTridiagonal bands must be vectors of equal length")
        if self.n < 3:
            raise MeshError(f"CyclicTridiagonal needs n >= 3, got {self.n}")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.lower * np.roll(x, 1) + self.diag * x + self.upper * np.roll(x, -1)

    def norm_inf(self) -> float:
        """Maximum absolute row sum."""
        return float(np.max(np.abs(self.lower) + np.abs(self.diag) + np.abs(self.upper)))

    def to_dense(self) -> np.ndarray:
        n = self.n
        dense = np.zeros((n, n))
        rows = np.arange(n)
        dense[rows, rows] = self.diag
        dense[rows, (rows - 1) % n] += self.lower
        dense[rows, (rows + 1) % n] += self.upper
        return dense

    def scaled_sum(self, alpha: float, other: "CyclicTridiagonal", beta: float) -> "CyclicTridiagonal":
        """alpha * self + beta * other."""
        return CyclicTridiagonal(
            alpha * self.lower + beta * other.lower,
            alpha * self.diag + beta * other.diag,
            alpha * self.upper + beta * other.upper,
        )


@njit(cache=True)
def _thomas(a, b, c, d, cp, dp):
    # a[i] couples row i to i-1 (a[0] unused), c[i] couples row i to i+1 (c[n-1] unused).
    # Returns False on a vanishing pivot instead of dividing by it.
    n = b.shape[0]
    if abs(b[0]) <= PIVOT_TOL:
        return False
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        denom = b[i] - a[i] * cp[i - 1]
        if abs(denom) <= PIVOT_TOL:
            return False
        cp[i] = c[i] / denom
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        dp[i] = dp[i] - cp[i] * dp[i + 1]
    return True


def _solve_open(a, b, c, d) -> np.ndarray:
    n = b.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    if not _thomas(a, b, c, np.ascontiguousarray(d, dtype=float), cp, dp):
        raise SolverError(f"Zero pivot in tridiagonal elimination of size {n}")
    return dp


def cyclic_tridiag_solve(m: CyclicTridiagonal, rhs: Sequence[float]) -> np.ndarray:
    """
    Solve m x = rhs for a periodic tridiagonal matrix.

    The corner couplings are removed by a rank-one correction so that two
    ordinary Thomas sweeps suffice (Sherman-Morrison).

    Args:
        m (CyclicTridiagonal): Nonsingular periodic tridiagonal matrix
        rhs (Sequence[float]): Right-hand side of length m.n

    Returns:
        np.ndarray: Solution vector
    """
    rhs = np.asarray(rhs, dtype=float)
    n = m.n
    if rhs.shape != (n,):
        raise MeshError(f"Right-hand side has shape {rhs.shape}, expected ({n},)")

    beta = m.lower[0]  # A[0, n-1]
    alpha = m.upper[n - 1]  # A[n-1, 0]
    gamma = -m.diag[0] if m.diag[0] != 0.0 else -1.0

    a = m.lower.copy()
    c = m.upper.copy()
    b = m.diag.copy()
    b[0] -= gamma
    b[n - 1] -= alpha * beta / gamma

    x = _solve_open(a, b, c, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[n - 1] = alpha
    z = _solve_open(a, b, c, u)

    tail = beta * z[n - 1] / gamma
    denom = 1.0 + z[0] + tail
    # A singular matrix leaves only round-off of the three terms in denom.
    if abs(denom) <= SINGULAR_TOL * (1.0 + abs(z[0]) + abs(tail)):
        raise SolverError(f"Singular periodic matrix of size {n} (rank-one correction {denom:.3e})")
    x = x - z * ((x[0] + beta * x[n - 1] / gamma) / denom)

    if not np.all(np.isfinite(x)):
        raise SolverError(f"Cyclic tridiagonal solve of size {n} produced non-finite values")
    residual = np.max(np.abs(m.matvec(x) - rhs))
    scale = m.norm_inf() * np.max(np.abs(x)) + np.max(np.abs(rhs))
    if residual > RESIDUAL_TOL * scale:
        raise SolverError(f"Cyclic tridiagonal solve of size {n} left residual {residual:.3e}")
    return x


def mass_matrix(mesh: Mesh) -> CyclicTridiagonal:
    """Consistent P1 mass matrix (h/6)(1, 4, 1) with periodic corners."""
    n, h = mesh.n_elems, mesh.h
    off = np.full(n, h / 6.0)
    return CyclicTridiagonal(off, np.full(n, 4.0 * h / 6.0), off)


def stiffness_matrix(mesh: Mesh) -> CyclicTridiagonal:
    """P1 stiffness matrix (1/h)(-1, 2, -1) with periodic corners (singular on constants)."""
    n, h = mesh.n_elems, mesh.h
    off = np.full(n, -1.0 / h)
    return CyclicTridiagonal(off, np.full(n, 2.0 / h), off)


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Diagonal of the nodal-quadrature mass, h at every node."""
    return np.full(mesh.n_elems, mesh.h)


def load_vector(f: Callable, mesh: Mesh, n_points: int = GAUSS_POINTS) -> np.ndarray:
    """b_i = integral of f * v_i, by Gauss-Legendre quadrature on each element."""
    points, weights = leggauss(n_points)
    theta = 0.5 * (points + 1.0)
    h = mesh.h
    x = mesh.nodes[:, None] + h * theta[None, :]
    fx = np.asarray(f(x), dtype=float) * np.ones_like(x)
    w = 0.5 * h * weights[None, :]
    # Element I_j feeds node j with (1 - theta) and node j+1 with theta.
    to_left = np.sum(fx * (1.0 - theta) * w, axis=1)
    to_right = np.sum(fx * theta * w, axis=1)
    return to_left + np.roll(to_right, 1)


def l2_project(f: Callable, mesh: Mesh) -> NodalField:
    """
    Consistent-mass L2 projection of a 1-periodic function onto V_h.

    Args:
        f (Callable): Vectorised 1-periodic function
        mesh (Mesh): Target mesh

    Returns:
        NodalField: pi_h f
    """
    return NodalField(mesh, cyclic_tridiag_solve(mass_matrix(mesh), load_vector(f, mesh)))


def convection_terms(u: NodalField) -> np.ndarray:
    """
    Closed-form integral of u_h (u_h)' v_i for every node i.

    With s1 the slope on I_{i-1} and s2 the slope on I_i:
    (h^2/3) s1^2 + (h^2/6) s2^2 + (h/2) u_{i-1} s1 + (h/2) u_i s2.
    """
    h = u.mesh.h
    s2 = u.slopes()
    s1 = np.roll(s2, 1)
    u_left = np.roll(u.values, 1)
    return (h * h / 3.0) * s1 * s1 + (h * h / 6.0) * s2 * s2 + 0.5 * h * (u_left * s1 + u.values * s2)


def convection_term(u: NodalField, i: int) -> float:
    return float(convection_terms(u)[i % u.mesh.n_elems])


def viscous_terms(u: NodalField, nu_hat: ElementField) -> np.ndarray:
    """Integral of nu_hat u_h' v_i' for every node i: nu_{i-1} s1 - nu_i s2."""
    flux = nu_hat.values * u.slopes()
    return np.roll(flux, 1) - flux


def viscous_term(u: NodalField, nu_hat: ElementField, i: int) -> float:
    return float(viscous_terms(u, nu_hat)[i % u.mesh.n_elems])


def semidiscrete_rhs(u: NodalField, nu_hat: ElementField) -> NodalField:
    """
    Nodal time derivative of the lumped-mass scheme.

    du_i/dt = -(convection_i + viscous_i) / h.
    """
    rate = -(convection_terms(u) + viscous_terms(u, nu_hat)) / lumped_mass(u.mesh)
    return NodalField(u.mesh, rate)


def convective_residual_norm(u: NodalField) -> float:
    """
    Distance in L2 from w = u_h u_h' to V_h, i.e. ||w - pi_h w||.

    The load vector of w is exactly convection_terms(u), so with p = pi_h w
    the squared distance is ||w||^2 - p . b.
    """
    h = u.mesh.h
    s = u.slopes()
    a = u.values
    b = np.roll(a, -1)
    w_sq = np.sum(s * s * (h / 3.0) * (a * a + a * b + b * b))
    load = convection_terms(u)
    p = cyclic_tridiag_solve(mass_matrix(u.mesh), load)
    return float(np.sqrt(max(w_sq - np.dot(p, load), 0.0)))
