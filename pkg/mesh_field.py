"""
Uniform periodic mesh and piecewise-linear fields on (0, 1).

Node N is identified with node 0: a field stores exactly N nodal values and
every node or element index is reduced modulo N. Element I_i spans
[x_i, x_{i+1}].
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

# The nonlinear viscosity looks at I_{i-1}, I_i, I_{i+1}.
MIN_ELEMENTS = 3


class MeshError(ValueError):
    """Invalid mesh size or incompatible mesh pairing."""


@dataclass(frozen=True)
class Mesh:
    """Uniform periodic partition of (0, 1) into n_elems elements."""

    n_elems: int

    def __post_init__(self):
        if int(self.n_elems) != self.n_elems or self.n_elems < MIN_ELEMENTS:
            raise MeshError(
                f"Mesh needs at least {MIN_ELEMENTS} elements for the viscosity stencil, got {self.n_elems}"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.n_elems

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_elems) * self.h

    def refines(self, coarse: "Mesh") -> bool:
        """True when every coarse node is also a node of this mesh."""
        return self.n_elems % coarse.n_elems == 0


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class NodalField:
    """Periodic continuous piecewise-linear function given by its nodal values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.mesh.n_elems,):
            raise MeshError(f"NodalField needs {self.mesh.n_elems} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def __call__(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return evaluate(self, x)

    def slopes(self) -> np.ndarray:
        """Elementwise derivative, entry i belonging to I_i."""
        return (np.roll(self.values, -1) - self.values) / self.mesh.h

    def with_values(self, values) -> "NodalField":
        return NodalField(self.mesh, values)


@dataclass(frozen=True, eq=False)
class ElementField:
    """One scalar per element, e.g. the viscosity coefficient on I_i."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.mesh.n_elems,):
            raise MeshError(f"ElementField needs {self.mesh.n_elems} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)


def build_mesh(n_elems: int) -> Mesh:
    """
    Build the uniform periodic mesh with n_elems elements.

    Args:
        n_elems (int): Number of elements N, at least 3

    Returns:
        Mesh: Mesh with h = 1/N
    """
    mesh = Mesh(n_elems)
    logger.debug(f"Built periodic mesh N={mesh.n_elems}, h={mesh.h:.3e}")
    return mesh


def interpolate(f, mesh: Mesh) -> NodalField:
    """Nodal interpolant of a 1-periodic function."""
    return NodalField(mesh, np.asarray(f(mesh.nodes), dtype=float))


def constant_field(mesh: Mesh, value: float) -> NodalField:
    return NodalField(mesh, np.full(mesh.n_elems, float(value)))


def evaluate(u: NodalField, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Evaluate the periodic piecewise-linear interpolant at arbitrary points."""
    n = u.mesh.n_elems
    scaled = np.mod(np.asarray(x, dtype=float), 1.0) * n
    index = np.minimum(np.floor(scaled).astype(int), n - 1)
    theta = scaled - index
    result = (1.0 - theta) * u.values[index] + theta * u.values[(index + 1) % n]
    if np.ndim(x) == 0:
        return float(result)
    return result


def element_slope(u: NodalField, i: int) -> float:
    """Slope of u on element I_i, index taken modulo N."""
    n = u.mesh.n_elems
    i %= n
    return (u.values[(i + 1) % n] - u.values[i]) / u.mesh.h


def slope_jump_and_avg(u: NodalField, i: int) -> Tuple[float, float]:
    """
    Jump and mean absolute slope of u at node x_i.

    The jump is right slope minus left slope: slope(I_i) - slope(I_{i-1}).

    Args:
        u (NodalField): Piecewise-linear field
        i (int): Node index, taken modulo N

    Returns:
        Tuple[float, float]: (jump, average of |slope| over the two elements)
    """
    right = element_slope(u, i)
    left = element_slope(u, i - 1)
    return right - left, 0.5 * (abs(right) + abs(left))


def slope_jumps(u: NodalField) -> np.ndarray:
    """Vector of slope jumps at all nodes, same sign convention as slope_jump_and_avg."""
    slopes = u.slopes()
    return slopes - np.roll(slopes, 1)


def slope_averages(u: NodalField) -> np.ndarray:
    abs_slopes = np.abs(u.slopes())
    return 0.5 * (abs_slopes + np.roll(abs_slopes, 1))


def total_variation(u: NodalField) -> float:
    """Sum of |u_{i+1} - u_i| around the periodic ring, i.e. the integral of |u'|."""
    return float(np.sum(np.abs(np.roll(u.values, -1) - u.values)))


def lumped_norm(u: NodalField) -> float:
    """Discrete norm induced by the lumped mass, (h * sum u_i^2)^(1/2)."""
    return float(np.sqrt(u.mesh.h * np.dot(u.values, u.values)))


def inject(u: NodalField, fine: Mesh) -> NodalField:
    """Exact evaluation of a coarse field at the nodes of a refining mesh."""
    if not fine.refines(u.mesh):
        raise MeshError(
            f"Mesh with {fine.n_elems} elements does not refine mesh with {u.mesh.n_elems} elements"
        )
    return NodalField(fine, evaluate(u, fine.nodes))


def jump_norm(u: NodalField) -> float:
    """Discrete norm of the slope jumps over all nodes, ||[u_h']||_N."""
    return float(np.linalg.norm(slope_jumps(u)))


def flux_jump_norm(u: NodalField) -> float:
    """||[u_h u_h']||_N; u_h is continuous so the jump at x_i is u_i [u_h']_i."""
    return float(np.linalg.norm(u.values * slope_jumps(u)))


def gradient_norm(u: NodalField) -> float:
    """||u_h'|| in L2."""
    return float(np.sqrt(u.mesh.h * np.sum(u.slopes() ** 2)))
