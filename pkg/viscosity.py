"""
Artificial viscosity coefficients.

Two forms of nu_hat are provided: the linear first-order viscosity
max(U0 h / 2, nu) and the nonlinear shock-capturing viscosity
max(nu, h (nu0 + nu1)) that only switches on at local extrema of u_h and at
local maxima of its slope.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from mesh_field import ElementField, Mesh, NodalField, slope_averages, slope_jumps

logger = logging.getLogger(__name__)


class ViscosityKind(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


class Nu1Variant(str, Enum):
    RATIO = "ratio"
    SIMPLIFIED = "simplified"


@dataclass(frozen=True)
class ViscositySpec:
    """
    Parameters of the artificial viscosity.

    Attributes:
        kind: Linear or nonlinear viscosity
        nu: Physical viscosity, >= 0
        epsilon: Regularisation of the nu0 quotient, >= 0 (nonlinear only)
        nu1_variant: Slope-ratio form of nu1 or the simplified max form
        u0_sup: U0, sup of the projected initial data, > 0
    """

    kind: ViscosityKind = ViscosityKind.NONLINEAR
    nu: float = 0.0
    epsilon: float = 0.0
    nu1_variant: Nu1Variant = Nu1Variant.RATIO
    u0_sup: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ViscosityKind(self.kind))
        object.__setattr__(self, "nu1_variant", Nu1Variant(self.nu1_variant))
        if self.nu < 0 or self.epsilon < 0:
            raise ValueError(f"Viscosity parameters must be non-negative (nu={self.nu}, epsilon={self.epsilon})")
        if not self.u0_sup > 0:
            raise ValueError(f"U0 must be positive, got {self.u0_sup}")


def linear_viscosity(spec: ViscositySpec, mesh: Mesh) -> ElementField:
    """Constant coefficient max(U0 h / 2, nu) on every element."""
    value = max(spec.u0_sup * mesh.h / 2.0, spec.nu)
    return ElementField(mesh, np.full(mesh.n_elems, value))


def mesh_reynolds_number(spec: ViscositySpec, mesh: Mesh) -> float:
    """Re_h = U0 h / (2 nu); infinite in the inviscid case."""
    if spec.nu == 0.0:
        return float("inf")
    return spec.u0_sup * mesh.h / (2.0 * spec.nu)


def linear_viscosity_reynolds(spec: ViscositySpec, mesh: Mesh) -> ElementField:
    """The linear viscosity written as nu * max(1, Re_h); requires nu > 0."""
    if spec.nu <= 0.0:
        raise ValueError("The Reynolds-number form of the linear viscosity needs nu > 0")
    value = spec.nu * max(1.0, mesh_reynolds_number(spec, mesh))
    return ElementField(mesh, np.full(mesh.n_elems, value))


def _node_quotients(u: NodalField, epsilon: float) -> np.ndarray:
    # |[u']| / (2 {|u'|} + eps), replaced by zero where the denominator vanishes.
    jumps = np.abs(slope_jumps(u))
    denominator = 2.0 * slope_averages(u) + epsilon
    quotient = np.zeros_like(jumps)
    np.divide(jumps, denominator, out=quotient, where=denominator > 0.0)
    return quotient


def nu0_field(u: NodalField, epsilon: float) -> np.ndarray:
    """nu0 on every element."""
    q = _node_quotients(u, epsilon)
    values = np.abs(u.values)
    sup_on_element = np.maximum(values, np.roll(values, -1))
    return 0.5 * sup_on_element * np.maximum(q, np.roll(q, -1))


def nu0_element(u: NodalField, i: int, epsilon: float) -> float:
    """
    nu0 on element I_i.

    Half the sup of |u_h| on the element times the larger of the two endpoint
    quotients |[u_h']| / (2 {|u_h'|} + epsilon).
    """
    return float(nu0_field(u, epsilon)[i % u.mesh.n_elems])


def xi_field(u: NodalField) -> np.ndarray:
    """Indicator of elements carrying a local maximum of a positive slope."""
    s = u.slopes()
    s_right = np.roll(s, -1)
    s_left = np.roll(s, 1)
    hit = (s > 0.0) & (s > s_right) & (s_right > 0.0) & (s >= s_left) & (s_left > 0.0)
    return hit.astype(int)


def xi_indicator(u: NodalField, i: int) -> int:
    return int(xi_field(u)[i % u.mesh.n_elems])


def nu1_field(u: NodalField, epsilon: float, variant: Nu1Variant = Nu1Variant.RATIO) -> np.ndarray:
    variant = Nu1Variant(variant)
    xi = xi_field(u).astype(bool)
    nu0 = nu0_field(u, epsilon)
    nu0_left = np.roll(nu0, 1)
    nu0_right = np.roll(nu0, -1)
    result = np.zeros(u.mesh.n_elems)
    if not np.any(xi):
        return result
    if variant is Nu1Variant.SIMPLIFIED:
        result[xi] = np.maximum(nu0_left[xi], nu0_right[xi])
        return result
    # xi = 1 implies a strictly positive slope on I_i
    s = u.slopes()
    s_left = np.roll(s, 1)
    s_right = np.roll(s, -1)
    result[xi] = np.maximum(nu0_left[xi] * s_left[xi] / s[xi], nu0_right[xi] * s_right[xi] / s[xi])
    return result


def nu1_element(u: NodalField, i: int, epsilon: float, variant: Nu1Variant = Nu1Variant.RATIO) -> float:
    return float(nu1_field(u, epsilon, variant)[i % u.mesh.n_elems])


def nonlinear_viscosity(u: NodalField, spec: ViscositySpec) -> ElementField:
    """
    Shock-capturing viscosity max(nu, h (nu0 + nu1)) per element.

    Args:
        u (NodalField): Current state
        spec (ViscositySpec): Parameters (nu, epsilon, nu1 variant)

    Returns:
        ElementField: nu_hat(u_h)
    """
    h = u.mesh.h
    artificial = h * (nu0_field(u, spec.epsilon) + nu1_field(u, spec.epsilon, spec.nu1_variant))
    return ElementField(u.mesh, np.maximum(spec.nu, artificial))


def artificial_viscosity(u: NodalField, spec: ViscositySpec) -> ElementField:
    """nu_hat for the current state, linear or nonlinear as configured."""
    if spec.kind is ViscosityKind.LINEAR:
        return linear_viscosity(spec, u.mesh)
    return nonlinear_viscosity(u, spec)


def excess_viscosity_norm(u: NodalField, nu_hat: ElementField, nu: float) -> float:
    """L2 norm of max(0, nu_hat - nu)^(1/2) u_h'."""
    excess = np.maximum(0.0, nu_hat.values - nu)
    return float(np.sqrt(u.mesh.h * np.sum(excess * u.slopes() ** 2)))
