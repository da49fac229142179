"""Director dynamics: singular potential, kinematics, elastic stress and the director step."""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math

import numpy as np

from .electrostatics import electric_torque
from .fields import (
    ScalarField,
    TensorField,
    VectorField,
    dealias,
    gradient,
    laplacian,
    magnitude,
    matvec,
    scale,
    spin,
    strain_rate,
    sup_norm,
)
from .state import State, StepRejected

logger = logging.getLogger(__name__)

F_STAR = -1.0 / math.e
DEFAULT_LAMBDA = 1e-3
MINIMIZER_SQUARED = 1.0 - 1.0 / math.e


@dataclass(frozen=True)
class SingularPotentialParams:
    """Barrier regularization λ of F(r) = (1−r)ln(1−r) − F★."""

    barrier_lambda: float = DEFAULT_LAMBDA
    F_star: float = F_STAR

    def __post_init__(self) -> None:
        if not 0.0 < self.barrier_lambda <= 0.5:
            raise ValueError(f"lambda must lie in (0, 0.5], got {self.barrier_lambda}.")


def barrier_value(r: np.ndarray | float, barrier_lambda: float = DEFAULT_LAMBDA) -> np.ndarray:
    """F_λ(r): (1−r)ln(1−r) − F★ up to r₀ = 1−λ, its C¹ quadratic continuation beyond."""

    r = np.asarray(r, dtype=float)
    r0 = 1.0 - barrier_lambda
    inside = np.minimum(r, r0)
    excess = np.maximum(r - r0, 0.0)
    slope = -math.log(barrier_lambda) - 1.0
    base = (1.0 - inside) * np.log1p(-inside) - F_STAR
    return base + slope * excess + excess**2 / (2.0 * barrier_lambda)


def barrier_derivative(
    r: np.ndarray | float, barrier_lambda: float = DEFAULT_LAMBDA
) -> np.ndarray:
    """F′_λ(r): −ln(1−r) − 1, continued linearly with slope 1/λ beyond 1−λ."""

    r = np.asarray(r, dtype=float)
    r0 = 1.0 - barrier_lambda
    inside = np.minimum(r, r0)
    excess = np.maximum(r - r0, 0.0)
    return -np.log1p(-inside) - 1.0 + excess / barrier_lambda


def potential_value(n_point: np.ndarray, barrier_lambda: float = DEFAULT_LAMBDA) -> float:
    """𝓕(n) = ½F(|n|²) at a single point."""

    r = float(np.dot(n_point, n_point))
    return float(0.5 * barrier_value(r, barrier_lambda))


def potential_gradient(n: VectorField, barrier_lambda: float = DEFAULT_LAMBDA) -> VectorField:
    """∂𝓕(n) = F′_λ(|n|²) n."""

    r = ScalarField(n.grid, magnitude(n) ** 2)
    return scale(n, r.with_physical(barrier_derivative(r.physical, barrier_lambda)))


def potential_density(n: VectorField, barrier_lambda: float = DEFAULT_LAMBDA) -> np.ndarray:
    return 0.5 * barrier_value(magnitude(n) ** 2, barrier_lambda)


def potential_integral(n: VectorField, barrier_lambda: float = DEFAULT_LAMBDA) -> float:
    return float(np.mean(potential_density(n, barrier_lambda)) * n.grid.volume)


def barrier_dt_cap(barrier_lambda: float) -> float:
    """Largest stable explicit step for the barrier term, λ/(2(−ln λ))."""

    return barrier_lambda / (2.0 * -math.log(barrier_lambda))


def barrier_substeps(dt: float, barrier_lambda: float) -> int:
    return max(1, math.ceil(dt / barrier_dt_cap(barrier_lambda)))


def _advection(n: VectorField, v: VectorField) -> VectorField:
    return matvec(gradient(n), v)


def advection_rotation(n: VectorField, v: VectorField) -> VectorField:
    """−(v·∇)n + Ω(v)n, dealiased."""

    return dealias(matvec(spin(v), n) - _advection(n, v))


def kinematic_terms(n: VectorField, v: VectorField) -> VectorField:
    """−(v·∇)n + Ω(v)n − D(v)n, dealiased."""

    return dealias(matvec(spin(v), n) - matvec(strain_rate(v), n) - _advection(n, v))


def lie_derivative(
    n: VectorField,
    v: VectorField,
    phi: ScalarField,
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> VectorField:
    """ṅ = Δn + ε(∇Φ⊗∇Φ)n − ∂𝓕(n) − D(v)n, evaluated algebraically."""

    stretching = dealias(matvec(strain_rate(v), n))
    return (
        laplacian(n)
        + electric_torque(phi, n, epsilon)
        - potential_gradient(n, barrier_lambda)
        - stretching
    )


def director_rhs(
    n: VectorField,
    v: VectorField,
    phi: ScalarField,
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> VectorField:
    """n_t: the Lie derivative plus the advection and rotation pieces."""

    return (
        laplacian(n)
        + electric_torque(phi, n, epsilon)
        - potential_gradient(n, barrier_lambda)
        + kinematic_terms(n, v)
    )


@dataclass(frozen=True)
class DirectorField:
    n: VectorField
    rate: VectorField

    @classmethod
    def from_state(
        cls, state: State, epsilon: float, barrier_lambda: float = DEFAULT_LAMBDA
    ) -> "DirectorField":
        rate = lie_derivative(state.n, state.v, state.phi, epsilon, barrier_lambda)
        return cls(n=state.n, rate=rate)

    @property
    def sup(self) -> float:
        return sup_norm(self.n)


def relax_barrier(
    values: np.ndarray, dt: float, barrier_lambda: float, substeps: int
) -> np.ndarray:
    """Pointwise sub-cycled explicit Euler for n_t = −F′_λ(|n|²) n."""

    h = dt / substeps
    for _ in range(substeps):
        r = np.sum(values**2, axis=0)
        values = values - h * barrier_derivative(r, barrier_lambda) * values
    return values


def step_director(
    state: State,
    dt: float,
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
    substeps: int | None = None,
) -> VectorField:
    """Explicit kinematics and torque, sub-cycled barrier, then backward Euler on Δn."""

    n = state.n
    grid = n.grid
    if substeps is None:
        substeps = barrier_substeps(dt, barrier_lambda)
    forcing = kinematic_terms(n, state.v) + electric_torque(state.phi, n, epsilon)
    predicted = relax_barrier(n.physical + dt * forcing.physical, dt, barrier_lambda, substeps)
    hat = VectorField(grid, predicted).spectral * grid.resolved_mask / (1.0 + dt * grid.k_squared)
    updated = VectorField(grid, spectral=hat)
    bound = 1.0 + 10.0 * barrier_lambda
    largest = sup_norm(updated)
    if largest > bound:
        raise StepRejected("sup|n| above the barrier bound", largest)
    return updated


def ericksen_stress(n: VectorField) -> TensorField:
    """∇n⊙∇n with entry (i, j) = Σ_k ∂_i n_k ∂_j n_k."""

    g = gradient(n).physical
    return dealias(TensorField(n.grid, np.einsum("ki...,kj...->ij...", g, g)))
