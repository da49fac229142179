"""Nernst–Planck transport of the two ion species."""

from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from .electrostatics import apply_dielectric
from .fields import (
    ScalarField,
    VectorField,
    dealias,
    divergence,
    dot,
    gradient,
    integrate,
    scale,
)
from .state import State, StepRejected

logger = logging.getLogger(__name__)

MAXIMUM_PRINCIPLE_TOLERANCE = 1e-8
LOG_FLOOR = 1e-14
DISSIPATION_FLOOR = 1e-10


@dataclass(frozen=True)
class SpeciesPair:
    c_p: ScalarField
    c_m: ScalarField
    c_bar: float

    def __post_init__(self) -> None:
        if not self.c_bar > 0.0:
            raise ValueError(f"c_bar must be positive, got {self.c_bar}.")

    def masses(self) -> tuple[float, float]:
        return species_masses(self.c_p, self.c_m)


def species_masses(c_p: ScalarField, c_m: ScalarField) -> tuple[float, float]:
    return integrate(c_p), integrate(c_m)


def _product_flux(
    c: ScalarField, phi: ScalarField, n: VectorField, epsilon: float, sign: int
) -> VectorField:
    """Everything in the flux except the isotropic ∇c, before dealiasing."""

    grad_c = gradient(c)
    drift = scale(gradient(phi), c) * float(sign)
    if epsilon == 0.0:
        return drift
    total = grad_c + drift
    return drift + scale(n, dot(n, total)) * epsilon


def species_flux(
    c: ScalarField, phi: ScalarField, n: VectorField, epsilon: float, sign: int
) -> VectorField:
    """(Id + ε n⊗n)(∇c + sign·c∇Φ); the product terms are dealiased."""

    return gradient(c) + dealias(_product_flux(c, phi, n, epsilon, sign))


def _advance_species(
    c: ScalarField, state: State, dt: float, epsilon: float, sign: int
) -> ScalarField:
    grid = c.grid
    explicit = dealias(_product_flux(c, state.phi, state.n, epsilon, sign) - scale(state.v, c))
    hat = (c.spectral + dt * divergence(explicit).spectral) * grid.resolved_mask
    hat = hat / (1.0 + dt * grid.k_squared)
    return ScalarField(grid, spectral=hat)


def step_species(
    state: State,
    dt: float,
    epsilon: float,
    c_bar: float,
    tol_mp: float = MAXIMUM_PRINCIPLE_TOLERANCE,
) -> tuple[ScalarField, ScalarField]:
    """IMEX step: implicit isotropic diffusion, explicit transport in divergence form."""

    c_p = _advance_species(state.c_p, state, dt, epsilon, +1)
    c_m = _advance_species(state.c_m, state, dt, epsilon, -1)
    for name, c in (("c_p", c_p), ("c_m", c_m)):
        low = float(np.min(c.physical))
        high = float(np.max(c.physical))
        if low < -10.0 * tol_mp:
            raise StepRejected(f"min {name} below the maximum-principle floor", low)
        if high > c_bar * (1.0 + 10.0 * tol_mp):
            raise StepRejected(f"max {name} above c_bar", high)
    return c_p, c_m


def entropy_density(c: ScalarField) -> np.ndarray:
    values = c.physical
    floored = np.maximum(values, LOG_FLOOR)
    return np.where(values > 0.0, floored * np.log(floored), 0.0)


def entropy_integral(c: ScalarField) -> float:
    """∫ c ln c with the integrand extended by zero at c = 0."""

    return float(np.mean(entropy_density(c)) * c.grid.volume)


def species_dissipation(
    c: ScalarField, phi: ScalarField, n: VectorField, epsilon: float, sign: int
) -> float:
    """∫ (Id+εn⊗n)(∇c + sign·c∇Φ)·(∇c/c + sign·∇Φ)."""

    q = gradient(c) + scale(gradient(phi), c) * float(sign)
    weighted = dot(q, apply_dielectric(q, n, epsilon))
    floored = np.maximum(c.physical, DISSIPATION_FLOOR)
    return float(np.mean(weighted.physical / floored) * c.grid.volume)


def monotone_truncation(r: np.ndarray, c_bar: float) -> np.ndarray:
    """M(r) = 0 for r ≤ c̄, ½(r − c̄)² + c̄(r − c̄) above; nondecreasing."""

    excess = np.maximum(np.asarray(r, dtype=float) - c_bar, 0.0)
    return 0.5 * excess**2 + c_bar * excess


def truncation_excess(c: ScalarField, c_bar: float) -> float:
    """½∫((c − c̄)⁺)², zero while the upper bound holds."""

    excess = np.maximum(c.physical - c_bar, 0.0)
    return float(0.5 * np.mean(excess**2) * c.grid.volume)
