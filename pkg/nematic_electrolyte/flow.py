"""Momentum balance with Ericksen, Maxwell and Leslie stresses; Leslie coefficient checks."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Iterator, Sequence

import numpy as np

from .director import DEFAULT_LAMBDA, ericksen_stress, lie_derivative
from .electrostatics import electric_stress
from .fields import (
    ScalarField,
    TensorField,
    VectorField,
    dealias,
    divergence,
    inner,
    inverse_laplacian,
    leray_project,
    magnitude,
    outer,
    strain_rate,
)
from .state import State, StepRejected

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.5
DELTA_GRID = tuple(
    sorted({2.0**-j for j in range(1, 41)} | {1.0 - 2.0**-j for j in range(1, 41)})
)
CERTIFICATE_SAMPLES = 10**6
CERTIFICATE_SAFETY = 0.99
_SAMPLE_BATCH = 100_000


class CoefficientGateError(ValueError):
    """Raised when Leslie coefficients fail the coercivity condition."""


@dataclass(frozen=True)
class LeslieVerdict:
    admissible: bool
    delta: float
    delta_prime: float

    def __iter__(self) -> Iterator[object]:
        return iter((self.admissible, self.delta, self.delta_prime))


@dataclass(frozen=True)
class LeslieCoefficients:
    """α₁…α₆ with the certified constants δ and δ′ (δ′ = 0 when uncertified)."""

    alpha: tuple[float, float, float, float, float, float]
    delta: float = 0.0
    delta_prime: float = 0.0

    def __post_init__(self) -> None:
        if len(self.alpha) != 6:
            raise ValueError(f"Expected six Leslie coefficients, got {len(self.alpha)}.")

    @classmethod
    def certify(
        cls, alpha: Sequence[float], samples: int = CERTIFICATE_SAMPLES, seed: int = 0
    ) -> "LeslieCoefficients":
        verdict = validate_leslie(alpha, samples=samples, seed=seed)
        if not verdict.admissible:
            raise CoefficientGateError(
                "Leslie coefficients violate the coercivity condition "
                "α₄ > 0 and α₄ − |α₁| − |α₅| − |α₆| − 1/(1−δ) > 0 for some δ in (0, 1): "
                f"alpha={tuple(alpha)}."
            )
        return cls(tuple(float(a) for a in alpha), verdict.delta, verdict.delta_prime)

    @property
    def admissible(self) -> bool:
        if not (self.alpha[3] > 0.0 and 0.0 < self.delta < 1.0):
            return False
        return coercivity_margin(self.alpha, self.delta) > 0.0

    @property
    def energy_identity_compatible(self) -> bool:
        """α₂ = 0 and α₃ = 1, the relations the pure dissipation identity needs."""

        return self.alpha[1] == 0.0 and self.alpha[2] == 1.0

    @property
    def exchange_free(self) -> bool:
        """True when the exchange power vanishes identically."""

        a1, a2, a3, a4, a5, a6 = self.alpha
        return a3 - a2 == 1.0 and a2 + a3 == 1.0 and a6 - a5 == 1.0


def coercivity_margin(alpha: Sequence[float], delta: float) -> float:
    a1, _, _, a4, a5, a6 = alpha
    return a4 - abs(a1) - abs(a5) - abs(a6) - 1.0 / (1.0 - delta)


def dissipation_form(
    n: np.ndarray, ndot: np.ndarray, d: np.ndarray, alpha: Sequence[float]
) -> np.ndarray:
    """α₄|D|² + α₁(n·Dn)² + 2ṅ·Dn + (α₅+α₆)|Dn|² + |ṅ|² on arrays with leading component axes."""

    a1, _, _, a4, a5, a6 = alpha
    dn = np.einsum("ij...,j...->i...", d, n)
    n_dn = np.einsum("i...,i...->...", n, dn)
    return (
        a4 * np.einsum("ij...,ij...->...", d, d)
        + a1 * n_dn**2
        + 2.0 * np.einsum("i...,i...->...", ndot, dn)
        + (a5 + a6) * np.einsum("i...,i...->...", dn, dn)
        + np.einsum("i...,i...->...", ndot, ndot)
    )


def _sample_batch(rng: np.random.Generator, size: int) -> tuple[np.ndarray, ...]:
    direction = rng.standard_normal((3, size))
    direction /= np.linalg.norm(direction, axis=0)
    n = direction * rng.random(size) ** (1.0 / 3.0)
    a = rng.standard_normal((3, 3, size))
    d = 0.5 * (a + np.swapaxes(a, 0, 1))
    trace = np.einsum("ii...->...", d) / 3.0
    d = d - np.eye(3)[:, :, None] * trace
    ndot = rng.standard_normal((3, size))
    return n, ndot, d


def sampled_coercivity(
    alpha: Sequence[float], samples: int = CERTIFICATE_SAMPLES, seed: int = 0
) -> float:
    """Minimum of the dissipation form over |Dn|² + |ṅ|² across random samples."""

    rng = np.random.default_rng(seed)
    smallest = np.inf
    remaining = samples
    while remaining > 0:
        size = min(remaining, _SAMPLE_BATCH)
        n, ndot, d = _sample_batch(rng, size)
        dn = np.einsum("ij...,j...->i...", d, n)
        weight = np.sum(dn**2, axis=0) + np.sum(ndot**2, axis=0)
        ratio = dissipation_form(n, ndot, d, alpha) / weight
        smallest = min(smallest, float(np.min(ratio)))
        remaining -= size
    return smallest


def validate_leslie(
    alpha: Sequence[float], samples: int = CERTIFICATE_SAMPLES, seed: int = 0
) -> LeslieVerdict:
    """Scan δ for the coercivity condition and certify δ′.

    δ′ is the analytic bound min(margin(δ), δ), lowered to 0.99 of the
    sampled minimum when sampling finds something smaller.
    """

    alpha = tuple(float(a) for a in alpha)
    if len(alpha) != 6:
        raise ValueError(f"Expected six Leslie coefficients, got {len(alpha)}.")
    if not alpha[3] > 0.0:
        return LeslieVerdict(False, 0.0, 0.0)
    best_delta = 0.0
    best_bound = 0.0
    for delta in DELTA_GRID:
        margin = coercivity_margin(alpha, delta)
        if margin > 0.0 and min(margin, delta) > best_bound:
            best_delta, best_bound = delta, min(margin, delta)
    if best_bound <= 0.0:
        return LeslieVerdict(False, 0.0, 0.0)
    delta_prime = best_bound
    if samples > 0:
        sampled = sampled_coercivity(alpha, samples, seed)
        delta_prime = min(delta_prime, CERTIFICATE_SAFETY * sampled)
    logger.info("Leslie certificate: delta=%.6g delta_prime=%.6g", best_delta, delta_prime)
    return LeslieVerdict(True, best_delta, delta_prime)


def dissipation_density(
    n: VectorField, ndot: VectorField, dv: TensorField, alpha: Sequence[float]
) -> ScalarField:
    values = dissipation_form(n.physical, ndot.physical, dv.physical, alpha)
    return ScalarField(n.grid, values)


def exchange_power(
    n: VectorField,
    ndot: VectorField,
    dv: TensorField,
    omega: TensorField,
    alpha: Sequence[float],
) -> ScalarField:
    """(1+α₂−α₃)ṅ·Ωn + (α₂+α₃−1)ṅ·Dn + (1+α₅−α₆)Dn·Ωn; zero under the compatibility relations."""

    _, a2, a3, _, a5, a6 = alpha
    dn = np.einsum("ij...,j...->i...", dv.physical, n.physical)
    on = np.einsum("ij...,j...->i...", omega.physical, n.physical)
    rate = ndot.physical
    values = (
        (1.0 + a2 - a3) * np.sum(rate * on, axis=0)
        + (a2 + a3 - 1.0) * np.sum(rate * dn, axis=0)
        + (1.0 + a5 - a6) * np.sum(dn * on, axis=0)
    )
    return ScalarField(n.grid, values)


def leslie_stress(
    n: VectorField, ndot: VectorField, dv: TensorField, alpha: Sequence[float]
) -> TensorField:
    """Anisotropic Leslie stress without the Newtonian α₄ part."""

    a1, a2, a3, _, a5, a6 = alpha
    nv = n.physical
    rate = ndot.physical
    dn = np.einsum("ij...,j...->i...", dv.physical, nv)
    n_dn = np.sum(nv * dn, axis=0)

    def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("i...,j...->ij...", a, b)

    values = (
        a1 * n_dn * tensor(nv, nv)
        + a2 * tensor(rate, nv)
        + a3 * tensor(nv, rate)
        + a5 * tensor(dn, nv)
        + a6 * tensor(nv, dn)
    )
    return dealias(TensorField(n.grid, values))


def momentum_forcing(
    state: State,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> VectorField:
    """Explicit momentum forcing before projection."""

    v = state.v
    ndot = lie_derivative(state.n, v, state.phi, epsilon, barrier_lambda)
    stress = (
        electric_stress(state.phi, state.n, epsilon)
        + leslie_stress(state.n, ndot, strain_rate(v), alpha)
        - ericksen_stress(state.n)
        - dealias(outer(v, v))
    )
    return divergence(stress)


def momentum_rhs(
    state: State,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> VectorField:
    """Leray-projected explicit forcing; the α₄ viscous part is handled implicitly."""

    return leray_project(momentum_forcing(state, alpha, epsilon, barrier_lambda))


def pressure(
    state: State,
    alpha: Sequence[float],
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
) -> ScalarField:
    """Zero-mean p with Δp = div(forcing), so that v_t + ∇p balances the forcing."""

    forcing = momentum_forcing(state, alpha, epsilon, barrier_lambda)
    return inverse_laplacian(divergence(forcing))


def cfl_number(v: VectorField, dt: float) -> float:
    return float(np.max(magnitude(v)) * dt / v.grid.spacing)


def step_flow(
    state: State,
    alpha: Sequence[float],
    dt: float,
    epsilon: float,
    barrier_lambda: float = DEFAULT_LAMBDA,
    cfl_limit: float = CFL_LIMIT,
) -> VectorField:
    """Backward Euler on (α₄/2)Δv, explicit forcing, then Leray projection."""

    grid = state.grid
    before = cfl_number(state.v, dt)
    if before > cfl_limit:
        raise StepRejected("CFL number above the limit", before)
    forcing = momentum_rhs(state, alpha, epsilon, barrier_lambda)
    damping = 1.0 + 0.5 * dt * alpha[3] * grid.k_squared
    updated = leray_project(
        VectorField(
            grid,
            spectral=(state.v.spectral + dt * forcing.spectral) * grid.resolved_mask / damping,
        )
    )
    after = cfl_number(updated, dt)
    if after > cfl_limit:
        raise StepRejected("CFL number above the limit", after)
    return updated


def kinetic_energy(v: VectorField) -> float:
    return 0.5 * inner(v, v)


@dataclass(frozen=True)
class FlowMonitors:
    kinetic: float
    strain_squared: float
    max_speed: float
    cfl: float


def flow_monitors(v: VectorField, dt: float) -> FlowMonitors:
    d = strain_rate(v)
    return FlowMonitors(
        kinetic=kinetic_energy(v),
        strain_squared=inner(d, d),
        max_speed=float(np.max(magnitude(v))),
        cfl=cfl_number(v, dt),
    )
