"""Anisotropic electrostatics: dielectric operator, potential solve and Maxwell stress."""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .fields import (
    ScalarField,
    TensorField,
    VectorField,
    dealias,
    divergence,
    dot,
    gradient,
    inner,
    integrate,
    l2_norm,
    outer,
    remove_mean,
    scale,
    sup_norm,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 500
NEUTRALITY_TOLERANCE = 1e-10
MAX_RESTARTS = 3


class NonNeutralCharge(ValueError):
    """Raised when ∫(c_p − c_m) is not zero, so the periodic problem has no solution."""


class UnresolvedCharge(ValueError):
    """Raised when the charge density has Nyquist content the potential operator cannot reach."""


class DirectorBoundExceeded(ValueError):
    """Raised when |n| leaves the ball of radius 1 + 10λ."""


@dataclass(frozen=True)
class DielectricParams:
    epsilon_a: float

    def __post_init__(self) -> None:
        if not self.epsilon_a >= 0.0:
            raise ValueError(f"epsilon_a must be non-negative, got {self.epsilon_a}.")


@dataclass(frozen=True)
class PoissonSolveReport:
    iterations: int
    final_residual: float
    converged: bool


class NoConvergence(RuntimeError):
    """Raised when the potential solve hits its iteration cap."""

    def __init__(self, report: PoissonSolveReport) -> None:
        super().__init__(
            f"Potential solve did not converge in {report.iterations} iterations "
            f"(residual {report.final_residual:.3e})."
        )
        self.report = report


def check_director_bound(n: VectorField, barrier_lambda: float) -> None:
    bound = 1.0 + 10.0 * barrier_lambda
    largest = sup_norm(n)
    if largest > bound:
        raise DirectorBoundExceeded(f"sup|n| = {largest:.6g} exceeds {bound:.6g}.")


def apply_dielectric(a: VectorField, n: VectorField, epsilon: float) -> VectorField:
    """Pointwise (Id + ε n⊗n) a."""

    if epsilon == 0.0:
        return a
    return a + scale(n, dot(n, a)) * epsilon


def dielectric_tensor(
    n: VectorField, epsilon: float, barrier_lambda: float = 1e-3
) -> TensorField:
    check_director_bound(n, barrier_lambda)
    identity = np.eye(n.grid.dim).reshape((n.grid.dim, n.grid.dim) + (1,) * n.grid.dim)
    return TensorField(n.grid, identity + epsilon * outer(n, n).physical)


def dielectric_operator(f: ScalarField, n: VectorField, epsilon: float) -> ScalarField:
    """Matrix-free A f = −div((Id + ε n⊗n)∇f); symmetric, so no dealiasing inside."""

    return -divergence(apply_dielectric(gradient(f), n, epsilon))


def _project(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, spectral=f.spectral * f.grid.solvable_mask)


def solve_potential(
    n: VectorField,
    c_p: ScalarField,
    c_m: ScalarField,
    epsilon: float,
    tol: float = DEFAULT_TOLERANCE,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    initial_guess: ScalarField | None = None,
) -> tuple[ScalarField, PoissonSolveReport]:
    """Solve −div((Id+εn⊗n)∇Φ) = c_p − c_m for zero-mean Φ by preconditioned CG.

    Iterates live on the modes where the discrete gradient is injective (the
    constant mode and the pure Nyquist corners are removed). The preconditioner
    is the constant-coefficient inverse ((1+ε/2)|k|²)⁻¹ applied spectrally.
    The reported residual is measured against the mean-free charge density,
    including any part of it the operator cannot reach.
    """

    grid = n.grid
    charge = integrate(c_p - c_m)
    if abs(charge) > NEUTRALITY_TOLERANCE * max(1.0, integrate(c_p + c_m)):
        raise NonNeutralCharge(f"Net charge {charge:.3e} is not zero.")

    rho = remove_mean(c_p - c_m)
    rhs = _project(rho)
    unreachable = l2_norm(rho - rhs)
    if unreachable > 0.5 * tol:
        raise UnresolvedCharge(
            f"Charge density has {unreachable:.3e} of L2 mass on Nyquist modes "
            "the potential operator cannot reach."
        )

    k2 = grid.k_squared
    symbol = np.divide(
        1.0, (1.0 + 0.5 * epsilon) * k2, out=np.zeros_like(k2), where=grid.solvable_mask
    )

    def as_field(values: np.ndarray) -> ScalarField:
        return ScalarField(grid, np.reshape(values, grid.shape))

    def apply_operator(values: np.ndarray) -> np.ndarray:
        return _project(dielectric_operator(as_field(values), n, epsilon)).physical.ravel()

    def apply_preconditioner(values: np.ndarray) -> np.ndarray:
        return ScalarField(grid, spectral=as_field(values).spectral * symbol).physical.ravel()

    shape = (grid.size, grid.size)
    operator = LinearOperator(shape, matvec=apply_operator, dtype=float)
    preconditioner = LinearOperator(shape, matvec=apply_preconditioner, dtype=float)
    # cg measures the Euclidean norm of grid values; inner() carries the volume weight.
    atol = math.sqrt(tol**2 - unreachable**2) * math.sqrt(grid.size / grid.volume)

    iterations = 0

    def count(_: np.ndarray) -> None:
        nonlocal iterations
        iterations += 1

    phi = _project(initial_guess) if initial_guess is not None else ScalarField.zeros(grid)
    residual = l2_norm(rho - dielectric_operator(phi, n, epsilon))
    for _ in range(MAX_RESTARTS):
        if residual <= tol or iterations >= max_iterations:
            break
        values, _ = cg(
            operator,
            rhs.physical.ravel(),
            x0=phi.physical.ravel(),
            rtol=0.0,
            atol=atol,
            maxiter=max_iterations - iterations,
            M=preconditioner,
            callback=count,
        )
        phi = _project(as_field(values))
        residual = l2_norm(rho - dielectric_operator(phi, n, epsilon))

    report = PoissonSolveReport(
        iterations=iterations, final_residual=residual, converged=residual <= tol
    )
    if not report.converged:
        raise NoConvergence(report)
    logger.debug("Potential solve: %d iterations, residual %.3e", iterations, residual)
    return phi, report


def electric_stress(phi: ScalarField, n: VectorField, epsilon: float) -> TensorField:
    """(∇Φ⊗∇Φ)(Id + ε n⊗n), entry (i, j) = ∂_iΦ ((Id+εn⊗n)∇Φ)_j."""

    a = gradient(phi)
    return dealias(outer(a, apply_dielectric(a, n, epsilon)))


def electric_torque(phi: ScalarField, n: VectorField, epsilon: float) -> VectorField:
    """ε(∇Φ⊗∇Φ)n = ε(∇Φ·n)∇Φ."""

    if epsilon == 0.0:
        return VectorField.zeros(n.grid)
    a = gradient(phi)
    return dealias(scale(a, dot(a, n)) * epsilon)


def electric_energy(phi: ScalarField, n: VectorField, epsilon: float) -> float:
    """½∫(Id+εn⊗n)∇Φ·∇Φ."""

    a = gradient(phi)
    return 0.5 * inner(a, apply_dielectric(a, n, epsilon))
