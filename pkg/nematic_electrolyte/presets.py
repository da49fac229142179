"""Initial-condition presets and the initial-data hypothesis gate."""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict

import numpy as np
from scipy import fft

from .config import SimConfig
from .director import MINIMIZER_SQUARED
from .electrostatics import solve_potential
from .fields import (
    Grid,
    ScalarField,
    VectorField,
    divergence,
    drop_nyquist,
    integrate,
    l2_norm,
    leray_project,
    magnitude,
    remove_mean,
)
from .state import State

logger = logging.getLogger(__name__)

DEFECT_CORE_RADIUS = 0.5
DEFECT_AMPLITUDE = 0.9
RANDOM_MAX_WAVENUMBER = 4
RANDOM_MAX_SPEED = 0.2
HYPOTHESIS_SLACK = 1e-12

Fields = tuple[ScalarField, ScalarField, VectorField, VectorField]


class InvalidPreset(ValueError):
    """Raised for an unknown preset name."""


class HypothesisViolation(ValueError):
    """Raised when initial data break one of the admissibility bounds."""


def _uniform_director(grid: Grid) -> VectorField:
    direction = [0.0] * grid.dim
    direction[0] = math.sqrt(MINIMIZER_SQUARED)
    return VectorField.uniform(grid, direction)


def _rest(grid: Grid, config: SimConfig, rng: np.random.Generator) -> Fields:
    ones = ScalarField.constant(grid, 1.0)
    return ones, ones, VectorField.zeros(grid), _uniform_director(grid)


def _charged_blob(grid: Grid, config: SimConfig, rng: np.random.Generator) -> Fields:
    x = grid.coordinates()
    bump = np.prod([((1.0 + np.cos(xj - math.pi)) / 2.0) ** 2 for xj in x], axis=0)
    bump = bump - np.mean(bump)
    c_p = ScalarField(grid, 1.0 + 0.5 * bump)
    c_m = ScalarField(grid, 1.0 - 0.5 * bump)
    angle = 0.25 * np.sin(x[1])
    amplitude = math.sqrt(MINIMIZER_SQUARED)
    components = [amplitude * np.cos(angle), amplitude * np.sin(angle)]
    components += [np.zeros(grid.shape)] * (grid.dim - 2)
    return c_p, c_m, VectorField.zeros(grid), VectorField.from_components(grid, components)


def _defect_pair(grid: Grid, config: SimConfig, rng: np.random.Generator) -> Fields:
    """Winding +1 at (0, 0) and −1 at (0, π) in the (x₁, x₂) plane."""

    x = grid.coordinates()
    real = np.sin(x[0])
    imaginary = np.sin(x[1]) + 2.0 * (1.0 - np.cos(x[0]))
    scale = DEFECT_AMPLITUDE / np.sqrt(real**2 + imaginary**2 + DEFECT_CORE_RADIUS**2)
    components = [real * scale, imaginary * scale] + [np.zeros(grid.shape)] * (grid.dim - 2)
    ones = ScalarField.constant(grid, 1.0)
    return ones, ones, VectorField.zeros(grid), VectorField.from_components(grid, components)


def _low_pass(grid: Grid, values: np.ndarray) -> np.ndarray:
    mask = np.array(grid.resolved_mask)
    for kj in grid.wavenumbers:
        mask &= np.abs(kj) <= RANDOM_MAX_WAVENUMBER
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    return fft.ifftn(fft.fftn(values, axes=axes) * mask, axes=axes).real


def _random_smooth(grid: Grid, config: SimConfig, rng: np.random.Generator) -> Fields:
    species = _low_pass(grid, rng.standard_normal((2,) + grid.shape))
    species -= species.mean(axis=tuple(range(1, species.ndim)), keepdims=True)
    species /= np.max(np.abs(species), axis=tuple(range(1, species.ndim)), keepdims=True)
    c_p = ScalarField(grid, 0.5 * config.c_bar * (1.0 + 0.5 * species[0]))
    c_m = ScalarField(grid, 0.5 * config.c_bar * (1.0 + 0.5 * species[1]))

    raw_v = VectorField(grid, _low_pass(grid, rng.standard_normal((grid.dim,) + grid.shape)))
    v = remove_mean(leray_project(raw_v))
    v = v * (RANDOM_MAX_SPEED / max(float(np.max(magnitude(v))), 1e-300))

    raw_n = _low_pass(grid, rng.standard_normal((grid.dim,) + grid.shape))
    n = VectorField(grid, DEFECT_AMPLITUDE * raw_n / np.max(np.sqrt(np.sum(raw_n**2, axis=0))))
    return c_p, c_m, v, n


PRESETS: Dict[str, Callable[[Grid, SimConfig, np.random.Generator], Fields]] = {
    "rest": _rest,
    "charged-blob": _charged_blob,
    "defect-pair": _defect_pair,
    "random-smooth": _random_smooth,
}


def check_hypotheses(state: State, c_bar: float) -> None:
    """Verify 0 ≤ c ≤ c̄, |n| ≤ 1, div v = 0 and charge neutrality."""

    for name in ("c_p", "c_m"):
        values = getattr(state, name).physical
        if values.min() < -HYPOTHESIS_SLACK:
            raise HypothesisViolation(f"{name} >= 0 violated (min {values.min():.6g}).")
        if values.max() > c_bar + HYPOTHESIS_SLACK:
            raise HypothesisViolation(
                f"{name} <= c_bar violated (max {values.max():.6g} > {c_bar:.6g})."
            )
    largest = float(np.max(magnitude(state.n)))
    if largest > 1.0 + HYPOTHESIS_SLACK:
        raise HypothesisViolation(f"|n| <= 1 violated (sup {largest:.6g}).")
    div = l2_norm(divergence(state.v))
    if div > 1e-12 * max(1.0, l2_norm(state.v)):
        raise HypothesisViolation(f"div v = 0 violated (||div v|| = {div:.3e}).")
    charge = integrate(state.c_p - state.c_m)
    if abs(charge) > 1e-10 * max(1.0, integrate(state.c_p + state.c_m)):
        raise HypothesisViolation(f"charge neutrality violated (net {charge:.3e}).")


def init_state(config: SimConfig, rng: np.random.Generator | None = None) -> State:
    """Build the preset initial state, check it and solve for its potential."""

    builder = PRESETS.get(config.preset)
    if builder is None:
        raise InvalidPreset(f"Unknown preset {config.preset!r}.")
    grid = config.grid()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    c_p, c_m, v, n = builder(grid, config, rng)
    # The director keeps its sampled values so |n| <= 1 holds pointwise;
    # its first step drops the Nyquist modes.
    c_p, c_m, v = drop_nyquist(c_p), drop_nyquist(c_m), drop_nyquist(v)
    state = State(c_p=c_p, c_m=c_m, phi=ScalarField.zeros(grid), v=v, n=n, time=0.0)
    check_hypotheses(state, config.c_bar)
    phi, report = solve_potential(
        n, c_p, c_m, config.epsilon, config.poisson_tol, max_iterations=config.poisson_max_iter
    )
    logger.info("Preset %s ready (%d potential iterations)", config.preset, report.iterations)
    return state.updated(phi=phi)

