"""Desk-scale acceptance runs on the reference configuration.

These take minutes; run them with ``pytest -m slow``.
"""

from dataclasses import replace
import math
from pathlib import Path

import numpy as np
import pytest

from nematic_electrolyte.config import load_config
from nematic_electrolyte.diagnostics import check_diagnostics, energy_budget, weak_form_residual
from nematic_electrolyte.director import barrier_substeps
from nematic_electrolyte.driver import (
    advance,
    advance_with_halving,
    read_diagnostics,
    run,
    start_run,
)
from nematic_electrolyte.flow import CERTIFICATE_SAMPLES, dissipation_form, validate_leslie

pytestmark = pytest.mark.slow

REFERENCE_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "reference.cfg"
REFERENCE_ALPHA = (0.0, 0.0, 1.0, 3.0, 0.0, 0.5)
EXCHANGE_FREE_ALPHA = (0.0, 0.0, 1.0, 3.0, 0.0, 1.0)
WEAK_RESIDUAL_FLOOR = 1e-9


def reference_config(**changes):
    return replace(load_config(REFERENCE_CONFIG, environ={}), **changes)


def trajectory(config):
    progress, _ = start_run(config)
    states = [progress.state]
    for _ in range(config.steps):
        state, _, _ = advance_with_halving(states[-1], config)
        states.append(state)
    return states


def budget_residual(state, config, dt):
    after, _ = advance(state, config, dt, barrier_substeps(dt, config.barrier_lambda))
    report = energy_budget(state, after, dt, config.alpha, config.epsilon, config.barrier_lambda)
    return report.residual


def coercivity_samples(rng, size):
    direction = rng.standard_normal((3, size))
    direction /= np.linalg.norm(direction, axis=0)
    n = direction * rng.random(size) ** (1.0 / 3.0)
    a = rng.standard_normal((3, 3, size))
    d = 0.5 * (a + np.swapaxes(a, 0, 1))
    d -= np.eye(3)[:, :, None] * (np.einsum("ii...->...", d) / 3.0)
    ndot = rng.standard_normal((3, size))
    return n, ndot, d


@pytest.fixture(scope="module")
def reference_frame(tmp_path_factory):
    result = run(reference_config(), tmp_path_factory.mktemp("reference"))
    return read_diagnostics(result.diagnostics_path)


def test_reference_run_keeps_every_contract(reference_frame):
    config = reference_config()
    assert len(reference_frame) == config.steps + 1
    assert check_diagnostics(reference_frame, config.c_bar, config.barrier_lambda) == []
    assert reference_frame["min_cp"].min() >= -1e-8
    assert reference_frame["max_cp"].max() <= config.c_bar * (1.0 + 1e-6)
    assert reference_frame["sup_n"].max() <= 1.0 + 10.0 * config.barrier_lambda
    assert reference_frame["phi_inf"].max() <= 10.0 * config.c_bar * (2.0 * math.pi) ** 2
    for column in ("mass_p", "mass_m"):
        initial = reference_frame[column].iloc[0]
        assert (reference_frame[column] - initial).abs().max() <= 1e-12 * initial


@pytest.mark.parametrize(
    "alpha, admissible, delta",
    [
        ((0.0, 0.0, 1.0, 3.0, 0.0, 0.0), True, 0.5),
        (REFERENCE_ALPHA, True, 0.5),
        ((1.0, 0.0, 1.0, 1.0, 0.0, 0.0), False, 0.0),
        ((0.0, 0.0, 1.0, 0.0, 0.0, 0.0), False, 0.0),
    ],
)
def test_full_certificate_verdicts(alpha, admissible, delta):
    verdict = validate_leslie(alpha)
    assert verdict.admissible is admissible
    assert verdict.delta == delta


def test_certificate_holds_on_a_million_fresh_samples():
    verdict = validate_leslie(REFERENCE_ALPHA)
    assert verdict.delta_prime == 0.5
    rng = np.random.default_rng(2024)
    batch = 100_000
    for _ in range(CERTIFICATE_SAMPLES // batch):
        n, ndot, d = coercivity_samples(rng, batch)
        dn = np.einsum("ij...,j...->i...", d, n)
        weight = np.sum(dn**2, axis=0) + np.sum(ndot**2, axis=0)
        density = dissipation_form(n, ndot, d, REFERENCE_ALPHA)
        assert np.all(density >= verdict.delta_prime * weight - 1e-12 * (1.0 + weight))


def test_budget_residual_is_second_order():
    config = reference_config(t_end=0.01)
    state = trajectory(config)[-1]
    coarse = budget_residual(state, config, config.dt)
    fine = budget_residual(state, config, config.dt / 2.0)
    assert abs(coarse) >= 3.0 * abs(fine)


def test_energy_decreases_up_to_the_budget_residual(tmp_path):
    config = reference_config(alpha=EXCHANGE_FREE_ALPHA, energy_identity_mode=True)
    early = trajectory(replace(config, t_end=10 * config.dt))
    constant = max(
        abs(budget_residual(early[0], config, config.dt)),
        abs(budget_residual(early[10], config, config.dt)),
    ) / config.dt**2
    frame = read_diagnostics(run(config, tmp_path).diagnostics_path)
    assert len(frame) == 2001
    energies = frame["E"].to_numpy()
    assert np.all(np.diff(energies) <= 10.0 * constant * config.dt**2)


def test_barrier_holds_under_strong_anisotropy(tmp_path):
    config = reference_config(epsilon=0.5)
    frame = read_diagnostics(run(config, tmp_path).diagnostics_path)
    assert len(frame) == config.steps + 1
    assert frame["sup_n"].max() <= 1.0 + 10.0 * config.barrier_lambda


def test_h2_monitor_at_small_anisotropy(tmp_path):
    config = reference_config(epsilon=0.02, h2_monitor_mode=True)
    frame = read_diagnostics(run(config, tmp_path).diagnostics_path)
    assert len(frame) == config.steps + 1
    violations = check_diagnostics(frame, config.c_bar, config.barrier_lambda, h2_monitor=True)
    assert violations == []


def test_weak_residuals_decrease_under_refinement():
    coarse_config = reference_config(points_per_axis=32, dt=2e-3, t_end=0.05)
    fine_config = reference_config(points_per_axis=64, dt=1e-3, t_end=0.05)
    coarse = weak_form_residual(
        trajectory(coarse_config), coarse_config.alpha, coarse_config.epsilon
    )
    fine = weak_form_residual(trajectory(fine_config), fine_config.alpha, fine_config.epsilon)
    assert list(coarse["equation"]) == list(fine["equation"])
    coarse_values = coarse["residual"].to_numpy()
    fine_values = fine["residual"].to_numpy()
    resolved = coarse_values > WEAK_RESIDUAL_FLOOR
    assert resolved.any()
    assert np.all(fine_values[resolved] < coarse_values[resolved])
    assert np.all(fine_values[~resolved] <= WEAK_RESIDUAL_FLOOR)
