"""Outer time loop, checkpoints and run manifests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import json
import logging
from pathlib import Path
import platform
from typing import Any, Dict, List

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .config import ConfigError, SimConfig
from .diagnostics import (
    DIAGNOSTICS_COLUMNS,
    EstimateLedger,
    diagnostics_record,
    energy_budget,
    monitor_row,
    total_dissipation,
    total_energy,
)
from .director import barrier_dt_cap, barrier_substeps, step_director
from .electrostatics import PoissonSolveReport, solve_potential
from .fields import ScalarField, VectorField
from .flow import CFL_LIMIT, LeslieCoefficients, cfl_number, step_flow
from .presets import init_state
from .snapshots import snapshot_path, write_snapshot
from .state import FIELD_NAMES, State, StepRejected
from .transport import species_masses, step_species

logger = logging.getLogger(__name__)

DIAGNOSTICS_NAME = "diagnostics.csv"
MANIFEST_NAME = "manifest.json"
CHECKPOINT_NAME = "checkpoint.npz"
SNAPSHOT_DIRECTORY = "snapshots"
MAX_HALVINGS = 5


class CheckpointError(ValueError):
    """Raised when a checkpoint file is missing pieces or cannot be decoded."""


@dataclass
class RunProgress:
    """Mutable bookkeeping of a run between steps."""

    config: SimConfig
    state: State
    step: int
    rows: List[Dict[str, float]] = field(default_factory=list)
    ledger: EstimateLedger = field(default_factory=EstimateLedger)
    dt_history: List[Dict[str, float]] = field(default_factory=list)
    reference_masses: tuple[float, float] = (0.0, 0.0)
    rng_state: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class RunResult:
    state: State
    steps: int
    diagnostics_path: Path
    manifest_path: Path
    snapshot_paths: tuple[Path, ...]
    checkpoint_path: Path | None
    dt_history: tuple[Dict[str, float], ...]


def canonical(state: State) -> State:
    """Rebuild every field from its physical values so a reloaded state is identical."""

    return State(
        c_p=ScalarField(state.grid, np.array(state.c_p.physical)),
        c_m=ScalarField(state.grid, np.array(state.c_m.physical)),
        phi=ScalarField(state.grid, np.array(state.phi.physical)),
        v=VectorField(state.grid, np.array(state.v.physical)),
        n=VectorField(state.grid, np.array(state.n.physical)),
        time=state.time,
    )


def gate_coefficients(config: SimConfig) -> LeslieCoefficients:
    """Certify the Leslie coefficients; raises CoefficientGateError when they fail."""

    coefficients = LeslieCoefficients.certify(
        config.alpha, samples=config.certificate_samples, seed=config.seed
    )
    return coefficients


def coefficient_warnings(coefficients: LeslieCoefficients) -> list[str]:
    warnings = []
    if not coefficients.energy_identity_compatible:
        warnings.append(
            "alpha_2 = 0 and alpha_3 = 1 do not hold: the energy-budget acceptance is skipped"
        )
    if not coefficients.exchange_free:
        warnings.append(
            "alpha_6 - alpha_5 != 1 or alpha_3 - alpha_2 != 1: the exchange power is nonzero "
            "and the energy need not decrease"
        )
    for message in warnings:
        logger.warning(message)
    return warnings


def _solve(state: State, config: SimConfig) -> tuple[State, PoissonSolveReport]:
    phi, report = solve_potential(
        state.n,
        state.c_p,
        state.c_m,
        config.epsilon,
        config.poisson_tol,
        max_iterations=config.poisson_max_iter,
        initial_guess=state.phi,
    )
    return state.updated(phi=phi), report


def advance(
    state: State, config: SimConfig, dt: float, substeps: int
) -> tuple[State, PoissonSolveReport]:
    """One split step: potential, species, director, flow, then the potential of the new state."""

    current, _ = _solve(state, config)
    c_p, c_m = step_species(current, dt, config.epsilon, config.c_bar, config.tol_mp)
    current = current.updated(c_p=c_p, c_m=c_m)
    n = step_director(current, dt, config.epsilon, config.barrier_lambda, substeps)
    current = current.updated(n=n)
    v = step_flow(current, config.alpha, dt, config.epsilon, config.barrier_lambda)
    current = canonical(current.updated(v=v, time=state.time + dt))
    solved, report = _solve(current, config)
    return canonical(solved), report


def advance_with_halving(
    state: State, config: SimConfig
) -> tuple[State, PoissonSolveReport, int]:
    """Advance by config.dt, splitting into 2**h sub-steps after each rejection."""

    rejection: StepRejected | None = None
    for halvings in range(MAX_HALVINGS + 1):
        count = 2**halvings
        dt = config.dt / count
        substeps = barrier_substeps(dt, config.barrier_lambda)
        try:
            current = state
            for _ in range(count):
                current, report = advance(current, config, dt, substeps)
            return current, report, halvings
        except StepRejected as exc:
            rejection = exc
            logger.warning("Step rejected (%s); retrying with dt=%.3e", exc, dt / 2.0)
    assert rejection is not None
    raise rejection


def _initial_row(progress: RunProgress, report: PoissonSolveReport) -> Dict[str, float]:
    config = progress.config
    state = progress.state
    rate = total_dissipation(state, config.alpha, config.epsilon, config.barrier_lambda)
    energy = replace(
        total_energy(state, config.epsilon, config.barrier_lambda), dissipation_rate=rate
    )
    monitors = monitor_row(
        state,
        config.c_bar,
        config.barrier_lambda,
        config.grad_phi_exponent,
        report,
        progress.reference_masses,
        step=0,
    )
    return diagnostics_record(energy, monitors)


def start_run(config: SimConfig) -> tuple[RunProgress, LeslieCoefficients]:
    """Gate the coefficients, build the initial state and its diagnostics row."""

    coefficients = gate_coefficients(config)
    warnings = coefficient_warnings(coefficients)
    rng = np.random.default_rng(config.seed)
    state = init_state(config, rng)
    cfl = cfl_number(state.v, config.dt)
    if cfl > CFL_LIMIT:
        raise ConfigError(
            f"dt = {config.dt} violates the CFL bound for the initial velocity "
            f"(max|v| dt / h = {cfl:.3f} > {CFL_LIMIT})."
        )
    state, report = _solve(canonical(state), config)
    state = canonical(state)
    progress = RunProgress(
        config=config,
        state=state,
        step=0,
        reference_masses=species_masses(state.c_p, state.c_m),
        rng_state=rng.bit_generator.state,
        warnings=warnings,
    )
    progress.ledger.update(
        state, 0.0, config.c_bar, config.barrier_lambda, config.grad_phi_exponent, config.p0
    )
    progress.rows.append(_initial_row(progress, report))
    return progress, coefficients


def write_diagnostics(rows: List[Dict[str, float]], path: Path) -> Path:
    frame = pd.DataFrame(rows, columns=list(DIAGNOSTICS_COLUMNS))
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_diagnostics(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_manifest(
    progress: RunProgress, coefficients: LeslieCoefficients, path: Path
) -> Path:
    config = progress.config
    manifest = {
        "config": config.to_dict(),
        "certificate": {
            "admissible": coefficients.admissible,
            "delta": coefficients.delta,
            "delta_prime": coefficients.delta_prime,
        },
        "barrier_dt_cap": barrier_dt_cap(config.barrier_lambda),
        "barrier_substeps": barrier_substeps(config.dt, config.barrier_lambda),
        "steps_completed": progress.step,
        "dt_history": progress.dt_history,
        "warnings": progress.warnings,
        "estimates": progress.ledger.to_dict(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "nematic_electrolyte": __version__,
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def save_checkpoint(progress: RunProgress, coefficients: LeslieCoefficients, path: Path) -> Path:
    metadata = {
        "config": progress.config.to_dict(),
        "step": progress.step,
        "time": progress.state.time,
        "rng_state": progress.rng_state,
        "dt_history": progress.dt_history,
        "reference_masses": list(progress.reference_masses),
        "ledger": progress.ledger.to_dict(),
        "warnings": progress.warnings,
        "certificate": [coefficients.delta, coefficients.delta_prime],
    }
    arrays = {name: np.asarray(field.physical) for name, field in progress.state.named_fields()}
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(handle, metadata=np.array(json.dumps(metadata)), **arrays)
    return path


def load_checkpoint(path: Path) -> tuple[RunProgress, LeslieCoefficients]:
    if not path.exists():
        raise CheckpointError(f"Checkpoint {path} does not exist.")
    try:
        with np.load(path, allow_pickle=False) as data:
            metadata = json.loads(str(data["metadata"]))
            arrays = {name: np.array(data[name]) for name in FIELD_NAMES}
    except (KeyError, ValueError, OSError) as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc
    try:
        config = SimConfig.from_dict(metadata["config"])
        grid = config.grid()
        state = State(
            c_p=ScalarField(grid, arrays["c_p"]),
            c_m=ScalarField(grid, arrays["c_m"]),
            phi=ScalarField(grid, arrays["phi"]),
            v=VectorField(grid, arrays["v"]),
            n=VectorField(grid, arrays["n"]),
            time=float(metadata["time"]),
        )
        delta, delta_prime = metadata["certificate"]
        progress = RunProgress(
            config=config,
            state=state,
            step=int(metadata["step"]),
            ledger=EstimateLedger.from_dict(metadata["ledger"]),
            dt_history=list(metadata["dt_history"]),
            reference_masses=tuple(metadata["reference_masses"]),
            rng_state=metadata["rng_state"],
            warnings=list(metadata["warnings"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"Checkpoint {path} is incomplete: {exc}") from exc
    coefficients = LeslieCoefficients(tuple(config.alpha), float(delta), float(delta_prime))
    return progress, coefficients


def _write_snapshot(progress: RunProgress, directory: Path) -> Path:
    return write_snapshot(
        snapshot_path(directory, progress.step),
        progress.state.named_fields(),
        progress.state.time,
    )


def drive(
    progress: RunProgress,
    coefficients: LeslieCoefficients,
    output_dir: Path,
    max_steps: int | None = None,
) -> RunResult:
    """Advance ``progress`` to the configured end time (or by ``max_steps`` steps)."""

    config = progress.config
    diagnostics_path = output_dir / DIAGNOSTICS_NAME
    manifest_path = output_dir / MANIFEST_NAME
    checkpoint_path = output_dir / CHECKPOINT_NAME
    snapshot_dir = output_dir / SNAPSHOT_DIRECTORY
    snapshots: list[Path] = []
    target = config.steps if max_steps is None else min(config.steps, progress.step + max_steps)
    if progress.step == 0 and config.output_every:
        snapshots.append(_write_snapshot(progress, snapshot_dir))

    while progress.step < target:
        before = progress.state
        after, report, halvings = advance_with_halving(before, config)
        progress.step += 1
        after = replace(after, time=progress.step * config.dt)
        if halvings:
            progress.dt_history.append(
                {"step": progress.step, "halvings": halvings, "dt": config.dt / 2**halvings}
            )
        budget = energy_budget(
            before, after, config.dt, config.alpha, config.epsilon, config.barrier_lambda
        )
        energy = replace(
            total_energy(after, config.epsilon, config.barrier_lambda),
            dissipation_rate=budget.dissipated / config.dt,
            budget_residual=budget.residual,
        )
        monitors = monitor_row(
            after,
            config.c_bar,
            config.barrier_lambda,
            config.grad_phi_exponent,
            report,
            progress.reference_masses,
            step=progress.step,
        )
        progress.state = after
        progress.ledger.update(
            after,
            config.dt,
            config.c_bar,
            config.barrier_lambda,
            config.grad_phi_exponent,
            config.p0,
        )
        progress.rows.append(diagnostics_record(energy, monitors))

        at_output = config.output_every and progress.step % config.output_every == 0
        if at_output or progress.step == target:
            write_diagnostics(progress.rows, diagnostics_path)
            logger.info(
                "step %d t=%.6g E=%.10e residual=%.3e poisson_iters=%d",
                progress.step,
                after.time,
                energy.total,
                budget.residual,
                report.iterations,
            )
        if at_output:
            snapshots.append(_write_snapshot(progress, snapshot_dir))
        if config.checkpoint_every and progress.step % config.checkpoint_every == 0:
            save_checkpoint(progress, coefficients, checkpoint_path)

    write_diagnostics(progress.rows, diagnostics_path)
    save_checkpoint(progress, coefficients, checkpoint_path)
    write_manifest(progress, coefficients, manifest_path)
    return RunResult(
        state=progress.state,
        steps=progress.step,
        diagnostics_path=diagnostics_path,
        manifest_path=manifest_path,
        snapshot_paths=tuple(snapshots),
        checkpoint_path=checkpoint_path,
        dt_history=tuple(progress.dt_history),
    )


def run(config: SimConfig, output_dir: Path, max_steps: int | None = None) -> RunResult:
    progress, coefficients = start_run(config)
    logger.info(
        "Starting %s run: N=%d dim=%d dt=%g steps=%d barrier substeps=%d",
        config.preset,
        config.points_per_axis,
        config.dim,
        config.dt,
        config.steps,
        barrier_substeps(config.dt, config.barrier_lambda),
    )
    return drive(progress, coefficients, output_dir, max_steps)


def resume(
    checkpoint: Path, output_dir: Path | None = None, max_steps: int | None = None
) -> RunResult:
    """Continue from a checkpoint; diagnostics rows past the checkpoint step are dropped."""

    progress, coefficients = load_checkpoint(checkpoint)
    output_dir = output_dir or checkpoint.parent
    diagnostics_path = output_dir / DIAGNOSTICS_NAME
    if diagnostics_path.exists():
        frame = read_diagnostics(diagnostics_path)
        frame = frame[frame["step"] <= progress.step]
        progress.rows = frame.to_dict(orient="records")
    else:
        logger.warning(
            "No diagnostics at %s; rows before step %d are lost", diagnostics_path, progress.step
        )
    logger.info("Resuming at step %d (t=%.6g)", progress.step, progress.state.time)
    return drive(progress, coefficients, output_dir, max_steps)
