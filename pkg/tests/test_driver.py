"""Tests for the outer time loop, checkpoints and run artifacts."""

import json

import numpy as np
import pandas as pd
import pytest

from nematic_electrolyte import driver
from nematic_electrolyte.config import ConfigError, SimConfig
from nematic_electrolyte.diagnostics import DIAGNOSTICS_COLUMNS, check_diagnostics
from nematic_electrolyte.driver import (
    CHECKPOINT_NAME,
    MAX_HALVINGS,
    CheckpointError,
    advance_with_halving,
    load_checkpoint,
    read_diagnostics,
    resume,
    run,
    write_diagnostics,
)
from nematic_electrolyte.flow import CoefficientGateError
from nematic_electrolyte.presets import init_state
from nematic_electrolyte.snapshots import read_snapshot
from nematic_electrolyte.state import FIELD_NAMES, StepRejected


def quick_config(**changes):
    values = {
        "points_per_axis": 16,
        "dt": 1e-3,
        "t_end": 6e-3,
        "alpha": (0.0, 0.0, 1.0, 3.0, 0.0, 1.0),
        "certificate_samples": 1_000,
        "output_every": 2,
    }
    values.update(changes)
    return SimConfig(**values)


class TestRun:
    """End-to-end runs on a small grid."""

    def test_rest_is_an_equilibrium(self, tmp_path):
        config = quick_config(preset="rest", t_end=1e-2)
        initial = init_state(config)
        result = run(config, tmp_path)
        assert result.steps == 10
        for name in FIELD_NAMES:
            before = getattr(initial, name).physical
            after = getattr(result.state, name).physical
            np.testing.assert_allclose(after, before, atol=1e-12)
        frame = read_diagnostics(result.diagnostics_path)
        assert tuple(frame.columns) == DIAGNOSTICS_COLUMNS
        assert len(frame) == 11
        assert frame["budget_residual"].abs().max() < 1e-12
        assert frame["kinetic"].abs().max() < 1e-20

    def test_artifacts(self, tmp_path):
        result = run(quick_config(preset="charged-blob"), tmp_path)
        assert result.checkpoint_path.exists()
        assert [path.name for path in result.snapshot_paths] == [
            "snapshot_000000.bin",
            "snapshot_000002.bin",
            "snapshot_000004.bin",
            "snapshot_000006.bin",
        ]
        records = read_snapshot(result.snapshot_paths[-1])
        assert tuple(records) == FIELD_NAMES
        assert records["c_p"].time == pytest.approx(6e-3)
        manifest = json.loads(result.manifest_path.read_text(encoding="utf-8"))
        assert manifest["certificate"]["delta"] == 0.25
        assert manifest["barrier_substeps"] == 14
        assert manifest["steps_completed"] == 6
        assert manifest["warnings"] == []
        assert manifest["config"]["preset"] == "charged-blob"

    def test_charged_blob_keeps_every_contract(self, tmp_path):
        result = run(quick_config(preset="charged-blob"), tmp_path)
        frame = read_diagnostics(result.diagnostics_path)
        assert check_diagnostics(frame, c_bar=2.0) == []
        for column in ("mass_p", "mass_m"):
            drift = (frame[column] - frame[column].iloc[0]).abs().max()
            assert drift <= 1e-12 * frame[column].iloc[0]

    def test_same_config_gives_identical_diagnostics(self, tmp_path):
        config = quick_config(preset="random-smooth", seed=11)
        first = run(config, tmp_path / "first").diagnostics_path.read_bytes()
        second = run(config, tmp_path / "second").diagnostics_path.read_bytes()
        assert first == second

    def test_reference_coefficients_record_warnings(self, tmp_path):
        config = quick_config(preset="rest", alpha=(0.0, 0.0, 1.0, 3.0, 0.0, 0.5), t_end=1e-3)
        result = run(config, tmp_path)
        manifest = json.loads(result.manifest_path.read_text(encoding="utf-8"))
        assert any("exchange power" in warning for warning in manifest["warnings"])

    def test_inadmissible_coefficients_stop_the_run(self, tmp_path):
        with pytest.raises(CoefficientGateError):
            run(quick_config(alpha=(1.0, 0.0, 1.0, 1.0, 0.0, 0.0)), tmp_path)
        assert not (tmp_path / "diagnostics.csv").exists()

    def test_initial_cfl_violation_is_a_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="CFL"):
            run(quick_config(preset="random-smooth", dt=1.0, t_end=1.0), tmp_path)


class TestHalving:
    """Step rejection and dt halving."""

    def test_rejected_step_is_retried(self, monkeypatch):
        config = quick_config(preset="rest")
        state = init_state(config)
        original = driver.step_species
        calls = []

        def flaky(current, dt, *args, **kwargs):
            calls.append(dt)
            if len(calls) == 1:
                raise StepRejected("forced rejection", 0.0)
            return original(current, dt, *args, **kwargs)

        monkeypatch.setattr(driver, "step_species", flaky)
        after, _, halvings = advance_with_halving(state, config)
        assert halvings == 1
        assert calls == [config.dt, config.dt / 2, config.dt / 2]
        assert after.time == pytest.approx(config.dt)

    def test_persistent_rejection_propagates(self, monkeypatch):
        config = quick_config(preset="rest")
        calls = []

        def always(current, dt, *args, **kwargs):
            calls.append(dt)
            raise StepRejected("forced rejection", 0.0)

        monkeypatch.setattr(driver, "step_species", always)
        with pytest.raises(StepRejected):
            advance_with_halving(init_state(config), config)
        assert len(calls) == MAX_HALVINGS + 1
        assert calls[-1] == config.dt / 2**MAX_HALVINGS


class TestCheckpoints:
    """Checkpoint round trips and bit-exact resume."""

    def test_resume_reproduces_the_uninterrupted_run(self, tmp_path):
        config = quick_config(preset="charged-blob")
        full = run(config, tmp_path / "full")
        partial_dir = tmp_path / "partial"
        partial = run(config, partial_dir, max_steps=3)
        assert partial.steps == 3
        resumed = resume(partial_dir / CHECKPOINT_NAME)
        assert resumed.steps == 6
        for name in FIELD_NAMES:
            np.testing.assert_array_equal(
                getattr(resumed.state, name).physical, getattr(full.state, name).physical
            )
        pd.testing.assert_frame_equal(
            read_diagnostics(resumed.diagnostics_path), read_diagnostics(full.diagnostics_path)
        )

    def test_load_restores_progress(self, tmp_path):
        config = quick_config(preset="charged-blob")
        run(config, tmp_path, max_steps=2)
        progress, coefficients = load_checkpoint(tmp_path / CHECKPOINT_NAME)
        assert progress.step == 2
        assert progress.config == config
        assert progress.state.time == pytest.approx(2e-3)
        assert coefficients.delta == 0.25

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError, match="does not exist"):
            load_checkpoint(tmp_path / CHECKPOINT_NAME)

    def test_corrupt_checkpoint(self, tmp_path):
        path = tmp_path / CHECKPOINT_NAME
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_diagnostics_floats_survive_the_csv(self, tmp_path):
        row = {column: 0.1 + 0.2 for column in DIAGNOSTICS_COLUMNS}
        row.update(step=3, poisson_iters=7)
        path = write_diagnostics([row], tmp_path / "diagnostics.csv")
        frame = read_diagnostics(path)
        assert frame["E"].iloc[0] == 0.1 + 0.2
        assert frame["step"].iloc[0] == 3
