"""Figures of diagnostics histories."""

from __future__ import annotations

import importlib
import importlib.util
from pathlib import Path

import pandas as pd

PANELS = (
    ("Energy", ("E", "kinetic", "elastic", "potential", "electric")),
    ("Dissipation", ("dissipation",)),
    ("Budget residual", ("budget_residual",)),
    ("Species bounds", ("min_cp", "max_cp", "min_cm", "max_cm")),
    ("Potential monitors", ("phi_inf", "grad_phi_p")),
    ("Director and flow", ("sup_n", "lap_n_2", "v_2", "grad_v_2")),
)


def plotting_available() -> bool:
    return all(importlib.util.find_spec(name) is not None for name in ("matplotlib", "seaborn"))


def plot_diagnostics(frame: pd.DataFrame, output: Path) -> Path | None:
    """Render one panel per monitor group against time; None when plotting libraries are missing."""

    if not plotting_available():
        return None
    matplotlib = importlib.import_module("matplotlib")
    matplotlib.use("Agg")
    plt = importlib.import_module("matplotlib.pyplot")
    sns = importlib.import_module("seaborn")
    sns.set_theme(style="whitegrid")

    figure, axes = plt.subplots(len(PANELS) // 2, 2, figsize=(12, 10), sharex=True)
    for axis, (title, columns) in zip(axes.flat, PANELS):
        long = frame.melt(id_vars="time", value_vars=list(columns), var_name="monitor")
        sns.lineplot(data=long, x="time", y="value", hue="monitor", ax=axis)
        axis.set_title(title)
    figure.tight_layout()
    output.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(output, dpi=120)
    plt.close(figure)
    return output
