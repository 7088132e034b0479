"""Figure renderers for the solver's CSV artifacts.

Each renderer validates the CSV schema it consumes, draws one figure, and
returns the plotted series so callers (and tests) can inspect exactly what
went into the image.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("convergence", "poles", "mse_scaling", "compare", "trajectories")


class SchemaError(ValueError):
    """A CSV input is empty or missing required columns."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    log_x: bool | None = None
    log_y: bool | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; have {KINDS}")
        self.inputs = [os.fspath(p) for p in self.inputs]


def read_columns(path, required=()):
    """Load a CSV as {column: array}; strings stay strings, numbers float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty CSV") from None
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    columns = {}
    for i, name in enumerate(header):
        values = [row[i] for row in rows]
        try:
            columns[name] = np.array([float(v) for v in values])
        except ValueError:
            columns[name] = np.array(values)
    return columns


def _matrix_entry_columns(columns):
    return [name for name in columns if name.startswith("P_")]


def render_convergence(spec: FigureSpec):
    """Estimated matrix entries against the reference flow, plotted vs T - t."""
    enkf = read_columns(spec.inputs[0], required=("k", "t"))
    entries = _matrix_entry_columns(enkf)
    if not entries:
        raise SchemaError(f"{spec.inputs[0]}: no matrix entry columns")
    dre = read_columns(spec.inputs[1], required=("k", "t")) if len(spec.inputs) > 1 else None
    are = read_columns(spec.inputs[2]) if len(spec.inputs) > 2 else None

    T = float(enkf["t"].max())
    fig, ax = plt.subplots(figsize=(7, 5))
    series = {}
    seeds = np.unique(enkf["seed"]).astype(int) if "seed" in enkf else [None]
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for idx, name in enumerate(entries):
        color = cycle[idx % len(cycle)]
        for seed in seeds:
            mask = np.ones(len(enkf["t"]), dtype=bool) if seed is None else enkf["seed"] == seed
            x = T - enkf["t"][mask]
            y = enkf[name][mask]
            order = np.argsort(x)
            label = name if seed == seeds[0] else None
            ax.plot(x[order], y[order], color=color, alpha=0.6, lw=0.9, label=label)
        series[name] = enkf[name]
        if dre is not None and name in dre:
            x = T - dre["t"]
            order = np.argsort(x)
            ax.plot(x[order], dre[name][order], color="black", ls="--", lw=1.0)
            series[f"dre:{name}"] = dre[name]
        if are is not None and name in are:
            ax.axhline(are[name][0], color=color, ls=":", lw=0.8)
            series[f"are:{name}"] = are[name]
    ax.set_xlabel("T - t")
    ax.set_ylabel("matrix entries")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"series": series, "entries": entries}


def render_poles(spec: FigureSpec):
    cols = read_columns(spec.inputs[0], required=("re", "im", "loop_type"))
    fig, ax = plt.subplots(figsize=(6, 5))
    series = {}
    for loop, marker, color in (("open", "x", "tab:red"), ("closed", "o", "tab:blue")):
        mask = cols["loop_type"] == loop
        style = (
            {"color": color}
            if marker == "x"
            else {"facecolors": "none", "edgecolors": color}
        )
        ax.scatter(cols["re"][mask], cols["im"][mask], marker=marker, label=loop, **style)
        series[loop] = np.column_stack([cols["re"][mask], cols["im"][mask]])
    ax.axvline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"series": series}


def fitted_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


def render_mse_scaling(spec: FigureSpec):
    cols = read_columns(spec.inputs[0], required=("N", "mean_mse"))
    slope = fitted_slope(cols["N"], cols["mean_mse"])
    fig, ax = plt.subplots(figsize=(6, 5))
    if "stderr_mse" in cols:
        ax.errorbar(cols["N"], cols["mean_mse"], yerr=cols["stderr_mse"], fmt="o-")
    else:
        ax.plot(cols["N"], cols["mean_mse"], "o-")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("particles N")
    ax.set_ylabel("relative MSE")
    ax.annotate(f"slope = {slope:.3f}", xy=(0.05, 0.08), xycoords="axes fraction")
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"slope": slope, "series": {"N": cols["N"], "mean_mse": cols["mean_mse"]}}


def render_compare(spec: FigureSpec):
    cols = read_columns(
        spec.inputs[0], required=("method", "knob_value", "elapsed_seconds", "error_gain")
    )
    methods = sorted(set(cols["method"]))
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    series = {}
    for method in methods:
        mask = cols["method"] == method
        x = cols["elapsed_seconds"][mask]
        for ax, metric in zip(axes, ("error_gain", "error_value")):
            if metric not in cols:
                continue
            y = cols[metric][mask]
            good = np.isfinite(y) & (y > 0)
            ax.plot(x[good], y[good], "o-", label=method)
        series[method] = np.column_stack([x, cols["error_gain"][mask]])
    for ax, metric in zip(axes, ("error_gain", "error_value")):
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("compute time [s]")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"series": series, "methods": methods}


def render_trajectories(spec: FigureSpec):
    loaded = []
    state_cols = None
    for path in spec.inputs:
        cols = read_columns(path, required=("k", "t"))
        states = [c for c in cols if c.startswith("x_")]
        if not states:
            raise SchemaError(f"{path}: no state columns")
        if state_cols is None:
            state_cols = states
        label = os.path.splitext(os.path.basename(path))[0].replace("traj_", "")
        loaded.append((label, cols))
    n = len(state_cols)
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), sharex=True)
    if n == 1:
        axes = [axes]
    series = {}
    for label, cols in loaded:
        for ax, name in zip(axes, state_cols):
            ax.plot(cols["t"], cols[name], lw=1.0, label=label)
            ax.set_ylabel(name)
        series[label] = np.column_stack([cols[name] for name in state_cols])
    axes[-1].set_xlabel("t")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"series": series, "labels": [label for label, _ in loaded]}


_RENDERERS = {
    "convergence": render_convergence,
    "poles": render_poles,
    "mse_scaling": render_mse_scaling,
    "compare": render_compare,
    "trajectories": render_trajectories,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns the plotted series and kind-specific meta."""
    meta = _RENDERERS[spec.kind](spec)
    meta["output"] = spec.output
    return meta
