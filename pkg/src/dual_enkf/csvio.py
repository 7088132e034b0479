"""Deterministic CSV and JSON emission for experiment artifacts.

Floats are written with 17 significant digits so re-runs are byte-identical
and values round-trip exactly through text.
"""

from __future__ import annotations

import json
import os

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) or isinstance(value, np.floating):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows) -> str:
    """Write rows of mixed scalars; returns the path for manifest bookkeeping."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return os.fspath(path)


def matrix_columns(prefix: str, rows: int, cols: int) -> list[str]:
    # digits concatenate only while unambiguous (indices 0..9)
    if rows <= 10 and cols <= 10:
        return [f"{prefix}_{i}{j}" for i in range(rows) for j in range(cols)]
    return [f"{prefix}_{i}_{j}" for i in range(rows) for j in range(cols)]


def write_schedule_csv(path, grid, matrices, k_offset: int = 0) -> str:
    """Columns (k, t, entries row-major) for a stack of matrices."""
    mats = np.asarray(matrices)
    d1, d2 = mats.shape[1], mats.shape[2]
    header = ["k", "t"] + matrix_columns("P", d1, d2)
    rows = (
        [k_offset + i, (k_offset + i) * grid.dt] + list(mats[i].ravel())
        for i in range(mats.shape[0])
    )
    return write_csv(path, header, rows)


def write_multi_schedule_csv(path, grid, seed_to_matrices, k_offset: int = 0) -> str:
    """Same as write_schedule_csv with a leading seed column, one block per seed."""
    first = next(iter(seed_to_matrices.values()))
    d1, d2 = first.shape[1], first.shape[2]
    header = ["seed", "k", "t"] + matrix_columns("P", d1, d2)

    def rows():
        for seed in sorted(seed_to_matrices):
            mats = np.asarray(seed_to_matrices[seed])
            for i in range(mats.shape[0]):
                yield [seed, k_offset + i, (k_offset + i) * grid.dt] + list(mats[i].ravel())

    return write_csv(path, header, rows())


def write_trajectory_csv(path, trajectory) -> str:
    d = trajectory.states.shape[1]
    m = trajectory.controls.shape[1]
    header = (
        ["k", "t"]
        + [f"x_{i}" for i in range(d)]
        + [f"u_{i}" for i in range(m)]
        + ["cumulative_cost"]
    )
    grid = trajectory.grid
    dt = grid.dt
    rows = []
    for k in range(grid.num_steps + 1):
        x = trajectory.states[k]
        u = trajectory.controls[k] if k < grid.num_steps else np.zeros(m)
        cum = trajectory.cumulative_costs[k]
        rows.append([k, k * dt] + list(x) + list(u) + [cum])
    return write_csv(path, header, rows)


def write_pg_trace_csv(path, trace, error_rows) -> str:
    """Columns (iteration, elapsed_seconds, cost_estimate, error_gain, error_value)."""
    header = ["iteration", "elapsed_seconds", "cost_estimate", "error_gain", "error_value"]
    rows = []
    for rec, (eg, ev) in zip(trace.records, error_rows):
        rows.append([rec.iteration, rec.elapsed_seconds, rec.cost, eg, ev])
    return write_csv(path, header, rows)


def write_json(path, obj) -> str:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return os.fspath(path)


def offline_result_to_dict(result) -> dict:
    return {
        "T": result.grid.T,
        "dt": result.grid.dt,
        "P": np.asarray(result.P).tolist(),
        "S": np.asarray(result.S).tolist(),
        "jitter_events": result.jitter_events,
    }


def offline_result_from_dict(doc):
    from .enkf import OfflineResult
    from .model import TimeGrid

    grid = TimeGrid(T=doc["T"], dt=doc["dt"])
    return OfflineResult(
        grid=grid,
        P=np.asarray(doc["P"], dtype=float),
        S=np.asarray(doc["S"], dtype=float),
        jitter_events=int(doc["jitter_events"]),
    )
