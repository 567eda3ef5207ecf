"""CSV reading and writing for matrices, trajectories, and RN series.

Formats:

* matrix CSV: header ``j1,...,jn``, one row per source row i;
* state CSV: columns ``t,node,s,x,r``, one row per (time, node);
* rn CSV: columns ``t,i,j,value,kind``.

Floats are written with 17 significant digits, so a write/read round trip
is bit-exact.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import AccuracyReport, ThresholdReport
from .exceptions import ConfigError
from .model import EpidemicState

__all__ = [
    "write_matrix_csv",
    "read_matrix_csv",
    "write_states_csv",
    "read_states_csv",
    "write_rn_csv",
    "read_rn_csv",
    "write_accuracy_csv",
    "write_accuracy_summary_csv",
    "write_threshold_csvs",
]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _parse_float(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ConfigError(f"{where}: non-numeric cell {cell!r}") from None


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = matrix.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"j{j + 1}" for j in range(n)])
        for row in matrix:
            writer.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"matrix file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty matrix file") from None
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ConfigError(f"{path}:{lineno}: ragged row ({len(row)} cells, expected {width})")
            rows.append([_parse_float(cell, f"{path}:{lineno}") for cell in row])
    if not rows:
        raise ConfigError(f"{path}: matrix file has a header but no rows")
    return np.array(rows)


def write_states_csv(path, states: Sequence[EpidemicState]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "node", "s", "x", "r"])
        for state in states:
            for i in range(state.n):
                writer.writerow(
                    [_fmt(state.t), i, _fmt(state.s[i]), _fmt(state.x[i]), _fmt(state.r[i])]
                )


def read_states_csv(path) -> list[EpidemicState]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"state file not found: {path}")
    groups: dict[float, dict[int, tuple[float, float, float]]] = {}
    order: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "node", "s", "x", "r"]:
            raise ConfigError(f"{path}: expected header t,node,s,x,r, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ConfigError(f"{path}:{lineno}: ragged row")
            where = f"{path}:{lineno}"
            t = _parse_float(row[0], where)
            try:
                node = int(row[1])
            except ValueError:
                raise ConfigError(f"{where}: non-integer node index {row[1]!r}") from None
            fractions = tuple(_parse_float(cell, where) for cell in row[2:])
            for value in fractions:
                if not 0.0 <= value <= 1.0:
                    raise ConfigError(f"{where}: fraction {value} outside [0, 1]")
            if t not in groups:
                groups[t] = {}
                order.append(t)
            groups[t][node] = fractions
    if not groups:
        raise ConfigError(f"{path}: state file contains no rows")
    states = []
    for t in order:
        nodes = groups[t]
        n = len(nodes)
        if sorted(nodes) != list(range(n)):
            raise ConfigError(f"{path}: nodes at t={t} must be exactly 0..{n - 1}")
        s = np.array([nodes[i][0] for i in range(n)])
        x = np.array([nodes[i][1] for i in range(n)])
        r = np.array([nodes[i][2] for i in range(n)])
        states.append(EpidemicState(t=t, s=s, x=x, r=r))
    return states


def write_rn_csv(path, records: Iterable[tuple]) -> None:
    """Write (t, i, j, value, kind) records."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "j", "value", "kind"])
        for t, i, j, value, kind in records:
            writer.writerow([_fmt(t), i, j, _fmt(value), kind])


def read_rn_csv(path) -> list[tuple[float, int, int, float, str]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"rn file not found: {path}")
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "i", "j", "value", "kind"]:
            raise ConfigError(f"{path}: expected header t,i,j,value,kind, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ConfigError(f"{path}:{lineno}: ragged row")
            where = f"{path}:{lineno}"
            out.append(
                (
                    _parse_float(row[0], where),
                    int(row[1]),
                    int(row[2]),
                    _parse_float(row[3], where),
                    row[4],
                )
            )
    return out


def write_accuracy_csv(path, report: AccuracyReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "eps", "q", "r", "exact", "mean_private", "var_private", "rmse", "pct_error"]
        )
        for e in report.entries:
            writer.writerow(
                [
                    e.epoch,
                    _fmt(e.eps),
                    e.q,
                    e.r,
                    _fmt(e.exact),
                    _fmt(e.mean_private),
                    _fmt(e.var_private),
                    _fmt(e.rmse),
                    _fmt(e.pct_error),
                ]
            )


def write_accuracy_summary_csv(path, report: AccuracyReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "feasible", "rmse", "pct_error", "trials", "message"])
        for s in report.summaries:
            writer.writerow(
                [_fmt(s.eps), int(s.feasible), _fmt(s.rmse), _fmt(s.pct_error), s.trials, s.message]
            )


def write_threshold_csvs(node_path, cluster_path, report: ThresholdReport) -> None:
    def cell(value):
        return "" if value is None else _fmt(value)

    with open(node_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "first_crossing_t", "peak_t", "agreement_rate", "samples"])
        for row in report.nodes:
            writer.writerow(
                [row.node, cell(row.first_crossing_t), _fmt(row.peak_t), cell(row.agreement_rate), row.samples]
            )
    with open(cluster_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "first_crossing_t", "peak_t", "agreement_rate", "samples"])
        for row in report.clusters:
            writer.writerow(
                [row.cluster, cell(row.first_crossing_t), _fmt(row.peak_t), cell(row.agreement_rate), row.samples]
            )
