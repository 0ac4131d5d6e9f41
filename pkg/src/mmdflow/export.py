"""Deterministic CSV/JSON writers. Files are written to a temp name and renamed."""
from __future__ import annotations

import hashlib
import os
import tempfile

import numpy as np

from .flow import FlowTrajectory
from .measure import Measure1D, QuantileFn, dump_measure, sample_quantile_grid


def fmt(x: float) -> str:
    """Fixed 12 significant digits, as used in every CSV."""
    return f"{float(x):.12g}"


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def measure_hash(mu: Measure1D) -> str:
    return hashlib.sha256(dump_measure(mu).encode()).hexdigest()


def _grid_state(state, n: int | None):
    if isinstance(state, QuantileFn):
        return sample_quantile_grid(state, n or 200)
    return np.atleast_1d(np.asarray(state, dtype=float))


def trajectory_csv(traj: FlowTrajectory, nu: Measure1D, columns: list[str] | None = None,
                   n: int | None = None, tau: float | None = None) -> str:
    """Rows ``t, state...`` under a ``#`` line carrying grid size, step and target hash."""
    rows = [_grid_state(s, n) for s in traj.states]
    width = rows[0].size if rows else 0
    if columns is None:
        columns = [f"s_{i}" for i in range(width)]
    tau = traj.meta.get("tau", traj.meta.get("h")) if tau is None else tau
    head = f"# n={width},tau={fmt(tau) if tau is not None else 'na'},nu_sha256={measure_hash(nu)}"
    lines = [head, ",".join(["t"] + columns)]
    for t, r in zip(traj.times, rows):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in r]))
    return "\n".join(lines) + "\n"


def energy_csv(traj: FlowTrajectory) -> str:
    lines = ["t,F_nu"] + [f"{fmt(t)},{fmt(e)}" for t, e in zip(traj.times, traj.energies)]
    return "\n".join(lines) + "\n"


def landscape_csv(ms, ss, F) -> str:
    """Matrix with ``m`` coordinates in the header row and ``sigma`` in the first column."""
    lines = [",".join(["sigma\\m"] + [fmt(m) for m in ms])]
    for s, row in zip(ss, F):
        lines.append(",".join([fmt(s)] + [fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def pieces_csv(snapshots: list[tuple[float, Measure1D]]) -> str:
    """One row per atom or constant-density piece at every snapshot time."""
    lines = ["t,kind,left,right,mass,density"]
    for t, mu in snapshots:
        for x, w in mu.atoms:
            lines.append(f"{fmt(t)},atom,{fmt(x)},{fmt(x)},{fmt(w)},inf")
        for a, b, w in mu.density_pieces():
            lines.append(f"{fmt(t)},uniform,{fmt(a)},{fmt(b)},{fmt(w)},{fmt(w / (b - a))}")
    return "\n".join(lines) + "\n"
