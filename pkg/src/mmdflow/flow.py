"""Wasserstein gradient flows of the distance-kernel MMD, computed in quantile space.

Three routes: the closed-form flow toward a Dirac target, an explicit subgradient scheme
on a midpoint grid with isotonic projection, and the minimizing-movement (JKO) step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .energy import f_nu, f_nu_subgrad_minnorm
from .measure import (Measure1D, MeasureError, QuantileFn, cdf_eval, cdf_left, midpoints,
                      pushforward_from_quantile)
from .numerics import ConvergenceError, isotonic_project

__all__ = [
    "FlowTrajectory", "closed_form_flow_to_dirac", "closed_form_trajectory",
    "subgradient_flow", "jko_step", "jko_flow", "jko_residual", "grid_to_quantile_fn",
    "flow_to_measure", "is_monotone",
]

DECODE_REL_TOL = 1e-9


@dataclass
class FlowTrajectory:
    """Time-stamped flow states with the functional value recorded at each state.

    ``states`` hold grids (1-d arrays), :class:`QuantileFn` snapshots, or parameter
    vectors for the restricted flows.
    """

    times: list[float] = field(default_factory=list)
    states: list[Any] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t: float, state, energy: float) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"time {t} does not increase past {self.times[-1]}")
        self.times.append(float(t))
        self.states.append(state)
        self.energies.append(float(energy))

    def __len__(self) -> int:
        return len(self.times)

    def max_energy_increase(self) -> float:
        e = np.asarray(self.energies)
        return float(np.max(np.diff(e), initial=0.0)) if e.size > 1 else 0.0

    def state_at(self, t: float, atol: float = 1e-9):
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > atol:
            raise KeyError(f"no recorded state at t={t}")
        return self.states[i]


def is_monotone(f, tol: float = 0.0) -> bool:
    return bool(np.all(np.diff(np.asarray(f, dtype=float)) >= -tol))


# --- closed form ------------------------------------------------------------------------

def _clip_affine(s0, s1, a0, a1, q, upper: bool):
    """Split the affine piece ``(s0, s1, a0 -> a1)`` where it meets ``q`` and clip it
    from above (``upper``) or below by ``q``."""
    over = (lambda v: v > q) if upper else (lambda v: v < q)
    if not over(a0) and not over(a1):
        return [(s0, s1, a0, a1)]
    if over(a0) and over(a1):
        return [(s0, s1, q, q)]
    sc = s0 + (q - a0) * (s1 - s0) / (a1 - a0)
    if over(a1):
        pieces = [(s0, sc, a0, q), (sc, s1, q, q)]
    else:
        pieces = [(s0, sc, q, q), (sc, s1, q, a1)]
    return [p for p in pieces if p[1] > p[0]]


def _split_at(s0, s1, v0, v1, q):
    """Split an increasing affine segment where it crosses ``q``."""
    if v0 < q < v1:
        sc = s0 + (q - v0) * (s1 - s0) / (v1 - v0)
        if s0 < sc < s1:
            return [(s0, sc, v0, q), (sc, s1, q, v1)]
    return [(s0, s1, v0, v1)]


def closed_form_flow_to_dirac(q0: QuantileFn, q: float, t: float) -> QuantileFn:
    """Exact quantile function at time ``t`` of the flow of ``mmd_sq(., delta_q)``.

    Values below ``q`` rise at speed ``2s`` and stop at ``q``; values above fall at
    speed ``2 - 2s`` and stop at ``q``. Each segment of ``q0`` is split where it
    crosses ``q`` and where the moving part reaches ``q``, so the result stays exact.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t == 0:
        return q0
    out = []
    for s0, s1, v0, v1 in q0.segments:
        for p0, p1, w0, w1 in _split_at(s0, s1, v0, v1, q):
            # classify by the midpoint: a crossing that rounds onto an end is not split
            mid = 0.5 * (w0 + w1)
            if mid < q:
                out += _clip_affine(p0, p1, w0 + 2 * p0 * t, w1 + 2 * p1 * t, q, upper=True)
            elif mid > q:
                out += _clip_affine(p0, p1, w0 + 2 * p0 * t - 2 * t, w1 + 2 * p1 * t - 2 * t, q,
                                    upper=False)
            else:
                out.append((p0, p1, q, q))
    # clipping at q can leave pieces a hair below their left neighbour
    fixed = []
    for p0, p1, w0, w1 in out:
        if fixed and w0 < fixed[-1][3]:
            w0 = min(fixed[-1][3], w1)
        fixed.append((p0, p1, w0, w1))
    return QuantileFn.from_segments(fixed)


def closed_form_trajectory(q0: QuantileFn, q: float, times, nu: Measure1D | None = None
                           ) -> FlowTrajectory:
    """Closed-form snapshots at ``times`` with the functional recorded at each."""
    from .measure import dirac

    nu = dirac(q) if nu is None else nu
    traj = FlowTrajectory(meta={"method": "closed-form", "target": q})
    for t in times:
        g = closed_form_flow_to_dirac(q0, q, t)
        traj.append(t, g, f_nu(g, nu))
    return traj


# --- explicit subgradient scheme ------------------------------------------------------

def _project(f: np.ndarray) -> np.ndarray:
    return f if is_monotone(f) else isotonic_project(f)


def _snap_to_atoms(f: np.ndarray, nu: Measure1D, rel_tol: float = 1e-12) -> np.ndarray:
    """Round-off from averaging leaves nodes a few ulps off a target atom, where the
    subgradient is discontinuous; put them back on the atom."""
    if not nu.atoms:
        return f
    tol = rel_tol * max(1.0, float(np.max(np.abs(f))))
    for x, _ in nu.atoms:
        f[np.abs(f - x) <= tol] = x
    return f


def subgradient_flow(f0, nu: Measure1D, tau: float, steps: int, record_every: int = 1
                     ) -> FlowTrajectory:
    """Explicit Euler on the minimal-norm subgradient followed by isotonic projection.

    Records ``t = 0``, every ``record_every``-th step and the last step. The largest
    one-step energy increase over all steps (not only recorded ones) is stored in
    ``meta["max_step_increase"]``, its step index in ``meta["worst_step"]`` and its
    ratio to ``tau**2`` in ``meta["c_measured"]``. Nodes overshooting an atom of ``nu``
    make single steps rise; the rise is bounded by ``4 tau`` since ``|h| <= 2``.
    """
    f = np.array(f0, dtype=float)
    if tau <= 0:
        raise ValueError("tau must be positive")
    if steps < 0 or record_every < 1:
        raise ValueError("steps must be >= 0 and record_every >= 1")
    if not is_monotone(f):
        raise MeasureError("initial grid must be nondecreasing")
    energy = f_nu(f, nu)
    traj = FlowTrajectory(meta={"method": "subgradient", "tau": tau, "n": f.size})
    traj.append(0.0, f.copy(), energy)
    worst, worst_step = 0.0, 0
    for k in range(1, steps + 1):
        f = _snap_to_atoms(_project(f - tau * f_nu_subgrad_minnorm(f, nu)), nu)
        new = f_nu(f, nu)
        if new - energy > worst:
            worst, worst_step = new - energy, k
        energy = new
        if k % record_every == 0 or k == steps:
            traj.append(k * tau, f.copy(), energy)
    traj.meta["max_step_increase"] = worst
    traj.meta["worst_step"] = worst_step
    traj.meta["c_measured"] = worst / tau**2
    return traj


# --- minimizing movement --------------------------------------------------------------

def _cdf_pieces(nu: Measure1D):
    knots = nu.knots()
    r_right = np.atleast_1d(cdf_eval(nu, knots))
    r_left = np.atleast_1d(cdf_left(nu, knots))
    slope = np.zeros_like(knots)
    if knots.size > 1:
        slope[:-1] = (r_left[1:] - r_right[:-1]) / np.diff(knots)
    return knots, r_left, r_right, slope


def jko_residual(g, f, nu: Measure1D, tau: float) -> float:
    """Grid L2 norm of the minimal-norm element of ``(g - f)/tau + subdiff F(g)``."""
    g = np.asarray(g, dtype=float)
    s = midpoints(g.size)
    base = (g - np.asarray(f, dtype=float)) / tau
    lo = base + 2.0 * (np.atleast_1d(cdf_left(nu, g)) - s)
    hi = base + 2.0 * (np.atleast_1d(cdf_eval(nu, g)) - s)
    r = np.clip(0.0, lo, hi)
    return float(np.sqrt(np.mean(r * r)))


def jko_step(f, nu: Measure1D, tau: float, tol: float = 1e-8) -> np.ndarray:
    """Minimizer over nondecreasing grids of ``F(g) + ||g - f||^2 / (2 tau)``.

    On the midpoint grid the functional separates across nodes, and each node solves the
    scalar inclusion ``g + 2 tau R(g) ∋ f + 2 tau s``. The map is inverted exactly on the
    piecewise-linear CDF (jumps of ``R`` pin ``g`` to the atom). The result is certified
    by the first-order residual; :class:`ConvergenceError` is raised above ``tol``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    f = np.asarray(f, dtype=float)
    if not is_monotone(f):
        raise MeasureError("jko_step expects a nondecreasing grid")
    s = midpoints(f.size)
    c = f + 2.0 * tau * s
    knots, r_left, r_right, slope = _cdf_pieces(nu)
    phi_left = knots + 2.0 * tau * r_left
    phi_right = knots + 2.0 * tau * r_right
    j = np.searchsorted(phi_left, c, side="right") - 1
    jj = np.clip(j, 0, knots.size - 1)
    inside = c - phi_right[jj]
    g = np.where(j < 0, c,
                 np.where(inside <= 0.0, knots[jj],
                          knots[jj] + inside / (1.0 + 2.0 * tau * slope[jj])))
    g = _project(g)
    res = jko_residual(g, f, nu, tau)
    scale = max(1.0, float(np.max(np.abs(f))) / tau)
    if not res <= tol * scale:
        raise ConvergenceError(f"JKO step residual {res:.3e} above {tol:.1e}", res)
    return g


def jko_flow(f0, nu: Measure1D, tau: float, steps: int, record_every: int = 1) -> FlowTrajectory:
    """Iterated minimizing movement with step ``tau``."""
    f = np.array(f0, dtype=float)
    traj = FlowTrajectory(meta={"method": "jko", "tau": tau, "n": f.size})
    traj.append(0.0, f.copy(), f_nu(f, nu))
    for k in range(1, steps + 1):
        f = jko_step(f, nu, tau)
        if k % record_every == 0 or k == steps:
            traj.append(k * tau, f.copy(), f_nu(f, nu))
    return traj


# --- decoding -------------------------------------------------------------------------

def grid_to_quantile_fn(values, rel_tol: float = DECODE_REL_TOL) -> QuantileFn:
    """Piecewise-linear interpolation of midpoint samples, constant on the end half-cells.

    Consecutive values within ``rel_tol * range`` form one flat run (snapped to the run
    mean) so that runs decode to atoms.
    """
    v = np.array(values, dtype=float)
    n = v.size
    if n < 1:
        raise ValueError("empty grid")
    tol = rel_tol * float(np.ptp(v))
    run = np.concatenate([[0], np.cumsum(np.diff(v) > tol)])
    starts = np.flatnonzero(np.concatenate([[True], np.diff(run) > 0]))
    means = np.add.reduceat(v, starts) / np.diff(np.append(starts, n))
    exact = np.maximum.reduceat(v, starts) == np.minimum.reduceat(v, starts)
    v = np.where(exact, v[starts], means)[run]
    s = midpoints(n)
    segs = [(0.0, s[0], v[0], v[0])]
    segs += [(s[i], s[i + 1], v[i], v[i + 1]) for i in range(n - 1)]
    segs.append((s[-1], 1.0, v[-1], v[-1]))
    # merge neighbouring flat pieces at the same value
    merged = [list(segs[0])]
    for seg in segs[1:]:
        last = merged[-1]
        if last[2] == last[3] == seg[2] == seg[3]:
            last[1] = seg[1]
        else:
            merged.append(list(seg))
    return QuantileFn.from_segments(merged)


def flow_to_measure(traj: FlowTrajectory, index: int, rel_tol: float = DECODE_REL_TOL) -> Measure1D:
    """Decode a snapshot into the measure it pushes Lebesgue measure on (0, 1) to."""
    state = traj.states[index]
    if isinstance(state, QuantileFn):
        return pushforward_from_quantile(state)
    q = grid_to_quantile_fn(state, rel_tol)
    return pushforward_from_quantile(q)
