"""Flows restricted to Dirac measures (S1) and to the location-scale uniform family (S2).

``mu_{m, sigma}`` is the uniform measure with mean ``m`` and standard deviation ``sigma``,
i.e. ``1/(2 sqrt(3) sigma) * lambda`` on ``[m - sqrt(3) sigma, m + sqrt(3) sigma]``. Its
quantile function is ``m + 2 sqrt(3) sigma (s - 1/2)``, so ``(m, sigma)`` are isometric
coordinates for W_2 on the family.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .energy import (DISTANCE, Kernel, expected_distance, get_kernel, interaction_energy,
                     kernel_potential_grad, mmd_sq)
from .flow import FlowTrajectory
from .measure import Measure1D, QuantileFn, cdf_eval, cdf_left, dirac, empirical
from .numerics import IntegrationError, central_gradient, locate_event, rk4_step

__all__ = [
    "UniformParam", "f1_potential", "f1_subgrad_minnorm", "s1_flow", "f2_energy",
    "f2_closed_form", "f2_gradient", "s2_flow", "landscape_grid", "particle_flow_smooth",
    "particle_velocity",
]

SQRT3 = math.sqrt(3.0)
ENERGY_TOL = 1e-10
MAX_HALVINGS = 40
FD_STEP = 1e-6


@dataclass(frozen=True)
class UniformParam:
    m: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.m) and math.isfinite(self.sigma)):
            raise ValueError("non-finite parameters")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def half_width(self) -> float:
        return SQRT3 * self.sigma

    def measure(self) -> Measure1D:
        if self.m - self.half_width == self.m + self.half_width:
            return dirac(self.m)
        return Measure1D(uniforms=((self.m - self.half_width, self.m + self.half_width, 1.0),))

    def quantile_fn(self) -> QuantileFn:
        return QuantileFn.from_segments(
            [(0.0, 1.0, self.m - self.half_width, self.m + self.half_width)])


def _dirac_target(nu: Measure1D) -> float | None:
    if not nu.uniforms and len(nu.atoms) == 1:
        return nu.atoms[0][0]
    return None


# --- S1 ---------------------------------------------------------------------------------

def f1_potential(x, nu: Measure1D):
    """``int |x - y| d nu(y) - 1/2 int int |y - z| d nu d nu``, the distance MMD of ``delta_x``."""
    return expected_distance(nu, x) + interaction_energy(nu, DISTANCE)


def f1_subgrad_minnorm(x, nu: Measure1D, k: Kernel | str = DISTANCE):
    """Minimal-norm derivative of the S1 energy.

    For the distance kernel the subdifferential is ``[2 R(x-) - 1, 2 R(x) - 1]``; for the
    smooth kernel the derivative is ``-int d/dx K(x, y) d nu(y)``.
    """
    k = get_kernel(k)
    if k.smooth:
        return -kernel_potential_grad(k, nu, x)
    lo = 2.0 * cdf_left(nu, x) - 1.0
    hi = 2.0 * cdf_eval(nu, x) - 1.0
    return np.clip(0.0, lo, hi)


def s1_flow(x0: float, nu: Measure1D, t_end: float, h: float, k: Kernel | str = DISTANCE,
            record_every: int = 1) -> FlowTrajectory:
    """Integrate ``x' = -dF(x)`` on S1 with RK4 and the minimal-norm selection.

    For the distance kernel the velocity jumps at atoms and uniform-piece endpoints of
    ``nu``. A step that would pass such a knot is shortened (bisection on the step length)
    so that it ends exactly on it; at the median set the minimal-norm velocity vanishes,
    so Dirac targets are reached in finite time and then held.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    k = get_kernel(k)

    def field(_t, x):
        return -f1_subgrad_minnorm(x, nu, k)

    def energy(x):
        if k.smooth:
            return mmd_sq(dirac(x), nu, k)
        return float(f1_potential(x, nu))

    knots = np.empty(0) if k.smooth else nu.knots()
    traj = FlowTrajectory(meta={"family": "s1", "kernel": k.name, "h": h, "knot_events": 0,
                                "rejected": 0})
    x, t, step = float(x0), 0.0, 0
    e = energy(x)
    traj.append(0.0, np.array([x]), e)
    while t < t_end - 1e-12:
        dt = min(h, t_end - t)
        for _ in range(MAX_HALVINGS + 1):
            new, dt_used, event = _s1_step(field, x, t, dt, nu, knots)
            e_new = energy(new)
            if e_new <= e + ENERGY_TOL:
                break
            # RK4 unstable on a steep cell: retry with half the step
            traj.meta["rejected"] += 1
            dt *= 0.5
        else:
            raise IntegrationError(f"energy increase persists after {MAX_HALVINGS} halvings "
                                   f"at t={t}")
        traj.meta["knot_events"] += event
        x, e, t = float(new), e_new, t + dt_used
        step += 1
        if step % record_every == 0 or t >= t_end - 1e-12:
            traj.append(t, np.array([x]), e)
    return traj


def _s1_step(field, x, t, dt, nu, knots):
    """One RK4 step on S1; with knots the step ends on the first knot it would cross."""
    if not knots.size:
        return rk4_step(field, t, x, dt), dt, 0
    cell_field, edge = _s1_cell(x, nu, knots, field(t, x))
    if cell_field is None:
        return x, dt, 0
    new = rk4_step(cell_field, t, x, dt)
    if edge is not None and (new - edge) * (x - edge) <= 0 and new != x:
        frac = locate_event(
            lambda th: (rk4_step(cell_field, t, x, th * dt) if th > 0 else x) - edge,
            0.0, 1.0, 1e-12)
        return edge, frac * dt, 1
    return new, dt, 0


def _s1_cell(x, nu, knots, v0):
    """Affine extension of the distance-kernel S1 velocity on the cell ``x`` moves into,
    and the knot bounding that cell in the direction of motion."""
    if v0 == 0:
        return None, None
    if v0 > 0:
        j = np.searchsorted(knots, x, side="right") - 1  # cell [knots[j], knots[j+1])
    else:
        j = np.searchsorted(knots, x, side="left") - 1  # cell (knots[j], knots[j+1]]
    if j < 0:
        base, slope, left = 0.0, 0.0, x
    else:
        left = knots[j]
        base = float(cdf_eval(nu, left))
        if j + 1 < knots.size:
            slope = (float(cdf_left(nu, knots[j + 1])) - base) / (knots[j + 1] - left)
        else:
            slope = 0.0
    edge = None
    if v0 > 0 and j + 1 < knots.size:
        edge = float(knots[j + 1])
    elif v0 < 0 and j >= 0:
        edge = float(knots[j])

    def cell_field(_t, u):
        return -(2.0 * (base + slope * (u - left)) - 1.0)

    return cell_field, edge


# --- S2 ---------------------------------------------------------------------------------

def f2_closed_form(m, sigma, q: float = 0.0, variant: str = "corrected"):
    """Distance-kernel ``F(m, sigma)`` for ``nu = delta_q`` in closed form.

    ``variant="printed"`` uses the alternative inner-case denominator ``2 sqrt(3) sigma**2``;
    it is kept only to show that it disagrees with direct integration.
    """
    m = np.asarray(m, dtype=float) - q
    sigma = np.asarray(sigma, dtype=float)
    outer = np.abs(m) >= SQRT3 * sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        if variant == "corrected":
            inner = (m**2 + 3 * sigma**2) / (2 * SQRT3 * sigma)
        elif variant == "printed":
            inner = (m**2 + 3 * sigma**2) / (2 * SQRT3 * sigma**2)
        else:
            raise ValueError(f"unknown variant {variant!r}")
        out = -sigma / SQRT3 + np.where(outer, np.abs(m), inner)
    return float(out) if out.ndim == 0 else out


def f2_energy(p: UniformParam, nu: Measure1D, k: Kernel | str = DISTANCE) -> float:
    """``mmd_sq(mu_{m, sigma}, nu)`` by exact piecewise integration."""
    return mmd_sq(p.measure(), nu, get_kernel(k))


def _f2_extended(k: Kernel, nu: Measure1D) -> Callable[[np.ndarray], float]:
    # mu_{m, -sigma} = mu_{m, sigma}: even extension in sigma
    return lambda v: f2_energy(UniformParam(float(v[0]), abs(float(v[1]))), nu, k)


def f2_gradient(p: UniformParam, nu: Measure1D, k: Kernel | str = DISTANCE,
                step: float = FD_STEP) -> np.ndarray:
    """Gradient of ``F(m, sigma)``, minimal-norm element where it is not differentiable.

    Analytic for the distance kernel with a Dirac target; otherwise central differences
    of :func:`f2_energy`. At ``sigma < step`` the distance kernel uses a one-sided
    difference in ``sigma`` (the energy has a kink there); the smooth kernel is even in
    ``sigma`` and C1, so the symmetric difference is used.
    """
    k = get_kernel(k)
    q = _dirac_target(nu)
    if not k.smooth and q is not None:
        m, s = p.m - q, p.sigma
        if abs(m) >= SQRT3 * s:
            if m == 0.0:
                return np.zeros(2)  # only (0, 0) lands here; it is the minimizer
            return np.array([math.copysign(1.0, m), -1.0 / SQRT3])
        return np.array([m / (SQRT3 * s), 1.0 / (2 * SQRT3) - m * m / (2 * SQRT3 * s * s)])
    fun = _f2_extended(k, nu)
    x = np.array([p.m, p.sigma])
    if k.smooth or p.sigma >= step:
        return central_gradient(fun, x, step)
    gm = (fun(x + [step, 0.0]) - fun(x - [step, 0.0])) / (2 * step)
    f0, f1, f2 = fun(x), fun(x + [0.0, step]), fun(x + [0.0, 2 * step])
    return np.array([gm, (-3 * f0 + 4 * f1 - f2) / (2 * step)])


def _s2_velocity(y, nu, k):
    m, s = float(y[0]), max(float(y[1]), 0.0)
    g = f2_gradient(UniformParam(m, s), nu, k)
    v = -g
    if s <= 0.0 and v[1] < 0.0:
        v[1] = 0.0  # tangent-cone projection on the S1 boundary
    return v


def s2_flow(p0: UniformParam, nu: Measure1D, k: Kernel | str, t_end: float, h: float,
            record_every: int = 1, energy_tol: float = ENERGY_TOL) -> FlowTrajectory:
    """RK4 on ``(m, sigma)' = -dF(m, sigma)`` with the sigma >= 0 constraint.

    A step whose energy rises by more than ``energy_tol`` is retried with half the step;
    after ``MAX_HALVINGS`` retries :class:`IntegrationError` is raised. For a Dirac target
    and the distance kernel, crossings of the seam ``|m - q| = sqrt(3) sigma`` are located
    by bisection and the step is relaunched from there.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    k = get_kernel(k)
    q = _dirac_target(nu)
    seam = None
    if not k.smooth and q is not None:
        def seam(y):
            return abs(y[0] - q) - SQRT3 * max(y[1], 0.0)

    def field(_t, y):
        return _s2_velocity(y, nu, k)

    def energy(y):
        return f2_energy(UniformParam(float(y[0]), float(y[1])), nu, k)

    def advance(y, t, dt):
        new = rk4_step(field, t, y, dt)
        new[1] = max(new[1], 0.0)
        return new

    y = np.array([p0.m, p0.sigma], dtype=float)
    e = energy(y)
    traj = FlowTrajectory(meta={"family": "s2", "kernel": k.name, "h": h, "rejected": 0,
                                "seam_events": 0})
    traj.append(0.0, y.copy(), e)
    t, dt, count = 0.0, h, 0
    while t < t_end - 1e-12:
        dt = min(dt, t_end - t)
        for _ in range(MAX_HALVINGS + 1):
            new = advance(y, t, dt)
            if seam is not None and seam(y) != 0.0 and np.sign(seam(new)) != np.sign(seam(y)):
                frac = locate_event(lambda th: seam(advance(y, t, th * dt) if th > 0 else y),
                                    0.0, 1.0, 1e-10)
                if 0.0 < frac < 1.0:
                    dt *= frac
                    new = advance(y, t, dt)
                    traj.meta["seam_events"] += 1
            e_new = energy(new)
            if e_new <= e + energy_tol:
                break
            traj.meta["rejected"] += 1
            dt *= 0.5
        else:
            raise IntegrationError(f"energy increase persists after {MAX_HALVINGS} halvings "
                                   f"at t={t}")
        if t + dt <= t:
            # no representable step lowers the energy: numerical fixed point, hold it
            traj.meta["stalled_at"] = t
            traj.append(t_end, y.copy(), e)
            break
        y, e, t = new, e_new, t + dt
        count += 1
        dt = min(2.0 * dt, h)
        if count % record_every == 0 or t >= t_end - 1e-12:
            traj.append(t, y.copy(), e)
    return traj


def landscape_grid(nu: Measure1D, k: Kernel | str, m_range, sigma_range, resolution,
                   family: str = "s2", threads: int | None = None):
    """``F(m, sigma)`` on a tensor grid; returns ``(m_values, sigma_values, F)`` with
    ``F[j, i]`` at ``(m_values[i], sigma_values[j])``."""
    if family.lower() != "s2":
        raise ValueError("landscapes are defined for the s2 family only")
    res = (resolution, resolution) if np.ndim(resolution) == 0 else tuple(resolution)
    if min(res) < 2:
        raise ValueError("resolution must be >= 2 per axis")
    k = get_kernel(k)
    ms = np.linspace(m_range[0], m_range[1], res[0])
    ss = np.linspace(sigma_range[0], sigma_range[1], res[1])
    if threads is None:
        threads = int(os.environ.get("MMDFLOW_THREADS", "1") or 1)

    def row(j):
        return [f2_energy(UniformParam(float(m), float(ss[j])), nu, k) for m in ms]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(row, range(ss.size)))
    return ms, ss, np.array(rows)


# --- particles --------------------------------------------------------------------------

def particle_velocity(xs, nu: Measure1D, k: Kernel | str) -> np.ndarray:
    """Wasserstein velocity ``-grad (dF/dmu)`` at equal-weight particles ``xs``."""
    k = get_kernel(k)
    xs = np.asarray(xs, dtype=float)
    z = xs[:, None] - xs[None, :]
    self_term = (k.dphi(z) * np.sign(z)).mean(axis=1)
    return -(self_term - np.atleast_1d(kernel_potential_grad(k, nu, xs)))


def particle_flow_smooth(xs, nu: Measure1D, k: Kernel | str, h: float, steps: int,
                         record_every: int = 1) -> FlowTrajectory:
    """Explicit gradient descent of ``mmd_sq(empirical(xs), nu)`` on particle positions."""
    k = get_kernel(k)
    if not k.smooth:
        raise ValueError("particle flows need a differentiable kernel; the distance kernel "
                         "does not give a Wasserstein gradient flow of particles")
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.array(xs, dtype=float)
    traj = FlowTrajectory(meta={"family": "particles", "kernel": k.name, "h": h})
    traj.append(0.0, x.copy(), mmd_sq(empirical(x), nu, k))
    for step in range(1, steps + 1):
        x = x + h * particle_velocity(x, nu, k)
        if step % record_every == 0 or step == steps:
            traj.append(step * h, x.copy(), mmd_sq(empirical(x), nu, k))
    return traj
