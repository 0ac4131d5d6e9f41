"""Kernels, MMD energies and the convex quantile-space functional for the distance kernel.

Both kernels are radial, ``K(x, y) = phi(|x - y|)`` with ``phi`` piecewise polynomial, so
every energy between atoms and uniform pieces reduces to one-dimensional integrals of
``phi(|z|)`` against a piecewise-linear density. Those are integrated exactly (Gauss-Legendre
per polynomial piece, or closed-form antiderivatives). An adaptive-Simpson route is kept
for the smooth kernel as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .measure import Measure1D, QuantileFn, cdf_eval, cdf_left, midpoints, quantile
from .numerics import quad_adaptive

__all__ = [
    "Kernel", "DISTANCE", "SMOOTH", "get_kernel", "kernel_eval", "kernel_potential",
    "kernel_potential_grad", "interaction_energy", "potential_energy", "cross_energy",
    "mmd_sq", "expected_distance", "f_nu", "f_nu_subgrad_minnorm",
]

_GL_T, _GL_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class Kernel:
    """Radial kernel ``K(x, y) = phi(|x - y|)``.

    ``name`` is ``"distance"`` for ``-|x - y|`` or ``"smooth"`` for the compactly
    supported ``(1 - r/2)^2 (r + 1)`` on ``r <= 2``.
    """

    name: Literal["distance", "smooth"]

    def __post_init__(self):
        if self.name not in ("distance", "smooth"):
            raise ValueError(f"unknown kernel {self.name!r}; use 'distance' or 'smooth'")

    @property
    def smooth(self) -> bool:
        return self.name == "smooth"

    @property
    def z_breaks(self) -> tuple[float, ...]:
        """Points in ``z = x - y`` where ``phi(|z|)`` changes polynomial piece."""
        return (-2.0, 0.0, 2.0) if self.smooth else (0.0,)

    def phi(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if not self.smooth:
            return -r
        return np.where(r <= 2.0, 1.0 - 0.75 * r**2 + 0.25 * r**3, 0.0)

    def dphi(self, r):
        """Derivative of ``phi`` in ``r``; ``-1`` for the distance kernel (also at 0)."""
        r = np.abs(np.asarray(r, dtype=float))
        if not self.smooth:
            return -np.ones_like(r)
        return np.where(r <= 2.0, -1.5 * r + 0.75 * r**2, 0.0)

    def antiderivative(self, z):
        """``Phi(z) = int_0^z phi(|u|) du`` (odd in ``z``)."""
        z = np.asarray(z, dtype=float)
        r = np.abs(z)
        if not self.smooth:
            return -0.5 * z * r
        inner = r - r**3 / 4.0 + r**4 / 16.0
        return np.sign(z) * np.where(r <= 2.0, inner, 1.0)

    def __call__(self, x, y):
        return self.phi(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


DISTANCE = Kernel("distance")
SMOOTH = Kernel("smooth")


def get_kernel(k: Kernel | str) -> Kernel:
    return k if isinstance(k, Kernel) else Kernel(k)


def kernel_eval(k: Kernel | str, x, y):
    out = get_kernel(k)(x, y)
    return float(out) if np.ndim(out) == 0 else out


# --- exact pair integrals ------------------------------------------------------------

def _gl_integrate(fun, knots: np.ndarray) -> float:
    knots = np.unique(knots)
    if knots.size < 2:
        return 0.0
    lo, hi = knots[:-1], knots[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_T[None, :]
    return float(np.sum(half[:, None] * _GL_W[None, :] * fun(nodes)))


def _uniform_uniform(k: Kernel, a, b, c, d) -> float:
    """``E phi(|X - Y|)`` for ``X ~ U[a, b]``, ``Y ~ U[c, d]`` (normalized)."""
    la, lc = b - a, d - c
    zlo, zhi = a - d, b - c

    def integrand(z):
        overlap = np.clip(np.minimum(b, z + d) - np.maximum(a, z + c), 0.0, None)
        return k.phi(z) * (overlap / la) / lc

    knots = [zlo, zhi, a - c, b - d] + [z for z in k.z_breaks if zlo < z < zhi]
    return _gl_integrate(integrand, np.clip(np.array(knots), zlo, zhi))


def _atoms_uniform(k: Kernel, x, a, b):
    """``E phi(|x - Y|)`` for ``Y ~ U[a, b]``, vectorized over ``x``."""
    if not k.smooth:
        # cancellation-free: |x - mid| outside [a, b], mean of the two squared gaps inside
        x = np.asarray(x, dtype=float)
        inside = (x > a) & (x < b)
        xi = np.where(inside, x, a)
        return -np.where(inside, ((xi - a) ** 2 + (b - xi) ** 2) / (2 * (b - a)),
                         np.abs(x - 0.5 * (a + b)))
    return (k.antiderivative(x - a) - k.antiderivative(x - b)) / (b - a)


def kernel_potential(k: Kernel | str, nu: Measure1D, x):
    """``int K(x, y) d nu(y)`` evaluated exactly, vectorized over ``x``."""
    k = get_kernel(k)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if nu.atoms:
        pos = np.array([p for p, _ in nu.atoms])
        w = np.array([w for _, w in nu.atoms])
        out = out + (k.phi(x[..., None] - pos) * w).sum(axis=-1)
    for a, b, w in nu.uniforms:
        out = out + w * _atoms_uniform(k, x, a, b)
    return float(out) if out.ndim == 0 else out


def kernel_potential_grad(k: Kernel | str, nu: Measure1D, x):
    """``int d/dx K(x, y) d nu(y)``; for the distance kernel the sign convention
    ``sign(0) = 0`` is used at atoms."""
    k = get_kernel(k)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if nu.atoms:
        pos = np.array([p for p, _ in nu.atoms])
        w = np.array([w for _, w in nu.atoms])
        z = x[..., None] - pos
        out = out + (k.dphi(z) * np.sign(z) * w).sum(axis=-1)
    for a, b, w in nu.uniforms:
        out = out + w * (k.phi(x - a) - k.phi(x - b)) / (b - a)
    return float(out) if out.ndim == 0 else out


def cross_energy(mu: Measure1D, nu: Measure1D, k: Kernel | str) -> float:
    """``int int K(x, y) d mu(x) d nu(y)`` by exact piecewise integration."""
    k = get_kernel(k)
    total = 0.0
    if mu.atoms:
        pos = np.array([p for p, _ in mu.atoms])
        w = np.array([w for _, w in mu.atoms])
        total += float(w @ np.atleast_1d(kernel_potential(k, nu, pos)))
    for a, b, w in mu.uniforms:
        if nu.atoms:
            pos = np.array([p for p, _ in nu.atoms])
            wn = np.array([v for _, v in nu.atoms])
            total += w * float(wn @ np.atleast_1d(_atoms_uniform(k, pos, a, b)))
        for c, d, wn in nu.uniforms:
            total += w * wn * _uniform_uniform(k, a, b, c, d)
    return total


# --- quadrature route (independent of the exact pair formulas) ----------------------

def _cross_energy_quadrature(mu: Measure1D, nu: Measure1D, k: Kernel, tol: float) -> float:
    def point_to_piece(x, a, b, tol_):
        brk = [x + z for z in k.z_breaks]
        return quad_adaptive(lambda y: float(k.phi(x - y)), a, b, tol_, breakpoints=brk) / (b - a)

    total = 0.0
    for x, w in mu.atoms:
        for y, v in nu.atoms:
            total += w * v * float(k.phi(x - y))
        for a, b, v in nu.uniforms:
            total += w * v * point_to_piece(x, a, b, tol)
    for a, b, w in mu.uniforms:
        for y, v in nu.atoms:
            total += w * v * point_to_piece(y, a, b, tol)
        for c, d, v in nu.uniforms:
            outer_brk = [p + z for p in (c, d) for z in k.z_breaks]
            val = quad_adaptive(lambda x: point_to_piece(x, c, d, tol), a, b, tol,
                                breakpoints=outer_brk) / (b - a)
            total += w * v * val
    return total


def _cross(mu, nu, k, method, tol):
    if method == "exact":
        return cross_energy(mu, nu, k)
    if method == "quadrature":
        return _cross_energy_quadrature(mu, nu, k, tol)
    raise ValueError(f"unknown method {method!r}")


def interaction_energy(mu: Measure1D, k: Kernel | str, method: str = "exact",
                       tol: float = 1e-10) -> float:
    """``1/2 int int K d mu d mu``."""
    return 0.5 * _cross(mu, mu, get_kernel(k), method, tol)


def potential_energy(mu: Measure1D, nu: Measure1D, k: Kernel | str, method: str = "exact",
                     tol: float = 1e-10) -> float:
    """``int V d mu`` with the potential ``V(x) = -int K(x, y) d nu(y)``."""
    return -_cross(mu, nu, get_kernel(k), method, tol)


def mmd_sq(mu: Measure1D, nu: Measure1D, k: Kernel | str = DISTANCE, method: str = "exact",
           tol: float = 1e-10) -> float:
    """Squared MMD via ``E_K(mu) + V_{K,nu}(mu) + E_K(nu)``."""
    k = get_kernel(k)
    return (interaction_energy(mu, k, method, tol) + potential_energy(mu, nu, k, method, tol)
            + interaction_energy(nu, k, method, tol))


def expected_distance(nu: Measure1D, x):
    """``int |x - y| d nu(y)``, exact and vectorized."""
    return -kernel_potential(DISTANCE, nu, x)


# --- quantile-space functional --------------------------------------------------------

def _weighted_integral(q: QuantileFn) -> float:
    """``int_0^1 (1 - 2s) q(s) ds``; Simpson is exact on each affine segment."""
    s0, s1, v0, v1 = q.s_lo, q.s_hi, q.v_lo, q.v_hi
    sm = 0.5 * (s0 + s1)
    return float(np.sum((s1 - s0) / 6.0 * ((1 - 2 * s0) * v0 + 4 * (1 - 2 * sm) * 0.5 * (v0 + v1)
                                           + (1 - 2 * s1) * v1)))


def _segment_distance(q: QuantileFn, nu: Measure1D) -> float:
    """``int_0^1 int_0^1 |q(s) - Q_nu(t)| dt ds`` for piecewise-linear ``q``."""
    flat = q.v_hi == q.v_lo
    total = 0.0
    if np.any(flat):
        total += float(np.sum((q.s_hi - q.s_lo)[flat] * expected_distance(nu, q.v_lo[flat])))
    for s0, s1, v0, v1 in zip(q.s_lo[~flat], q.s_hi[~flat], q.v_lo[~flat], q.v_hi[~flat]):
        piece = Measure1D(uniforms=((v0, v1, 1.0),))
        total += (s1 - s0) * -cross_energy(piece, nu, DISTANCE)
    return total


def f_nu(f, nu: Measure1D) -> float:
    """Convex functional on L_2((0, 1)) that equals ``mmd_sq(mu, nu)`` at ``f = Q_mu``.

    ``f`` is a :class:`QuantileFn` (integrated exactly) or a grid of values at the cell
    midpoints (midpoint sum in ``s``, exact expected distance in ``t``). Grids need not
    be monotone. The ``f``-independent term ``int (1 - 2s) Q_nu(s) ds`` is always exact.
    """
    if isinstance(f, QuantileFn):
        return (_weighted_integral(f) + _weighted_integral(quantile(nu))
                + _segment_distance(f, nu))
    f = np.asarray(f, dtype=float)
    s = midpoints(f.size)
    return (float(np.mean((1.0 - 2.0 * s) * f + expected_distance(nu, f)))
            + _weighted_integral(quantile(nu)))


def f_nu_subgrad_minnorm(f, nu: Measure1D) -> np.ndarray:
    """Minimal-norm element of the subdifferential of :func:`f_nu` on a midpoint grid.

    At each node the subdifferential is ``[2(R(f-) - s), 2(R(f) - s)]``; the element of
    smallest modulus is ``2 (median(R(f-), s, R(f)) - s)``.
    """
    f = np.asarray(f, dtype=float)
    s = midpoints(f.size)
    lo = np.atleast_1d(cdf_left(nu, f))
    hi = np.atleast_1d(cdf_eval(nu, f))
    return 2.0 * (np.clip(s, lo, hi) - s)
