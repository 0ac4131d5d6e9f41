"""Shared numerical kernels: isotonic projection, quadrature, RK4 and finite differences."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuadratureError", "IntegrationError", "ConvergenceError",
    "isotonic_project", "quad_adaptive", "gauss_legendre_2d", "rk4_step",
    "locate_event", "central_gradient", "central_hessian",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature hit its depth limit; ``estimate`` holds the partial sum."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class IntegrationError(RuntimeError):
    """ODE integration failed (non-finite field, step size collapse)."""


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def isotonic_project(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the nondecreasing cone (pool adjacent violators).

    Blocks are merged only on strict violation, so ties stay separate blocks.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("isotonic_project expects a non-empty 1-d vector")
    sums: list[float] = []
    counts: list[int] = []
    for x in v:
        s, c = float(x), 1
        while sums and sums[-1] * c > s * counts[-1]:
            s += sums.pop()
            c += counts.pop()
        sums.append(s)
        counts.append(c)
    return np.repeat(np.array(sums) / np.array(counts), counts)


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def quad_adaptive(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                  max_depth: int = 50, breakpoints: Sequence[float] = ()) -> float:
    """Adaptive Simpson quadrature of ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    ``breakpoints`` inside ``(a, b)`` (kinks of the integrand) split the range up front;
    the tolerance is shared out by length. Raises :class:`QuadratureError` carrying the
    partial estimate when some panel still fails the error test at ``max_depth``.
    """
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    knots = [a] + sorted(p for p in breakpoints if a < p < b) + [b]
    total = 0.0
    failed = False
    for lo, hi in zip(knots[:-1], knots[1:]):
        part_tol = tol * (hi - lo) / (b - a)
        flo, fhi, fm = f(lo), f(hi), f(0.5 * (lo + hi))
        est, ok = _simpson_rec(f, lo, hi, flo, fm, fhi, _simpson(flo, fm, fhi, lo, hi),
                               part_tol, max_depth)
        total += est
        failed |= not ok
    if failed:
        raise QuadratureError(f"max depth {max_depth} exceeded on [{a}, {b}]", total)
    return total


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    # explicit stack keeps deep refinement away from the recursion limit
    stack = [(a, b, fa, fm, fb, whole, tol, depth)]
    total = 0.0
    ok = True
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, a, m)
        right = _simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol or depth <= 0:
            if depth <= 0 and abs(delta) > 15.0 * tol:
                ok = False
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth - 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))
    return total, ok


def gauss_legendre_2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      xlim: tuple[float, float], ylim: tuple[float, float],
                      nodes: int = 32, tol: float = 1e-9, max_nodes: int = 4096) -> float:
    """Tensor Gauss-Legendre rule for a vectorized ``f(x, y)``, node count doubled until
    successive estimates differ by less than ``tol``."""
    prev = None
    n = nodes
    while n <= max_nodes:
        t, w = np.polynomial.legendre.leggauss(n)
        x = 0.5 * (xlim[1] - xlim[0]) * t + 0.5 * (xlim[1] + xlim[0])
        y = 0.5 * (ylim[1] - ylim[0]) * t + 0.5 * (ylim[1] + ylim[0])
        X, Y = np.meshgrid(x, y, indexing="ij")
        val = 0.25 * (xlim[1] - xlim[0]) * (ylim[1] - ylim[0]) * float(w @ f(X, Y) @ w)
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        n *= 2
    raise QuadratureError(f"Gauss-Legendre did not settle below {tol} with {max_nodes} nodes", prev)


def rk4_step(field: Callable, t: float, state, h: float):
    """One classical Runge-Kutta step of ``y' = field(t, y)``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(field(t, y), dtype=float)
    k2 = np.asarray(field(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(field(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(field(t + h, y + h * k3), dtype=float)
    if not all(np.all(np.isfinite(k)) for k in (k1, k2, k3, k4)):
        raise IntegrationError(f"non-finite derivative near t={t}")
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return float(out) if np.ndim(state) == 0 else out


def locate_event(g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisect for a sign change of ``g`` on ``[lo, hi]``; returns the right end of the
    final bracket, i.e. the first point past the event."""
    glo = g(lo)
    if glo == 0.0:
        return lo
    if np.sign(g(hi)) == np.sign(glo):
        raise ValueError("no sign change on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if np.sign(gm) == np.sign(glo):
            lo = mid
        else:
            hi = mid
    return hi


def central_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def central_hessian(f: Callable[[np.ndarray], float], x, step: float = 1e-3) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / step**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4.0 * step**2)
    return H
