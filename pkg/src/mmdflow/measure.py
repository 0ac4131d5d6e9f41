"""Probability measures on the line as atoms plus uniform pieces, and their quantile functions.

The map ``mu -> quantile(mu)`` is an isometry from (P_2(R), W_2) into L_2((0, 1)); every
operation here is exact piecewise-linear / piecewise-quadratic arithmetic, no sampling.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "MeasureError", "MeasureFormatError", "Measure1D", "QuantileFn",
    "dirac", "uniform", "empirical", "cdf_eval", "cdf_left", "quantile",
    "pushforward_from_quantile", "w2", "w2_squared", "midpoints",
    "sample_quantile_grid", "measure_to_dict", "measure_from_dict",
    "load_measure", "dump_measure",
]

MASS_TOL = 1e-12
LOAD_MASS_TOL = 1e-9


class MeasureError(ValueError):
    """A measure or quantile function violates its invariants."""


class MeasureFormatError(ValueError):
    """Measure JSON could not be parsed."""


@dataclass(frozen=True)
class Measure1D:
    """Weighted atoms ``(x, w)`` plus weighted uniform pieces ``(a, b, w)``.

    The constructor canonicalizes: atoms are sorted and coincident positions merged,
    uniform pieces are sorted. Zero or negative masses are rejected.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    uniforms: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        merged: dict[float, float] = {}
        for x, w in self.atoms:
            x, w = float(x), float(w)
            if not (math.isfinite(x) and math.isfinite(w)):
                raise MeasureError(f"non-finite atom ({x}, {w})")
            if w <= 0:
                raise MeasureError(f"atom at {x} has non-positive mass {w}")
            merged[x] = merged.get(x, 0.0) + w
        pieces = []
        for a, b, w in self.uniforms:
            a, b, w = float(a), float(b), float(w)
            if not all(map(math.isfinite, (a, b, w))):
                raise MeasureError(f"non-finite uniform piece ({a}, {b}, {w})")
            if not a < b:
                raise MeasureError(f"uniform piece needs left < right, got [{a}, {b}]")
            if w <= 0:
                raise MeasureError(f"uniform piece [{a}, {b}] has non-positive mass {w}")
            pieces.append((a, b, w))
        total = sum(merged.values()) + sum(p[2] for p in pieces)
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"total mass {total!r} differs from 1")
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))
        object.__setattr__(self, "uniforms", tuple(sorted(pieces)))

    @property
    def is_atomic(self) -> bool:
        return not self.uniforms

    def support(self) -> tuple[float, float]:
        pts = [x for x, _ in self.atoms] + [p for a, b, _ in self.uniforms for p in (a, b)]
        return min(pts), max(pts)

    def knots(self) -> np.ndarray:
        """Sorted positions where the CDF changes slope or jumps."""
        pts = {x for x, _ in self.atoms}
        for a, b, _ in self.uniforms:
            pts.update((a, b))
        return np.array(sorted(pts))

    def density_pieces(self) -> list[tuple[float, float, float]]:
        """Uniform part as disjoint ``(a, b, mass)`` pieces of constant density, with
        adjacent pieces of equal density merged."""
        if not self.uniforms:
            return []
        edges = sorted({p for a, b, _ in self.uniforms for p in (a, b)})
        out: list[list[float]] = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            dens = sum(w / (b - a) for a, b, w in self.uniforms if a <= lo and hi <= b)
            if dens <= 0:
                continue
            if out and out[-1][1] == lo and math.isclose(out[-1][2] / (out[-1][1] - out[-1][0]),
                                                         dens, rel_tol=1e-12):
                out[-1][2] += dens * (hi - lo)
                out[-1][1] = hi
            else:
                out.append([lo, hi, dens * (hi - lo)])
        return [tuple(p) for p in out]

    def canonical(self) -> "Measure1D":
        return Measure1D(self.atoms, tuple(self.density_pieces()))

    def isclose(self, other: "Measure1D", tol: float = 1e-12) -> bool:
        """Atoms agree in position and mass within ``tol`` and the CDFs of the uniform parts
        agree within ``tol`` (checked at all knots, where the piecewise-linear gap peaks)."""
        if len(self.atoms) != len(other.atoms):
            return False
        if self.atoms and not np.allclose(self.atoms, other.atoms, rtol=0.0, atol=tol):
            return False
        if bool(self.uniforms) != bool(other.uniforms):
            return False
        xs = np.array(sorted({p for u in self.uniforms + other.uniforms for p in u[:2]}))
        return bool(np.all(np.abs(_ac_cdf(self, xs) - _ac_cdf(other, xs)) <= tol))

    def mean(self) -> float:
        return sum(x * w for x, w in self.atoms) + sum(0.5 * (a + b) * w for a, b, w in self.uniforms)

    def second_moment(self) -> float:
        return (sum(x * x * w for x, w in self.atoms)
                + sum(w * (a * a + a * b + b * b) / 3.0 for a, b, w in self.uniforms))


def _ac_cdf(mu: Measure1D, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    for a, b, w in mu.uniforms:
        out += w * np.clip((x - a) / (b - a), 0.0, 1.0)
    return out


def dirac(x: float) -> Measure1D:
    return Measure1D(atoms=((x, 1.0),))


def uniform(a: float, b: float) -> Measure1D:
    """Normalized uniform measure on ``[a, b]``."""
    return Measure1D(uniforms=((a, b, 1.0),))


def empirical(points: Iterable[float]) -> Measure1D:
    """Equal-weight empirical measure; repeated points become heavier atoms."""
    pts = np.asarray(list(points), dtype=float)
    if pts.size == 0:
        raise MeasureError("empirical measure needs at least one point")
    vals, counts = np.unique(pts, return_counts=True)
    return Measure1D(atoms=tuple(zip(vals.tolist(), (counts / pts.size).tolist())))


def cdf_eval(mu: Measure1D, x):
    """Right-continuous CDF ``mu((-inf, x])``; vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for pos, w in mu.atoms:
        out = out + w * (pos <= x)
    for a, b, w in mu.uniforms:
        out = out + w * np.clip((x - a) / (b - a), 0.0, 1.0)
    out = np.minimum(out, 1.0)
    return float(out) if out.ndim == 0 else out


def cdf_left(mu: Measure1D, x):
    """Left limit ``mu((-inf, x))``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for pos, w in mu.atoms:
        out = out + w * (pos < x)
    for a, b, w in mu.uniforms:
        out = out + w * np.clip((x - a) / (b - a), 0.0, 1.0)
    out = np.minimum(out, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuantileFn:
    """Nondecreasing left-continuous piecewise-linear function on (0, 1).

    Segment ``k`` is affine on ``(s_lo[k], s_hi[k]]`` from ``v_lo[k]`` to ``v_hi[k]``.
    """

    s_lo: np.ndarray
    s_hi: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        for name in ("s_lo", "s_hi", "v_lo", "v_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.check:
            self.validate()

    @classmethod
    def from_segments(cls, segments: Iterable[tuple[float, float, float, float]], check=True):
        seg = np.asarray(list(segments), dtype=float).reshape(-1, 4)
        return cls(seg[:, 0], seg[:, 1], seg[:, 2], seg[:, 3], check=check)

    @classmethod
    def constant(cls, value: float) -> "QuantileFn":
        return cls.from_segments([(0.0, 1.0, value, value)])

    @property
    def segments(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.s_lo.tolist(), self.s_hi.tolist(), self.v_lo.tolist(), self.v_hi.tolist()))

    def validate(self, tol: float = 1e-12) -> None:
        s_lo, s_hi, v_lo, v_hi = self.s_lo, self.s_hi, self.v_lo, self.v_hi
        if s_lo.size == 0:
            raise MeasureError("quantile function has no segments")
        if s_lo[0] != 0.0 or s_hi[-1] != 1.0:
            raise MeasureError("segments must cover (0, 1)")
        if np.any(s_hi <= s_lo) or np.any(s_hi[:-1] != s_lo[1:]):
            raise MeasureError("segments must partition (0, 1) in order")
        if not (np.all(np.isfinite(v_lo)) and np.all(np.isfinite(v_hi))):
            raise MeasureError("non-finite quantile values")
        scale = max(1.0, float(np.max(np.abs(np.concatenate([v_lo, v_hi])))))
        if np.any(v_hi < v_lo - tol * scale) or np.any(v_lo[1:] < v_hi[:-1] - tol * scale):
            raise MeasureError("quantile function must be nondecreasing")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.s_hi, s, side="left"), 0, self.s_hi.size - 1)
        lo, hi = self.s_lo[k], self.s_hi[k]
        val = self.v_lo[k] + (self.v_hi[k] - self.v_lo[k]) * (s - lo) / (hi - lo)
        return float(val) if val.ndim == 0 else val

    def breakpoints(self) -> np.ndarray:
        return np.concatenate([self.s_lo, self.s_hi[-1:]])


def quantile(mu: Measure1D) -> QuantileFn:
    """Exact quantile function ``s -> min{x : R(x) >= s}``.

    Atoms become flat segments of length equal to their mass, constant-density pieces
    become strictly increasing affine segments; gaps in the support become jumps.
    """
    atoms = dict(mu.atoms)
    pieces = mu.density_pieces()
    knots = sorted(set(atoms) | {a for a, _, _ in pieces} | {b for _, b, _ in pieces})
    segs = []
    s = 0.0
    j = 0
    for x, x_next in zip(knots, knots[1:] + [None]):
        if x in atoms:
            segs.append([s, s + atoms[x], x, x])
            s += atoms[x]
        while j < len(pieces) and pieces[j][1] <= x:
            j += 1
        # density pieces are disjoint, so at most one covers (x, x_next)
        if x_next is not None and j < len(pieces) and pieces[j][0] <= x:
            a, b, w = pieces[j]
            m = w * (x_next - x) / (b - a)
            segs.append([s, s + m, x, x_next])
            s += m
    segs[-1][1] = 1.0
    return QuantileFn.from_segments(segs)


def pushforward_from_quantile(q: QuantileFn, flat_tol: float = 0.0) -> Measure1D:
    """``q_# lambda_(0,1)``: flat segments become atoms, increasing ones uniform pieces.

    Segments whose rise is at most ``flat_tol`` are treated as flat.
    """
    atoms: dict[float, float] = {}
    uniforms = []
    for s0, s1, v0, v1 in q.segments:
        w = s1 - s0
        if v1 - v0 <= flat_tol:
            x = v0 if v1 == v0 else 0.5 * (v0 + v1)
            atoms[x] = atoms.get(x, 0.0) + w
        else:
            uniforms.append((v0, v1, w))
    # absorb floating residue of the partition into the total
    total = sum(atoms.values()) + sum(u[2] for u in uniforms)
    if total != 1.0:
        atoms = {x: w / total for x, w in atoms.items()}
        uniforms = [(a, b, w / total) for a, b, w in uniforms]
    return Measure1D(tuple(atoms.items()), tuple(uniforms))


def _affine_pieces(q: QuantileFn, grid: np.ndarray):
    """Right-limit and left-limit values of ``q`` on each cell of ``grid``."""
    mids = 0.5 * (grid[:-1] + grid[1:])
    k = np.clip(np.searchsorted(q.s_hi, mids, side="left"), 0, q.s_hi.size - 1)
    slope = (q.v_hi[k] - q.v_lo[k]) / (q.s_hi[k] - q.s_lo[k])
    left = q.v_lo[k] + slope * (grid[:-1] - q.s_lo[k])
    right = q.v_lo[k] + slope * (grid[1:] - q.s_lo[k])
    return left, right


def merged_partition(*qs: QuantileFn) -> np.ndarray:
    grid = np.unique(np.concatenate([q.breakpoints() for q in qs]))
    return grid


def w2_squared(mu: Measure1D | QuantileFn, nu: Measure1D | QuantileFn) -> float:
    """``int_0^1 |Q_mu - Q_nu|^2 ds`` integrated exactly over the merged breakpoints."""
    qa = mu if isinstance(mu, QuantileFn) else quantile(mu)
    qb = nu if isinstance(nu, QuantileFn) else quantile(nu)
    grid = merged_partition(qa, qb)
    la, ra = _affine_pieces(qa, grid)
    lb, rb = _affine_pieces(qb, grid)
    d0, d1 = la - lb, ra - rb
    return float(np.sum(np.diff(grid) * (d0 * d0 + d0 * d1 + d1 * d1)) / 3.0)


def w2(mu: Measure1D | QuantileFn, nu: Measure1D | QuantileFn) -> float:
    return math.sqrt(max(w2_squared(mu, nu), 0.0))


def midpoints(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def sample_quantile_grid(q: QuantileFn | Measure1D, n: int) -> np.ndarray:
    """Values of the quantile function at the cell midpoints ``(i + 1/2) / n``."""
    if n < 2:
        raise ValueError("grid needs n >= 2")
    if isinstance(q, Measure1D):
        q = quantile(q)
    return np.asarray(q(midpoints(n)), dtype=float)


# --- JSON --------------------------------------------------------------------------

def measure_to_dict(mu: Measure1D) -> dict:
    return {
        "atoms": [{"x": x, "w": w} for x, w in mu.atoms],
        "uniforms": [{"a": a, "b": b, "w": w} for a, b, w in mu.uniforms],
    }


def measure_from_dict(data) -> Measure1D:
    """Parse the measure JSON object. Masses are renormalized when their sum is within
    ``1e-9`` of one; larger deviations raise :class:`MeasureError`."""
    if not isinstance(data, dict):
        raise MeasureFormatError("measure must be a JSON object")
    unknown = set(data) - {"atoms", "uniforms"}
    if unknown:
        raise MeasureFormatError(f"unknown field(s): {', '.join(sorted(unknown))}")
    atoms, uniforms = [], []
    for i, item in enumerate(data.get("atoms", [])):
        atoms.append((_num(item, "x", f"atoms[{i}]"), _num(item, "w", f"atoms[{i}]")))
    for i, item in enumerate(data.get("uniforms", [])):
        where = f"uniforms[{i}]"
        uniforms.append((_num(item, "a", where), _num(item, "b", where), _num(item, "w", where)))
    total = sum(w for _, w in atoms) + sum(u[2] for u in uniforms)
    if not math.isfinite(total) or abs(total - 1.0) > LOAD_MASS_TOL:
        raise MeasureError(f"masses sum to {total!r}, expected 1 +- {LOAD_MASS_TOL}")
    if abs(total - 1.0) <= MASS_TOL:
        # already valid: keep the stored bits so dump/load is lossless
        return Measure1D(tuple(atoms), tuple(uniforms))
    return Measure1D(tuple((x, w / total) for x, w in atoms),
                     tuple((a, b, w / total) for a, b, w in uniforms))


def _num(item, key, where) -> float:
    if not isinstance(item, dict) or key not in item:
        raise MeasureFormatError(f"{where}: missing field '{key}'")
    val = item[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise MeasureFormatError(f"{where}.{key}: expected a number, got {val!r}")
    return float(val)


def dump_measure(mu: Measure1D) -> str:
    return json.dumps(measure_to_dict(mu), indent=2) + "\n"


def load_measure(spec: str) -> Measure1D:
    """Load a measure from a JSON path or a builtin spec ``dirac:<x>`` / ``uniform:<a>:<b>``."""
    if spec.startswith("dirac:"):
        return dirac(_parse_float(spec, spec[6:]))
    if spec.startswith("uniform:"):
        parts = spec[8:].split(":")
        if len(parts) != 2:
            raise MeasureFormatError(f"{spec}: expected uniform:<a>:<b>")
        a, b = (_parse_float(spec, p) for p in parts)
        return uniform(a, b)
    with open(spec, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeasureFormatError(f"{spec}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return measure_from_dict(data)
    except MeasureFormatError as exc:
        raise MeasureFormatError(f"{spec}: {exc}") from exc


def _parse_float(spec, text) -> float:
    try:
        return float(text)
    except ValueError:
        raise MeasureFormatError(f"{spec}: cannot parse number {text!r}") from None
