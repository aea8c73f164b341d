"""Extended-real functions sampled on uniform grids over boxes in R^1 or R^2.

Everything downstream works on :class:`SampledFunction`: a :class:`Grid` plus
one extended-real value per node.  Closed-form test functions live in the
gallery (:func:`gallery`) and are turned into samples with :func:`sample`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ExtendedArithmeticError, PreconditionError, UsageError

__all__ = [
    "ExtReal", "ext_add", "ext_add_arrays", "Grid", "SampledFunction",
    "GalleryFunction", "gallery", "GALLERY_IDS", "affine", "piecewise_linear",
    "custom", "evaluate", "sample", "norm_dist", "distances", "LscReport",
    "lsc_probe", "ConeFamily", "AffineFamily", "family_hull",
    "default_tol_feas", "random_piecewise_linear",
]

ExtReal = float
"""A float where ``math.inf`` and ``-math.inf`` stand for the extended reals."""

# Node lookups accept coordinates this close (relative to the spacing).
_NODE_SNAP = 1e-9


def ext_add(a: float, b: float) -> float:
    """Add two extended reals; ``+inf + -inf`` raises."""
    if (a == math.inf and b == -math.inf) or (a == -math.inf and b == math.inf):
        raise ExtendedArithmeticError("(+inf) + (-inf) is undefined")
    return a + b


def ext_add_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    bad = (np.isposinf(a) & np.isneginf(b)) | (np.isneginf(a) & np.isposinf(b))
    if bad.any():
        raise ExtendedArithmeticError(
            f"(+inf) + (-inf) at node {int(np.flatnonzero(bad)[0])}")
    return a + b


def _parse_norm(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        if p in ("inf", "infinity", "max"):
            return math.inf
        p = float(p)
    p = float(p)
    if p not in (1.0, 2.0, math.inf):
        raise PreconditionError(f"norm must be 1, 2 or inf, got {p!r}")
    return p


def _dist(diff: np.ndarray, p: float) -> np.ndarray:
    """Norm along the last axis of ``diff``."""
    if diff.shape[-1] == 1:
        return np.abs(diff[..., 0])
    if p == 1.0:
        return np.abs(diff).sum(axis=-1)
    if p == math.inf:
        return np.abs(diff).max(axis=-1)
    return np.hypot(diff[..., 0], diff[..., 1])


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on a box, nodes ordered row-major (last axis fastest).

    Node ``j`` along axis ``i`` sits at ``lower[i] + j * spacing[i]``; the
    coordinate is recomputed from that formula every time, never accumulated.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nodes: tuple[int, ...]
    norm: float = 2.0

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        nodes = tuple(int(v) for v in np.atleast_1d(self.nodes))
        if not (len(lower) == len(upper) == len(nodes)) or len(lower) not in (1, 2):
            raise PreconditionError("grid must have 1 or 2 axes with matching lower/upper/nodes")
        for lo, hi, n in zip(lower, upper, nodes):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise PreconditionError(f"need finite lower < upper, got [{lo}, {hi}]")
            if n < 2:
                raise PreconditionError(f"need at least 2 nodes per axis, got {n}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "norm", _parse_norm(self.norm))

    @classmethod
    def line(cls, lower: float, upper: float, nodes: int, norm=2.0) -> "Grid":
        return cls((lower,), (upper,), (nodes,), norm)

    @classmethod
    def square(cls, lower: float, upper: float, nodes: int, norm=2.0) -> "Grid":
        return cls((lower, lower), (upper, upper), (nodes, nodes), norm)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.nodes))

    def axis(self, i: int) -> np.ndarray:
        j = np.arange(self.nodes[i], dtype=float)
        return self.lower[i] + j * self.spacing[i]

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``; read-only."""
        mesh = np.meshgrid(*(self.axis(i) for i in range(self.dim)), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    def refine(self, factor: int = 2) -> "Grid":
        """Nested refinement: every old node stays a node."""
        return Grid(self.lower, self.upper,
                    tuple((n - 1) * factor + 1 for n in self.nodes), self.norm)

    def with_norm(self, norm) -> "Grid":
        return Grid(self.lower, self.upper, self.nodes, norm)

    def contains(self, x) -> bool:
        x = self._as_point(x)
        return all(lo - _NODE_SNAP * h <= xi <= hi + _NODE_SNAP * h
                   for xi, lo, hi, h in zip(x, self.lower, self.upper, self.spacing))

    def _as_point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise UsageError(f"expected a point in R^{self.dim}, got shape {x.shape}")
        return x

    def node_index(self, x) -> int:
        """Index of the node at ``x``; raises if ``x`` is off-box or between nodes."""
        x = self._as_point(x)
        if not self.contains(x):
            raise DomainError(f"point {tuple(x.tolist())} outside box {self.lower}..{self.upper}")
        idx = 0
        for i, (xi, lo, h, n) in enumerate(zip(x, self.lower, self.spacing, self.nodes)):
            j = int(round((xi - lo) / h))
            if abs(lo + j * h - xi) > _NODE_SNAP * h:
                raise UsageError(f"point {tuple(x.tolist())} is not a grid node (no interpolation)")
            idx = idx * n + min(max(j, 0), n - 1)
        return idx

    def node(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise DomainError(f"node index {index} out of range")
        sub = np.unravel_index(index, self.nodes)
        return np.array([self.lower[i] + sub[i] * self.spacing[i] for i in range(self.dim)])

    def boundary_mask(self) -> np.ndarray:
        mesh = np.meshgrid(*(np.arange(n) for n in self.nodes), indexing="ij")
        mask = np.zeros(self.nodes, dtype=bool)
        for m, n in zip(mesh, self.nodes):
            mask |= (m == 0) | (m == n - 1)
        return mask.ravel()

    def distances_from(self, index: int) -> np.ndarray:
        return _dist(self.points - self.node(index), self.norm)

    def to_json(self) -> dict:
        return {"dim": self.dim, "lower": list(self.lower), "upper": list(self.upper),
                "nodes": list(self.nodes),
                "norm": "inf" if self.norm == math.inf else int(self.norm)}

    @classmethod
    def from_json(cls, d: dict) -> "Grid":
        g = cls(tuple(d["lower"]), tuple(d["upper"]), tuple(d["nodes"]), d.get("norm", 2))
        if "dim" in d and int(d["dim"]) != g.dim:
            raise PreconditionError("grid 'dim' disagrees with its axes")
        return g


def distances(grid: Grid, rows: np.ndarray | slice | None = None) -> np.ndarray:
    """Node-to-node distance block ``D[i, j]`` for ``i`` in ``rows``."""
    pts = grid.points
    left = pts if rows is None else pts[rows]
    return _dist(left[:, None, :] - pts[None, :, :], grid.norm)


def norm_dist(grid: Grid, x, y) -> float:
    """Distance between two points of the box in the grid's norm."""
    x, y = grid._as_point(x), grid._as_point(y)
    return float(_dist((x - y)[None, :], grid.norm)[0])


def default_tol_feas(values: np.ndarray, base: float = 1e-9) -> float:
    fin = np.asarray(values)[np.isfinite(values)]
    scale = float(np.abs(fin).max()) if fin.size else 0.0
    return base * (1.0 + scale)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Extended-real values on every node of a grid (row-major order)."""

    grid: Grid
    values: np.ndarray
    name: str | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise PreconditionError(
                f"{v.size} values for a grid with {self.grid.size} nodes")
        if np.isnan(v).any():
            raise PreconditionError("NaN is not an extended real")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def proper(self) -> bool:
        return bool(self.finite.any()) and not bool(np.isneginf(self.values).any())

    @property
    def effective_domain(self) -> np.ndarray:
        return np.flatnonzero(self.finite)

    def at(self, x) -> float:
        return float(self.values[self.grid.node_index(x)])

    def index(self, x) -> int:
        return self.grid.node_index(x)

    def sup_norm(self) -> float:
        fin = self.values[self.finite]
        return float(np.abs(fin).max()) if fin.size else 0.0

    def tol_feas(self, base: float = 1e-9) -> float:
        return default_tol_feas(self.values, base)

    def negate(self) -> "SampledFunction":
        return SampledFunction(self.grid, -self.values, _tag("-", self.name))

    __neg__ = negate

    def scale(self, lam: float) -> "SampledFunction":
        if lam == 0 and not self.finite.all():
            raise ExtendedArithmeticError("0 * inf is undefined")
        return SampledFunction(self.grid, lam * self.values, _tag(f"{lam!r}*", self.name))

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        if other.grid != self.grid:
            raise PreconditionError("cannot add functions on different grids")
        name = f"{self.name}+{other.name}" if self.name and other.name else None
        return SampledFunction(self.grid, ext_add_arrays(self.values, other.values), name)

    def require_no_neginf(self, what: str = "operation") -> None:
        if np.isneginf(self.values).any():
            raise PreconditionError(f"{what} requires f > -inf at every node")

    def require_proper(self, what: str = "operation") -> None:
        self.require_no_neginf(what)
        if not self.finite.any():
            raise PreconditionError(f"{what} requires a proper function (some finite value)")

    def to_json(self) -> dict:
        return {"kind": "samples", "grid": self.grid.to_json(), "name": self.name,
                "values": [_encode_ext(v) for v in self.values]}

    @classmethod
    def from_json(cls, d: dict) -> "SampledFunction":
        return cls(Grid.from_json(d["grid"]), [_decode_ext(v) for v in d["values"]], d.get("name"))


def _tag(prefix: str, name: str | None) -> str | None:
    return None if name is None else prefix + name


def _encode_ext(v: float):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return float(v)


def _decode_ext(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf"):
            return math.inf
        if s == "-inf":
            return -math.inf
        raise PreconditionError(f"bad extended-real literal {v!r}")
    return float(v)


# --------------------------------------------------------------------------
# Gallery


@dataclass(frozen=True)
class GalleryFunction:
    """A closed-form function R^dim -> extended reals."""

    id: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    params: tuple = ()

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        return np.asarray(self.fn(pts), dtype=float).reshape(-1)

    def negate(self) -> "GalleryFunction":
        return GalleryFunction("-" + self.id, self.dim, lambda p, fn=self.fn: -fn(p), self.params)

    @property
    def label(self) -> str:
        if not self.params:
            return self.id
        return f"{self.id}({', '.join(repr(p) for p in self.params)})"

    def to_json(self) -> dict:
        d = {"kind": "gallery", "id": self.id}
        if self.params:
            d["params"] = [list(p) if isinstance(p, tuple) else p for p in self.params]
        return d


_GALLERY = {
    "square": (1, lambda p: p[:, 0] ** 2),
    "neg_sqrt_abs": (1, lambda p: -np.sqrt(np.abs(p[:, 0]))),
    "abs_diff_2d": (2, lambda p: np.abs(p[:, 0]) - np.abs(p[:, 1])),
    "sqrt2_abs": (1, lambda p: math.sqrt(2.0) * np.abs(p[:, 0])),
    "abs_1d": (1, lambda p: np.abs(p[:, 0])),
}
GALLERY_IDS = tuple(_GALLERY)


def gallery(id: str) -> GalleryFunction:
    try:
        dim, fn = _GALLERY[id]
    except KeyError:
        raise UsageError(f"unknown gallery id {id!r}; known: {', '.join(GALLERY_IDS)}") from None
    return GalleryFunction(id, dim, fn)


def affine(a: float, b: float) -> GalleryFunction:
    """x -> a*x + b on the line."""
    a, b = float(a), float(b)
    return GalleryFunction("affine", 1, lambda p: a * p[:, 0] + b, (a, b))


def piecewise_linear(knots: Sequence[float], values: Sequence[float]) -> GalleryFunction:
    """Linear interpolation through ``(knots, values)``, constant beyond the ends."""
    xs = np.asarray(knots, dtype=float)
    ys = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise PreconditionError("piecewise_linear needs >= 2 strictly increasing knots")
    return GalleryFunction("pwl", 1, lambda p: np.interp(p[:, 0], xs, ys),
                           (tuple(xs.tolist()), tuple(ys.tolist())))


def custom(name: str, fn: Callable[[np.ndarray], np.ndarray], dim: int = 1) -> GalleryFunction:
    """Wrap an arbitrary vectorised callable taking an ``(m, dim)`` array."""
    return GalleryFunction(name, dim, fn)


def evaluate(f: GalleryFunction | SampledFunction, x, grid: Grid | None = None) -> float:
    """Value of ``f`` at ``x``.

    Sampled functions are only defined on their nodes; gallery functions are
    checked against ``grid``'s box when one is given.
    """
    if isinstance(f, SampledFunction):
        return f.at(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (f.dim,):
        raise UsageError(f"{f.id} takes points in R^{f.dim}")
    if grid is not None and not grid.contains(x):
        raise DomainError(f"point {tuple(x.tolist())} outside box {grid.lower}..{grid.upper}")
    return float(f(x[None, :])[0])


def sample(f: GalleryFunction, grid: Grid) -> SampledFunction:
    if f.dim != grid.dim:
        raise PreconditionError(f"{f.id} is {f.dim}-D but the grid is {grid.dim}-D")
    return SampledFunction(grid, f(grid.points), f.label)


def random_piecewise_linear(rng: np.random.Generator, grid: Grid, n_knots: int = 6,
                            lipschitz: float | None = None) -> SampledFunction:
    """Random continuous piecewise-linear function sampled on a 1-D grid.

    With ``lipschitz`` set, every segment slope lies in ``[-lipschitz, lipschitz]``.
    """
    if grid.dim != 1:
        raise PreconditionError("random_piecewise_linear is 1-D only")
    lo, hi = grid.lower[0], grid.upper[0]
    inner = np.sort(rng.uniform(lo, hi, size=max(n_knots - 2, 0)))
    knots = np.concatenate([[lo], inner, [hi]])
    if lipschitz is None:
        ys = rng.normal(size=knots.size)
    else:
        slopes = rng.uniform(-lipschitz, lipschitz, size=knots.size - 1)
        ys = rng.normal() + np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    return SampledFunction(grid, np.interp(grid.axis(0), knots, ys), "random_pwl")


# --------------------------------------------------------------------------
# Lower semicontinuity probe


@dataclass(frozen=True)
class LscReport:
    x_bar: tuple[float, ...]
    value: float
    radii: tuple[float, ...]
    liminf_estimates: tuple[float, ...]
    tol: float
    verdict: str
    note: str = "one-sided sampling heuristic: can refute lsc, never prove it"

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent with lsc at x_bar"


def _punctured_samples(x_bar: np.ndarray, r: float, per_radius: int) -> np.ndarray:
    fracs = np.arange(1, per_radius + 1) / per_radius
    if x_bar.size == 1:
        offs = np.concatenate([-fracs, fracs])[:, None] * r
    else:
        ang = np.arange(4 * per_radius) * (2 * math.pi / (4 * per_radius))
        unit = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        offs = (fracs[:, None, None] * unit[None, :, :]).reshape(-1, 2) * r
    return x_bar + offs


def lsc_probe(f: GalleryFunction, x_bar, refinement_levels: int = 6, r0: float = 0.5,
              per_radius: int = 8, tol: float = 1e-9, box: Grid | None = None,
              shrink: float = 0.5) -> LscReport:
    """Sample ``f`` on shrinking punctured balls around ``x_bar``.

    At level ``j`` the estimate is the minimum of ``f`` over sample points with
    ``0 < |x - x_bar| <= r0 * 2**-j``.  The deficit ``f(x_bar) - estimate`` must
    vanish in the limit for ``f`` to be lsc at ``x_bar``; the probe reports
    lsc as violated unless the final deficit is within ``tol`` or the deficits
    decrease at every level and end below ``shrink`` times the first one.
    """
    if refinement_levels < 2:
        raise PreconditionError("lsc_probe needs at least 2 levels")
    x_bar = np.atleast_1d(np.asarray(x_bar, dtype=float))
    fx = evaluate(f, x_bar, box)
    radii, ests = [], []
    for j in range(refinement_levels):
        r = r0 * 2.0 ** -j
        pts = _punctured_samples(x_bar, r, per_radius)
        if box is not None:
            lo, hi = np.array(box.lower), np.array(box.upper)
            pts = pts[np.all((pts >= lo) & (pts <= hi), axis=1)]
        vals = f(pts)
        radii.append(r)
        ests.append(float(vals.min()) if vals.size else math.inf)
    deficit = [max(fx - e, 0.0) if math.isfinite(fx) else 0.0 for e in ests]
    vanishing = (all(b < a for a, b in zip(deficit, deficit[1:]))
                 and deficit[-1] <= shrink * deficit[0])
    ok = deficit[-1] <= tol or vanishing
    verdict = "consistent with lsc at x_bar" if ok else "lsc violated at x_bar"
    return LscReport(tuple(x_bar.tolist()), fx, tuple(radii), tuple(ests), tol, verdict)


# --------------------------------------------------------------------------
# Elementary families and their hulls


@dataclass(frozen=True)
class ConeFamily:
    """Members ``x -> c - k*|x - y|`` with apex ``y`` a grid node and any level ``c``."""

    k: float

    def __post_init__(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise PreconditionError("cone slope must be finite and >= 0")

    def member(self, grid: Grid, apex: int, level: float) -> np.ndarray:
        return level - self.k * grid.distances_from(apex)

    def is_member(self, grid: Grid, values: np.ndarray, tol: float = 1e-12) -> bool:
        values = np.asarray(values, dtype=float)
        apex = int(np.argmax(values))
        return bool(np.max(np.abs(self.member(grid, apex, values[apex]) - values)) <= tol)


@dataclass(frozen=True)
class AffineFamily:
    """Members ``x -> <s, x> + b`` for ``s`` in a finite slope set and any ``b``."""

    slopes: tuple

    def __post_init__(self):
        s = tuple(tuple(float(c) for c in np.atleast_1d(v)) for v in self.slopes)
        if not s:
            raise PreconditionError("AffineFamily needs at least one slope")
        object.__setattr__(self, "slopes", s)

    def member(self, grid: Grid, slope, intercept: float) -> np.ndarray:
        return grid.points @ np.asarray(slope, dtype=float) + intercept

    def is_member(self, grid: Grid, values: np.ndarray, tol: float = 1e-12) -> bool:
        values = np.asarray(values, dtype=float)
        for s in self.slopes:
            lin = grid.points @ np.asarray(s)
            b = values[0] - lin[0]
            if np.max(np.abs(lin + b - values)) <= tol:
                return True
        return False


def _member_levels(f: SampledFunction, fam) -> tuple[list[np.ndarray], np.ndarray]:
    """For every family member shape, the highest level that keeps it below ``f``."""
    grid, fin = f.grid, f.finite
    shapes, levels = [], []
    if isinstance(fam, ConeFamily):
        for y in range(grid.size):
            shape = -fam.k * grid.distances_from(y)
            shapes.append(shape)
            levels.append(np.min(f.values[fin] - shape[fin]))
    elif isinstance(fam, AffineFamily):
        for s in fam.slopes:
            if len(s) != grid.dim:
                raise PreconditionError("slope dimension does not match the grid")
            shape = grid.points @ np.asarray(s)
            shapes.append(shape)
            levels.append(np.min(f.values[fin] - shape[fin]))
    else:
        raise UsageError(f"unknown elementary family {fam!r}")
    return shapes, np.asarray(levels)


def family_hull(f: SampledFunction, fam: ConeFamily | AffineFamily,
                max_rounds: int = 64) -> SampledFunction | None:
    """Upper envelope of all members of ``fam`` lying below ``f`` on the grid.

    Returns ``None`` when no member minorizes ``f`` (``f`` is then not
    ``fam``-convexifiable).  The envelope is re-applied until it is
    bit-for-bit stable so that ``family_hull`` is exactly idempotent.
    """
    f.require_no_neginf("family_hull")
    if not f.finite.any():
        return None
    current = f
    for _ in range(max_rounds):
        shapes, levels = _member_levels(current, fam)
        hull = np.full(f.grid.size, -math.inf)
        for shape, c in zip(shapes, levels):
            np.maximum(hull, c + shape, out=hull)
        # mathematically hull <= f; the clamp removes last-ulp overshoot
        hull = np.minimum(hull, current.values)
        if np.array_equal(hull, current.values):
            break
        current = SampledFunction(f.grid, hull, f.name)
    return SampledFunction(f.grid, current.values, _tag("hull:", f.name))
