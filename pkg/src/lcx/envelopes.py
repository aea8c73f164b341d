"""Lipschitz envelopes, cone and affine minorants, and maximal concave minorants.

All suprema and infima range over grid nodes, so every quantity here is an
exact maximum or minimum over a finite set.  The O(N^2) loops are evaluated
in row blocks to keep memory bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DomainError, PreconditionError
from .function_model import (
    GalleryFunction, Grid, LscReport, SampledFunction, _dist, distances, lsc_probe, sample,
)

__all__ = [
    "ConeFunction", "GridMinorant", "MinorantCheck", "MaximalityCertificate",
    "cone_minorant", "lipschitz_upper_envelope", "lipschitz_lower_envelope",
    "envelope_argext", "lipschitz_modulus", "lipschitz_modulus_bruteforce",
    "LcTestReport", "lc_convexity_test", "validate_minorant", "certify_maximality",
    "maximal_minorant", "legendre_fenchel", "affine_maximal_minorant",
    "is_discretely_convex", "default_budget",
]

_BLOCK = 1 << 22  # matrix entries per row block


def _row_blocks(n_rows: int, n_cols: int):
    step = max(1, _BLOCK // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


@dataclass(frozen=True)
class ConeFunction:
    """``x -> level - slope * |x - apex|``: concave and ``slope``-Lipschitz."""

    apex: tuple[float, ...]
    slope: float
    level: float

    def __post_init__(self):
        if not (self.slope >= 0 and math.isfinite(self.slope)):
            raise PreconditionError("cone slope must be finite and >= 0")
        object.__setattr__(self, "apex", tuple(float(a) for a in np.atleast_1d(self.apex)))

    def on(self, grid: Grid) -> np.ndarray:
        return self.level - self.slope * grid.distances_from(grid.node_index(self.apex))

    def sampled(self, grid: Grid) -> SampledFunction:
        return SampledFunction(grid, self.on(grid), f"cone@{self.apex}")

    def to_json(self) -> dict:
        return {"apex": list(self.apex), "slope": self.slope, "level": self.level}


@dataclass(frozen=True)
class MinorantCheck:
    """Worst violations of the three grid-minorant conditions (all >= 0 means fine)."""

    minorant: float
    concavity: float
    lipschitz: float
    tol: float

    @property
    def ok(self) -> bool:
        return max(self.minorant, self.concavity, self.lipschitz) <= self.tol

    def to_json(self) -> dict:
        return {"minorant_violation": self.minorant, "concavity_violation": self.concavity,
                "lipschitz_violation": self.lipschitz, "tol_feas": self.tol, "ok": self.ok}


@dataclass(frozen=True, eq=False)
class GridMinorant:
    """Real values on a grid meant to be a concave, K-Lipschitz minorant of some f."""

    grid: Grid
    values: np.ndarray
    K: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.grid.size or not np.isfinite(v).all():
            raise PreconditionError("a grid minorant needs one finite value per node")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.K >= 0:
            raise PreconditionError("Lipschitz budget must be >= 0")

    def check(self, f: SampledFunction, tol: float | None = None) -> MinorantCheck:
        return validate_minorant(f, self.values, self.K, tol)

    def sampled(self, name: str | None = None) -> SampledFunction:
        return SampledFunction(self.grid, self.values, name)

    def to_json(self) -> dict:
        return {"grid": self.grid.to_json(), "values": self.values.tolist(), "K": self.K}


@dataclass(frozen=True, eq=False)
class MaximalityCertificate:
    """Outcome of the maximality LP for one candidate minorant.

    Maximality is relative to the class of grid-concave, ``K``-Lipschitz grid
    minorants of ``f`` (optionally pinned to ``f`` at one node).
    """

    status: str
    lp_objective_gap: float
    improvement: GridMinorant | None
    K: float
    pin: int | None
    tol_lp: float
    tol_feas: float
    warnings: tuple[str, ...] = ()
    klass: str = "grid-concave K-Lipschitz grid minorants"

    @property
    def maximal(self) -> bool:
        return self.status == "maximal"

    def to_json(self) -> dict:
        return {
            "status": self.status, "lp_objective_gap": self.lp_objective_gap,
            "improvement": None if self.improvement is None else self.improvement.values.tolist(),
            "K": self.K, "pin": self.pin, "class": self.klass,
            "tolerances": {"tol_lp": self.tol_lp, "tol_feas": self.tol_feas},
            "warnings": list(self.warnings),
        }


def cone_minorant(f: SampledFunction, y, k: float) -> ConeFunction:
    """Cone with apex ``y`` and level ``f(y)``.

    It lies below ``f`` only if ``f`` is ``k``-Lipschitz (or calm enough at
    ``y``); that is for the caller to check.
    """
    if not k >= 0:
        raise PreconditionError("k must be >= 0")
    fy = f.at(y)
    if not math.isfinite(fy):
        raise DomainError(f"f(y) must be finite, got {fy}")
    return ConeFunction(tuple(f.grid.node(f.index(y))), float(k), fy)


# --------------------------------------------------------------------------
# Pasch-Hausdorff envelopes


def _envelope_pass(grid: Grid, values: np.ndarray, k: float, lower: bool) -> np.ndarray:
    fin = np.isfinite(values)
    fv = values[fin]
    out = np.empty(grid.size)
    for rows in _row_blocks(grid.size, int(fin.sum())):
        d = distances(grid, rows)[:, fin]
        if lower:
            out[rows] = np.min(fv[None, :] + k * d, axis=1)
        else:
            out[rows] = np.max(fv[None, :] - k * d, axis=1)
    return out


def _envelope(f: SampledFunction, k: float, lower: bool, max_rounds: int = 64) -> np.ndarray:
    if not (k >= 0 and math.isfinite(k)):
        raise PreconditionError("k must be finite and >= 0")
    f.require_no_neginf("Lipschitz envelope")
    if not f.finite.any():
        raise PreconditionError("Lipschitz envelope of an improper function (no finite value)")
    cur = _envelope_pass(f.grid, f.values, k, lower)
    # Re-apply until bit-stable: mathematically one pass suffices, but
    # rounding can leave last-ulp slack that breaks exact idempotence.
    for _ in range(max_rounds):
        nxt = _envelope_pass(f.grid, cur, k, lower)
        if np.array_equal(nxt, cur):
            break
        cur = nxt
    return cur


def lipschitz_lower_envelope(f: SampledFunction, k: float) -> SampledFunction:
    """Greatest ``k``-Lipschitz minorant: ``min_y f(y) + k|x - y|`` over finite nodes."""
    return SampledFunction(f.grid, _envelope(f, k, lower=True),
                           None if f.name is None else f"E-[{k!r}]{f.name}")


def lipschitz_upper_envelope(f: SampledFunction, k: float) -> SampledFunction:
    """Least ``k``-Lipschitz majorant of ``f`` on its finite nodes: ``max_y f(y) - k|x - y|``.

    Nodes where ``f`` is ``+inf`` do not enter the maximum, so there the
    envelope is finite.
    """
    return SampledFunction(f.grid, _envelope(f, k, lower=False),
                           None if f.name is None else f"E+[{k!r}]{f.name}")


def envelope_argext(f: SampledFunction, k: float, lower: bool = True) -> np.ndarray:
    """Node index attaining each envelope value (smallest index on ties)."""
    fin = np.flatnonzero(f.finite)
    fv = f.values[fin]
    arg = np.empty(f.grid.size, dtype=int)
    for rows in _row_blocks(f.grid.size, fin.size):
        d = distances(f.grid, rows)[:, fin]
        block = fv[None, :] + k * d if lower else -(fv[None, :] - k * d)
        arg[rows] = fin[np.argmin(block, axis=1)]
    return arg


def lipschitz_modulus_bruteforce(f: SampledFunction) -> float:
    """Max of ``|f(x) - f(y)| / |x - y|`` over all pairs of finite nodes."""
    fin = np.flatnonzero(f.finite)
    if fin.size <= 1:
        return 0.0
    fv = f.values[fin]
    pts = f.grid.points[fin]
    best = 0.0
    for rows in _row_blocks(fin.size, fin.size):
        d = _dist(pts[rows][:, None, :] - pts[None, :, :], f.grid.norm)
        num = np.abs(fv[rows][:, None] - fv[None, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(d > 0, num / np.where(d > 0, d, 1.0), 0.0)
        best = max(best, float(q.max()))
    return best


def lipschitz_modulus(f: SampledFunction) -> float:
    """Grid Lipschitz modulus of ``f`` restricted to its finite nodes.

    On a line the steepest chord is always between consecutive finite nodes,
    so the 1-D case is linear time; 2-D falls back to all pairs.
    """
    if f.grid.dim != 1:
        return lipschitz_modulus_bruteforce(f)
    fin = np.flatnonzero(f.finite)
    if fin.size <= 1:
        return 0.0
    x = f.grid.points[fin, 0]
    return float(np.max(np.abs(np.diff(f.values[fin])) / np.diff(x)))


def default_budget(f: SampledFunction) -> float:
    """Default Lipschitz budget for maximal minorants: twice the grid modulus of f."""
    if not f.finite.all():
        raise PreconditionError("f has +inf nodes: the Lipschitz budget K must be given")
    return 2.0 * lipschitz_modulus(f)


# --------------------------------------------------------------------------
# LC-convexity evidence


@dataclass(frozen=True, eq=False)
class LcTestReport:
    function: str
    witness_k: float | None
    lower_bound: SampledFunction | None
    boundary_attained: bool
    lsc: tuple[LscReport, ...]
    verdict: str
    caveats: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "function": self.function, "witness_k": self.witness_k,
            "boundary_attained": self.boundary_attained, "verdict": self.verdict,
            "lower_bound_min": None if self.lower_bound is None
            else float(self.lower_bound.values.min()),
            "lsc": [{"x_bar": list(r.x_bar), "verdict": r.verdict,
                     "liminf_estimates": list(r.liminf_estimates)} for r in self.lsc],
            "caveats": list(self.caveats),
        }


def lc_convexity_test(f: GalleryFunction, grid: Grid, k_schedule: Sequence[float],
                      probe_points=None, levels: int = 6) -> LcTestReport:
    """Grid evidence that ``f`` is lsc and bounded below by a Lipschitz function.

    The first scheduled ``k`` whose lower envelope is finite everywhere is the
    witness.  A witness is flagged as boundary-attained when the envelope's
    minimizing node sits on the box boundary away from the query node, i.e.
    the bound may be an artefact of truncating to the box.
    """
    ks = [float(k) for k in k_schedule]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise PreconditionError("k_schedule must be nonempty and increasing")
    fs = sample(f, grid)
    witness_k, lb, boundary = None, None, False
    caveats = []
    if fs.proper:
        for k in ks:
            env = lipschitz_lower_envelope(fs, k)
            if np.isfinite(env.values).all():
                witness_k, lb = k, env
                arg = envelope_argext(fs, k, lower=True)
                bmask = grid.boundary_mask()
                boundary = bool(np.any(bmask[arg] & (arg != np.arange(grid.size))))
                break
    if boundary:
        caveats.append("lower bound attained on the box boundary: may not extend beyond the box")
    if probe_points is None:
        mid = tuple((lo + hi) / 2 for lo, hi in zip(grid.lower, grid.upper))
        probe_points = [mid]
    r0 = min(grid.upper[i] - grid.lower[i] for i in range(grid.dim)) / 4
    lsc = tuple(lsc_probe(f, p, levels, r0=r0, box=grid) for p in probe_points)
    ok = witness_k is not None and all(r.consistent for r in lsc)
    verdict = "LC-convex (grid evidence)" if ok else "not LC-convex (grid evidence)"
    return LcTestReport(f.label, witness_k, lb, boundary, lsc, verdict, tuple(caveats))


# --------------------------------------------------------------------------
# Maximal concave minorants (1-D)


def _line_grid(f: SampledFunction) -> float:
    if f.grid.dim != 1:
        raise PreconditionError("maximal minorants are certified on 1-D grids only")
    return f.grid.spacing[0]


def validate_minorant(f: SampledFunction, values, K: float,
                      tol: float | None = None) -> MinorantCheck:
    """Independent feasibility check: minorant, grid concavity, all-pairs K-Lipschitz.

    Concavity is only checked on 1-D grids (second differences); on 2-D grids
    the concavity entry is reported as 0.
    """
    v = np.asarray(values, dtype=float)
    tol = f.tol_feas() if tol is None else tol
    fin = f.finite
    minor = float(np.max(v[fin] - f.values[fin], initial=0.0))
    conc = 0.0
    if f.grid.dim == 1 and v.size >= 3:
        conc = float(max(np.max(v[:-2] - 2 * v[1:-1] + v[2:]), 0.0))
    lip = 0.0
    for rows in _row_blocks(v.size, v.size):
        d = distances(f.grid, rows)
        excess = np.abs(v[rows][:, None] - v[None, :]) - K * d
        lip = max(lip, float(excess.max()))
    return MinorantCheck(minor, conc, max(lip, 0.0), tol)


def _as_values(grid: Grid, h) -> np.ndarray:
    if isinstance(h, (GridMinorant, SampledFunction)):
        if h.grid != grid:
            raise PreconditionError("minorant lives on a different grid")
        return np.asarray(h.values, dtype=float)
    if isinstance(h, ConeFunction):
        return h.on(grid)
    v = np.asarray(h, dtype=float).ravel()
    if v.size != grid.size:
        raise PreconditionError("minorant has the wrong number of values")
    return v


def _solve_lp(f: SampledFunction, seed: np.ndarray, K: float, pin: int | None,
              weights: np.ndarray):
    n = f.grid.size
    h = _line_grid(f)
    fv = f.values
    fin = np.isfinite(fv)
    lo = np.where(fin, np.minimum(seed, np.where(fin, fv, 0.0)), seed)
    hi = np.where(fin, fv, np.inf)
    if pin is not None:
        lo[pin] = hi[pin] = fv[pin]
    bounds = [(float(a), None if math.isinf(b) else float(b)) for a, b in zip(lo, hi)]
    rows, cols, data, rhs = [], [], [], []
    r = 0
    for j in range(1, n - 1):           # v[j-1] - 2 v[j] + v[j+1] <= 0
        rows += [r, r, r]
        cols += [j - 1, j, j + 1]
        data += [1.0, -2.0, 1.0]
        rhs.append(0.0)
        r += 1
    for j in range(n - 1):              # |v[j+1] - v[j]| <= K h
        for sgn in (1.0, -1.0):
            rows += [r, r]
            cols += [j + 1, j]
            data += [sgn, -sgn]
            rhs.append(K * h)
            r += 1
    A = sparse.csr_matrix((data, (rows, cols)), shape=(r, n))
    res = linprog(-weights, A_ub=A, b_ub=np.asarray(rhs), bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    return res


def _check_seed(f: SampledFunction, seed: np.ndarray, K: float, tol: float) -> None:
    chk = validate_minorant(f, seed, K, tol)
    if not chk.ok:
        raise PreconditionError(
            "seed is not a concave K-Lipschitz minorant of f "
            f"(minorant {chk.minorant:.3g}, concavity {chk.concavity:.3g}, "
            f"lipschitz {chk.lipschitz:.3g}, tol {tol:.3g})")


def _resolve_pin(f: SampledFunction, pin) -> int | None:
    if pin is None:
        return None
    idx = f.index(pin)
    if not math.isfinite(f.values[idx]):
        raise DomainError("cannot pin a minorant to f at a +inf node")
    return idx


def certify_maximality(f: SampledFunction, candidate, K: float | None = None, pin=None,
                       weights=None, tol_feas: float | None = None,
                       tol_lp: float | None = None) -> MaximalityCertificate:
    """Decide whether ``candidate`` is a maximal element of the minorant class.

    Solves ``max w.v`` over grid-concave, ``K``-Lipschitz ``v`` with
    ``candidate <= v <= f`` (and ``v = f`` at ``pin``).  A positive optimal gap
    means some feasible ``v`` dominates the candidate and beats it somewhere.
    """
    _line_grid(f)
    f.require_no_neginf("maximality LP")
    seed = _as_values(f.grid, candidate)
    K = default_budget(f) if K is None else float(K)
    tol_feas = f.tol_feas() if tol_feas is None else tol_feas
    tol_lp = 1e-7 * (1.0 + f.sup_norm()) if tol_lp is None else tol_lp
    _check_seed(f, seed, K, tol_feas)
    pin = _resolve_pin(f, pin)
    if pin is not None and seed[pin] < f.values[pin] - tol_feas:
        raise PreconditionError("pinned candidate does not touch f at the pin node")
    n = f.grid.size
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise PreconditionError("weights must be positive, one per node")
    res = _solve_lp(f, seed, K, pin, w)
    warnings = []
    if res.status == 2:
        raise PreconditionError("maximality LP infeasible: candidate violates the preconditions")
    if res.status == 3:
        raise PreconditionError("maximality LP unbounded: f has too few finite nodes")
    if res.status != 0:
        warnings.append(f"solver status {res.status}: {res.message}")
    v = np.asarray(res.x, dtype=float)
    gap = float(w @ (v - seed))
    chk = validate_minorant(f, v, K, tol_feas)
    if not chk.ok:
        warnings.append(f"optimizer fails feasibility re-check at tol_feas={tol_feas:.3g}: "
                        f"{chk.to_json()}")
    if gap <= tol_lp:
        return MaximalityCertificate("maximal", max(gap, 0.0), None, K, pin, tol_lp,
                                     tol_feas, tuple(warnings))
    return MaximalityCertificate("improvable", gap, GridMinorant(f.grid, v, K), K, pin,
                                 tol_lp, tol_feas, tuple(warnings))


def maximal_minorant(f: SampledFunction, seed, K: float | None = None, pin=None,
                     weights=None, tol_feas: float | None = None,
                     tol_lp: float | None = None):
    """Lift ``seed`` to a maximal concave ``K``-Lipschitz grid minorant of ``f``.

    Returns ``(minorant, certificate)``; the certificate comes from re-solving
    the LP seeded with the returned minorant.
    """
    _line_grid(f)
    f.require_no_neginf("maximal_minorant")
    seed_v = _as_values(f.grid, seed)
    K = default_budget(f) if K is None else float(K)
    first = certify_maximality(f, seed_v, K, pin, weights, tol_feas, tol_lp)
    if first.maximal:
        out = GridMinorant(f.grid, seed_v, K)
        return out, first
    out = first.improvement
    # The LP optimum may sit a hair outside the seed's box; re-centre it there.
    tol = first.tol_feas
    v = np.asarray(out.values, dtype=float)
    fin = f.finite
    v = np.where(fin, np.minimum(v, np.where(fin, f.values, 0.0)), v)
    out = GridMinorant(f.grid, v, K)
    second = certify_maximality(f, out, K, pin, weights, tol, first.tol_lp)
    if second.improvement is not None:
        warn = second.warnings + ("re-solve from the optimizer still gains; LP degenerate",)
        second = MaximalityCertificate(second.status, second.lp_objective_gap,
                                       second.improvement, K, second.pin, second.tol_lp,
                                       second.tol_feas, warn)
    return out, second


# --------------------------------------------------------------------------
# Legendre-Fenchel transform and affine maximal minorants


def legendre_fenchel(f: SampledFunction, slopes: Grid, return_flags: bool = False):
    """Discrete conjugate ``f*(s) = max_x s*x - f(x)`` over finite nodes.

    With ``return_flags`` also returns a boolean mask over ``slopes`` marking
    slopes whose maximum is attained only at an end node of the box, where
    box truncation makes ``f*`` an underestimate.
    """
    if f.grid.dim != 1 or slopes.dim != 1:
        raise PreconditionError("the conjugate is 1-D only")
    f.require_proper("legendre_fenchel")
    fin = np.flatnonzero(f.finite)
    x = f.grid.axis(0)[fin]
    fv = f.values[fin]
    s = slopes.axis(0)
    out = np.empty(s.size)
    inner = np.full(s.size, -math.inf)
    ends = (fin == 0) | (fin == f.grid.size - 1)
    for rows in _row_blocks(s.size, x.size):
        block = s[rows, None] * x[None, :] - fv[None, :]
        out[rows] = block.max(axis=1)
        if not ends.all():
            inner[rows] = block[:, ~ends].max(axis=1)
    name = None if f.name is None else f"({f.name})*"
    conj = SampledFunction(slopes, out, name)
    if not return_flags:
        return conj
    # flag only when no interior node ties the maximum (up to rounding)
    edge = inner < out - 1e-12 * (1.0 + np.abs(out))
    return conj, edge


def is_discretely_convex(f: SampledFunction, tol: float | None = None) -> bool:
    """Second differences >= -tol along runs of consecutive finite nodes."""
    if f.grid.dim != 1:
        raise PreconditionError("discrete convexity check is 1-D only")
    tol = f.tol_feas() if tol is None else tol
    v = f.values
    fin = np.isfinite(v)
    tri = fin[:-2] & fin[1:-1] & fin[2:]
    d2 = v[:-2] - 2 * v[1:-1] + v[2:]
    if not np.all(d2[tri] >= -tol):
        return False
    # the effective domain of a convex function is an interval
    idx = np.flatnonzero(fin)
    return idx.size == 0 or idx[-1] - idx[0] + 1 == idx.size


def affine_maximal_minorant(f: SampledFunction, s: float) -> GridMinorant:
    """Affine minorant ``x -> s*x - f*(s)`` of a convex ``f``; it touches f at the conjugate argmax."""
    if not is_discretely_convex(f):
        raise PreconditionError("affine_maximal_minorant requires a discretely convex f")
    single = Grid.line(float(s), float(s) + 1.0, 2)
    fstar = legendre_fenchel(f, single).values[0]
    x = f.grid.axis(0)
    return GridMinorant(f.grid, s * x - fstar, abs(float(s)))
