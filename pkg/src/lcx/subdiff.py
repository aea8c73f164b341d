"""Subgradients built from Lipschitz concave functions vanishing at the origin.

A candidate ``l`` at a base node ``x_bar`` is checked through its supporting
function ``h(x) = l(x - x_bar) + f(x_bar)``.  Superdifferential versions of
every check are obtained by mirroring through ``-f``
(:func:`superdifferential_dual`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .envelopes import (
    GridMinorant, MaximalityCertificate, certify_maximality, default_budget,
    lipschitz_modulus,
)
from .errors import DomainError, PreconditionError, UsageError
from .function_model import GalleryFunction, Grid, SampledFunction, _dist, sample

__all__ = [
    "SubgradientCandidate", "SubgradientCheck", "CalmnessCertificate", "AffineTestReport",
    "calmness_modulus", "subdifferentiability_oracle", "cone_subgradient",
    "check_subgradient", "check_maximality", "superdifferential_dual",
    "affine_two_sided_test",
]

STABILIZATION = 0.10


@dataclass(frozen=True, eq=False)
class SubgradientCandidate:
    """A functional ``l`` with ``l(0) = 0``, anchored at ``(base, anchor)``.

    Forms: ``cone`` (``l(z) = -coef*|z|``, concave for ``coef >= 0``),
    ``affine`` (``l(z) = <linear, z>``), or ``grid`` (a table of ``l(x - base)``
    over the nodes of ``grid``).  Negative ``coef`` and negated grid tables
    arise for supergradients.
    """

    form: str
    base: tuple[float, ...]
    anchor: float
    coef: float = 0.0
    linear: tuple[float, ...] = ()
    grid: Grid | None = None
    table: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(b) for b in np.atleast_1d(self.base)))
        if self.form == "grid":
            t = np.array(self.table, dtype=float).ravel()
            if self.grid is None or t.size != self.grid.size:
                raise PreconditionError("grid-form candidate needs one value per grid node")
            if t[self.grid.node_index(self.base)] != 0.0:
                raise PreconditionError("candidate must vanish at the origin: l(0) = 0")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)
        elif self.form == "affine":
            object.__setattr__(self, "linear", tuple(float(c) for c in np.atleast_1d(self.linear)))
        elif self.form != "cone":
            raise UsageError(f"unknown candidate form {self.form!r}")

    @classmethod
    def cone(cls, base, anchor: float, k: float) -> "SubgradientCandidate":
        return cls("cone", base, float(anchor), coef=float(k))

    @classmethod
    def affine(cls, base, anchor: float, slope) -> "SubgradientCandidate":
        return cls("affine", base, float(anchor), linear=tuple(np.atleast_1d(slope)))

    @classmethod
    def from_support(cls, grid: Grid, base, values) -> "SubgradientCandidate":
        """Grid candidate whose supporting function is ``values``."""
        v = np.asarray(values, dtype=float).ravel()
        a = v[grid.node_index(base)]
        return cls("grid", base, float(a), grid=grid, table=v - a)

    @classmethod
    def from_callable(cls, grid: Grid, base, anchor: float, l) -> "SubgradientCandidate":
        """Tabulate ``l`` (taking an ``(m, dim)`` array of offsets) on ``grid``."""
        z = grid.points - np.asarray(base, dtype=float)
        t = np.asarray(l(z), dtype=float).ravel()
        t = t - t[grid.node_index(base)]
        return cls("grid", base, float(anchor), grid=grid, table=t)

    def offsets(self, grid: Grid) -> np.ndarray:
        """``l(x - base)`` at every node of ``grid``."""
        if self.form == "cone":
            return -self.coef * _dist(grid.points - np.asarray(self.base), grid.norm)
        if self.form == "affine":
            if len(self.linear) != grid.dim:
                raise PreconditionError("affine slope dimension does not match the grid")
            return (grid.points - np.asarray(self.base)) @ np.asarray(self.linear)
        if grid != self.grid:
            raise PreconditionError("grid-form candidate evaluated on a foreign grid")
        return np.asarray(self.table)

    def support(self, grid: Grid) -> np.ndarray:
        """Supporting function ``x -> l(x - base) + anchor`` on ``grid``."""
        return self.offsets(grid) + self.anchor

    def scaled(self, lam: float) -> "SubgradientCandidate":
        lam = float(lam)
        if self.form == "cone":
            return replace(self, anchor=lam * self.anchor, coef=lam * self.coef)
        if self.form == "affine":
            return replace(self, anchor=lam * self.anchor,
                           linear=tuple(lam * c for c in self.linear))
        return replace(self, anchor=lam * self.anchor, table=lam * self.table)

    def negated(self) -> "SubgradientCandidate":
        return self.scaled(-1.0)

    def add(self, other: "SubgradientCandidate", grid: Grid | None = None) -> "SubgradientCandidate":
        """Pointwise sum of two candidates at the same base."""
        if other.base != self.base:
            raise PreconditionError("candidates must share the base point")
        anchor = self.anchor + other.anchor
        if self.form == other.form == "cone":
            return SubgradientCandidate.cone(self.base, anchor, self.coef + other.coef)
        if self.form == other.form == "affine":
            lin = np.asarray(self.linear) + np.asarray(other.linear)
            return SubgradientCandidate.affine(self.base, anchor, lin)
        grid = grid or self.grid or other.grid
        if grid is None:
            raise UsageError("summing different candidate forms needs a grid")
        return SubgradientCandidate("grid", self.base, anchor, grid=grid,
                                    table=self.offsets(grid) + other.offsets(grid))

    def is_concave(self, grid: Grid | None = None, tol: float = 1e-12) -> bool | None:
        """Structural concavity; ``None`` when undecidable (2-D grid tables)."""
        if self.form == "cone":
            return self.coef >= 0
        if self.form == "affine":
            return True
        if self.grid.dim != 1:
            return None
        t = self.table
        return bool(np.all(t[:-2] - 2 * t[1:-1] + t[2:] <= tol))

    def to_json(self) -> dict:
        d = {"form": self.form, "base": list(self.base), "anchor": self.anchor}
        if self.form == "cone":
            d["k"] = self.coef
        elif self.form == "affine":
            d["slope"] = list(self.linear)
        else:
            d["grid"] = self.grid.to_json()
            d["table"] = self.table.tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SubgradientCandidate":
        if d["form"] == "cone":
            return cls.cone(d["base"], d["anchor"], d["k"])
        if d["form"] == "affine":
            return cls.affine(d["base"], d["anchor"], d["slope"])
        return cls("grid", d["base"], d["anchor"], grid=Grid.from_json(d["grid"]),
                   table=np.asarray(d["table"], dtype=float))


@dataclass(frozen=True)
class SubgradientCheck:
    ok: bool
    worst_slack: float
    worst_node: int
    tol: float

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"ok": self.ok, "worst_slack": self.worst_slack,
                "worst_node": self.worst_node, "tol_feas": self.tol}


def _finite_at(f: SampledFunction, x_bar) -> tuple[int, float]:
    idx = f.index(x_bar)
    fx = float(f.values[idx])
    if not math.isfinite(fx):
        raise DomainError(f"f(x_bar) must be finite, got {fx}")
    return int(idx), fx


def calmness_modulus(f: SampledFunction, x_bar) -> float:
    """Least ``k`` with ``f(x) >= f(x_bar) - k|x - x_bar|`` at every node."""
    idx, fx = _finite_at(f, x_bar)
    d = f.grid.distances_from(idx)
    mask = f.finite & (d > 0)
    if not mask.any():
        return 0.0
    num = np.maximum(fx - f.values[mask], 0.0)
    return float(np.max(num / d[mask]))


def check_subgradient(f: SampledFunction, cand: SubgradientCandidate,
                      tol: float | None = None) -> SubgradientCheck:
    """Is ``f(x) - f(x_bar) >= l(x - x_bar)`` at every node (within ``tol``)?"""
    idx, fx = _finite_at(f, cand.base)
    tol = f.tol_feas() if tol is None else tol
    slack = np.full(f.grid.size, math.inf)
    fin = f.finite
    # same rounding as ``support``: a pass at tol 0 means support <= f exactly
    slack[fin] = f.values[fin] - (cand.offsets(f.grid)[fin] + fx)
    worst = int(np.argmin(slack))
    return SubgradientCheck(bool(slack[worst] >= -tol), float(slack[worst]), worst, tol)


def cone_subgradient(f: SampledFunction, x_bar) -> SubgradientCandidate:
    """Cone candidate with the grid calmness modulus as slope.

    The slope is nudged up by ulps until the supporting cone is a node-wise
    minorant in floating point, so the check holds with zero tolerance.
    """
    idx, fx = _finite_at(f, x_bar)
    base = tuple(f.grid.node(idx))
    k = calmness_modulus(f, base)
    for _ in range(64):
        cand = SubgradientCandidate.cone(base, fx, k)
        if check_subgradient(f, cand, tol=0.0):
            return cand
        k = float(np.nextafter(k, math.inf))
    return cand


def check_maximality(f: SampledFunction, cand: SubgradientCandidate,
                     K: float | None = None, **lp_options) -> MaximalityCertificate:
    """Is ``cand`` a maximal subgradient (1-D, relative to the grid class)?

    Runs the maximality LP pinned at the base node and seeded with the
    candidate's supporting function.  ``K`` defaults to the larger of twice the
    grid modulus of ``f`` and the modulus of the supporting function.
    """
    if f.grid.dim != 1:
        raise PreconditionError("maximality is certified on 1-D grids only")
    chk = check_subgradient(f, cand)
    if not chk:
        raise PreconditionError(
            f"candidate is not a subgradient (slack {chk.worst_slack:.3g} at node {chk.worst_node})")
    support = cand.support(f.grid)
    if K is None:
        K = max(default_budget(f) if f.finite.all() else 0.0,
                lipschitz_modulus(SampledFunction(f.grid, support)))
    return certify_maximality(f, support, K, pin=cand.base, **lp_options)


def _mirror(obj):
    if isinstance(obj, (SampledFunction, GalleryFunction)):
        return obj.negate()
    if isinstance(obj, SubgradientCandidate):
        return obj.negated()
    if isinstance(obj, GridMinorant):
        return GridMinorant(obj.grid, -obj.values, obj.K)
    if isinstance(obj, MaximalityCertificate):
        imp = None if obj.improvement is None else _mirror(obj.improvement)
        return replace(obj, improvement=imp)
    if isinstance(obj, tuple) and not all(isinstance(v, (int, float)) for v in obj):
        return tuple(_mirror(v) for v in obj)
    return obj


def superdifferential_dual(op, f, *args, **kwargs):
    """Run ``op`` on ``-f`` with mirrored arguments and mirror the result back.

    Functions, candidates and minorants are negated on the way in and out;
    points, scalars and booleans pass through unchanged.  Supergradients of
    ``f`` are exactly the negated subgradients of ``-f``.
    """
    args = tuple(_mirror(a) for a in args)
    return _mirror(op(_mirror(f), *args, **kwargs))


@dataclass(frozen=True, eq=False)
class CalmnessCertificate:
    x_bar: tuple[float, ...]
    function: str
    modulus: float
    modulus_sequence: tuple[float, ...]
    spacings: tuple[float, ...]
    verdict: str
    K_cap: float
    support_check: SubgradientCheck | None
    stabilization: float = STABILIZATION
    note: str = ("grid moduli are always finite; the verdict reads the refinement trend, "
                 "it is not a proof")

    def to_json(self) -> dict:
        return {
            "x_bar": list(self.x_bar), "function": self.function, "modulus": self.modulus,
            "modulus_sequence": list(self.modulus_sequence), "spacings": list(self.spacings),
            "verdict": self.verdict,
            "tolerances": {"K_cap": self.K_cap, "stabilization": self.stabilization},
            "support_check": None if self.support_check is None else self.support_check.to_json(),
            "note": self.note,
        }


def _default_base_grid(dim: int, norm) -> Grid:
    if dim == 1:
        return Grid.line(-1.0, 1.0, 201, norm)
    return Grid.square(-1.0, 1.0, 21, norm)


def subdifferentiability_oracle(f: GalleryFunction, x_bar, refinement_levels: int = 5,
                                K_cap: float = 100.0, grid: Grid | None = None,
                                norm=2.0) -> CalmnessCertificate:
    """Track the calmness modulus at ``x_bar`` over nested grid refinements.

    ``subdifferentiable``: every modulus <= ``K_cap`` and the last relative change
    is within 10%.  ``diverging``: moduli strictly increase and either pass
    ``K_cap`` or are still growing by more than 10% at the last level.
    Anything else is ``inconclusive``.
    """
    if refinement_levels < 2:
        raise PreconditionError("the oracle needs at least 2 refinement levels")
    g = grid or _default_base_grid(f.dim, norm)
    x_bar = tuple(np.atleast_1d(np.asarray(x_bar, dtype=float)).tolist())
    mods, hs = [], []
    fs = None
    for _ in range(refinement_levels):
        fs = sample(f, g)
        mods.append(calmness_modulus(fs, x_bar))
        hs.append(max(g.spacing))
        g = g.refine(2)
    last, prev = mods[-1], mods[-2]
    rel = (last - prev) / prev if prev > 0 else (0.0 if last == 0 else math.inf)
    increasing = all(b > a for a, b in zip(mods, mods[1:]))
    if all(m <= K_cap for m in mods) and abs(rel) <= STABILIZATION:
        verdict = "subdifferentiable"
    elif increasing and (last > K_cap or rel > STABILIZATION):
        verdict = "diverging"
    else:
        verdict = "inconclusive"
    support = None
    if verdict == "subdifferentiable":
        support = check_subgradient(fs, SubgradientCandidate.cone(x_bar, fs.at(x_bar), last))
    return CalmnessCertificate(x_bar, f.label, last, tuple(mods), tuple(hs), verdict,
                               float(K_cap), support)


@dataclass(frozen=True)
class AffineTestReport:
    status: str
    lower_ok: bool
    upper_ok: bool
    slope_gap: float
    max_deviation: float
    tol: float

    def to_json(self) -> dict:
        return {"status": self.status, "lower_ok": self.lower_ok, "upper_ok": self.upper_ok,
                "slope_gap": self.slope_gap, "max_deviation": self.max_deviation,
                "tol_feas": self.tol}


def affine_two_sided_test(f: SampledFunction, x_bar, s1, s2,
                          tol: float | None = None) -> AffineTestReport:
    """Check ``s1(x-x_bar) + f(x_bar) <= f(x) <= s2(x-x_bar) + f(x_bar)`` node-wise.

    When both sides hold, ``f`` must be affine with slope ``s1 = s2``; the
    report carries the largest node-wise deviation from that affine function.
    """
    idx, fx = _finite_at(f, x_bar)
    tol = f.tol_feas() if tol is None else tol
    s1 = np.atleast_1d(np.asarray(s1, dtype=float))
    s2 = np.atleast_1d(np.asarray(s2, dtype=float))
    z = f.grid.points - f.grid.node(idx)
    lo = z @ s1 + fx
    hi = z @ s2 + fx
    v = f.values
    lower_ok = bool(np.all(v >= lo - tol))
    upper_ok = bool(np.all(v <= hi + tol))
    gap = float(np.max(np.abs(s1 - s2)))
    fin = f.finite
    dev = float(np.max(np.abs(v[fin] - lo[fin]))) if fin.any() else 0.0
    if not (lower_ok and upper_ok):
        status = "hypothesis not met"
    elif gap <= tol and dev <= tol:
        status = "affine confirmed"
    else:
        status = "sandwich holds but slopes differ (x_bar on the boundary)"
    return AffineTestReport(status, lower_ok, upper_ok, gap, dev, tol)
