"""Constructive Ekeland refinement: from an approximate minorant to an exact support.

Given a Lipschitz concave minorant ``h`` of ``f`` with ``f(x_bar) - h(x_bar) <= eps``,
iterate ``x <- argmin g(y) + (eps/delta)|y - x|`` with ``g = f - h`` until the
iterate minimizes its own perturbed objective.  The fixed point ``x_delta``
lies within ``delta`` of ``x_bar`` and ``h - (eps/delta)|. - x_delta| + g(x_delta)``
touches ``f`` there from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envelopes import (
    ConeFunction, GridMinorant, lipschitz_lower_envelope, lipschitz_modulus,
)
from .errors import DomainError, PreconditionError
from .function_model import SampledFunction, _dist

__all__ = ["EkelandResult", "ekeland_refine", "DensityScan", "density_scan"]


@dataclass(frozen=True, eq=False)
class EkelandResult:
    x_bar: tuple[float, ...]
    x_delta: tuple[float, ...]
    index: int
    support: GridMinorant
    epsilon: float
    delta: float
    iterations: int
    descent_slack: float
    distance: float
    strict_min_slack: float
    fixed_point_slack: float
    touch_error: float
    minorant_violation: float

    def invariants_hold(self, tol: float) -> bool:
        return (self.descent_slack >= -tol and self.distance <= self.delta + tol
                and self.fixed_point_slack >= -tol and self.touch_error <= tol
                and self.minorant_violation <= tol)

    def to_json(self) -> dict:
        return {
            "x_bar": list(self.x_bar), "x_delta": list(self.x_delta),
            "epsilon": self.epsilon, "delta": self.delta, "iterations": self.iterations,
            "residuals": {
                "descent_slack": self.descent_slack, "distance": self.distance,
                "strict_min_slack": self.strict_min_slack,
                "fixed_point_slack": self.fixed_point_slack,
                "touch_error": self.touch_error, "minorant_violation": self.minorant_violation,
            },
            "support": {"K": self.support.K, "values": self.support.values.tolist()},
        }


def _minorant_values(f: SampledFunction, h) -> np.ndarray:
    if isinstance(h, ConeFunction):
        return h.on(f.grid)
    if isinstance(h, (GridMinorant, SampledFunction)):
        if h.grid != f.grid:
            raise PreconditionError("minorant lives on a different grid")
        v = np.asarray(h.values, dtype=float)
    else:
        v = np.asarray(h, dtype=float).ravel()
    if v.size != f.grid.size or not np.isfinite(v).all():
        raise PreconditionError("minorant must be real-valued on every node")
    return v


def ekeland_refine(f: SampledFunction, h, x_bar, epsilon: float | None = None,
                   delta: float | None = None, tol: float | None = None) -> EkelandResult:
    """Move from ``x_bar`` to a nearby node where ``f`` has a supporting concave minorant.

    ``epsilon`` defaults to the gap ``f(x_bar) - h(x_bar)`` and ``delta`` to
    ``sqrt(epsilon)``.  Ties in the argmin go to the smallest node index.
    """
    tol = f.tol_feas() if tol is None else tol
    hv = _minorant_values(f, h)
    fin = f.finite
    if np.any(hv[fin] > f.values[fin] + tol):
        raise PreconditionError("h is not a minorant of f")
    i0 = f.index(x_bar)
    if not math.isfinite(f.values[i0]):
        raise DomainError("f(x_bar) must be finite")
    g = np.where(fin, f.values - hv, math.inf)
    g = np.maximum(g, 0.0)  # h <= f up to tol: clip rounding noise
    gap = float(g[i0])
    if epsilon is None:
        epsilon = gap if gap > 0 else tol
    if delta is None:
        delta = math.sqrt(epsilon)
    if not (epsilon > 0 and delta > 0):
        raise PreconditionError("epsilon and delta must be positive")
    if gap > epsilon + tol:
        raise PreconditionError(
            f"epsilon={epsilon!r} is below the gap f(x_bar) - h(x_bar) = {gap!r}")
    c = epsilon / delta
    grid = f.grid

    cur, iters = i0, 0
    while True:
        d = grid.distances_from(cur)
        obj = g + c * d
        nxt = int(np.argmin(obj))
        if not obj[nxt] < g[cur]:
            break
        cur = nxt
        iters += 1
        if iters > grid.size:
            raise RuntimeError("Ekeland iteration failed to terminate")  # cannot happen

    d_star = grid.distances_from(cur)
    d0 = float(d_star[i0])
    descent = float(g[i0] - g[cur] - c * d0)
    fixed = g + c * d_star - g[cur]
    others = fin & (np.arange(grid.size) != cur)
    strict = float(fixed[others].min()) if others.any() else math.inf
    support = hv - c * d_star + g[cur]
    touch = abs(float(support[cur] - f.values[cur]))
    viol = float(np.max(support[fin] - f.values[fin]))
    budget = lipschitz_modulus(SampledFunction(grid, hv)) + c
    return EkelandResult(
        tuple(grid.node(i0).tolist()), tuple(grid.node(cur).tolist()), cur,
        GridMinorant(grid, support, budget), float(epsilon), float(delta), iters,
        descent, d0, strict, float(fixed[fin].min()), touch, max(viol, 0.0))


@dataclass(frozen=True, eq=False)
class DensityScan:
    scanned: tuple[int, ...]
    results: tuple[EkelandResult, ...]
    certified: tuple[int, ...]
    covering_radius: float
    delta: float
    stride: int
    k: float

    def to_json(self) -> dict:
        return {
            "scanned": len(self.scanned), "certified_nodes": list(self.certified),
            "covering_radius": self.covering_radius, "delta": self.delta,
            "stride": self.stride, "k": self.k,
            "points": [{"x_bar": list(r.x_bar), "x_delta": list(r.x_delta),
                        "epsilon": r.epsilon, "iterations": r.iterations}
                       for r in self.results],
        }


def density_scan(f: SampledFunction, epsilon: float, delta: float, k_for_minorant: float,
                 stride: int = 1) -> DensityScan:
    """Run :func:`ekeland_refine` from every ``stride``-th finite node.

    The minorant is the ``k``-Lipschitz lower envelope of ``f``.  Where its gap
    at the start node exceeds ``epsilon``, that point runs with ``epsilon``
    raised to the gap, which keeps the distance bound ``delta``.  The covering
    radius is the largest distance from a finite node to the nearest
    certified point.
    """
    if stride < 1:
        raise PreconditionError("stride must be >= 1")
    f.require_proper("density_scan")
    env = lipschitz_lower_envelope(f, k_for_minorant)
    if not np.isfinite(env.values).all():
        raise PreconditionError("lower envelope is not finite: no Lipschitz minorant")
    fin_idx = f.effective_domain
    scanned = tuple(int(i) for i in fin_idx[::stride])
    tol = f.tol_feas()
    results = []
    for i in scanned:
        gap = float(f.values[i] - env.values[i])
        eps = max(epsilon, gap)
        results.append(ekeland_refine(f, env, tuple(f.grid.node(i)), eps, delta, tol))
    certified = tuple(sorted({r.index for r in results}))
    pts = f.grid.points
    cert_pts = pts[list(certified)]
    radius = 0.0
    for i in fin_idx:
        radius = max(radius, float(_dist(cert_pts - pts[i], f.grid.norm).min()))
    return DensityScan(scanned, tuple(results), certified, radius, float(delta), stride,
                       float(k_for_minorant))
