"""Global extremum certificates and checks of the subgradient calculus rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envelopes import (
    GridMinorant, MaximalityCertificate, certify_maximality, lipschitz_modulus, maximal_minorant,
)
from .errors import DomainError, PreconditionError
from .function_model import Grid, SampledFunction, random_piecewise_linear
from .subdiff import (
    SubgradientCandidate, check_subgradient, cone_subgradient, superdifferential_dual,
)

__all__ = [
    "ExtremumCertificate", "global_min_certificate", "global_max_certificate",
    "max_necessary_condition", "calculus_scaling_check", "calculus_sum_check",
    "calculus_domination_check", "DominationResult", "TrialRecord", "calculus_trials",
]


@dataclass(frozen=True, eq=False)
class ExtremumCertificate:
    kind: str
    x_bar: tuple[float, ...]
    holds: bool
    witness: object
    consistent: bool = True
    boundary: bool = False
    maximality: str | None = None
    classical_intervals: tuple[tuple[float, float], ...] = ()
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        w = self.witness
        if hasattr(w, "to_json"):
            w = w.to_json()
        return {
            "kind": self.kind, "x_bar": list(self.x_bar), "holds": self.holds,
            "witness": w, "consistent": self.consistent, "boundary": self.boundary,
            "maximality": self.maximality,
            "classical_intervals": [list(iv) for iv in self.classical_intervals],
            "notes": list(self.notes),
        }


def _node(f: SampledFunction, x_bar) -> tuple[int, float, tuple[float, ...]]:
    idx = f.index(x_bar)
    fx = float(f.values[idx])
    if not math.isfinite(fx):
        raise DomainError("f(x_bar) must be finite")
    return idx, fx, tuple(f.grid.node(idx).tolist())


def global_min_certificate(f: SampledFunction, x_bar) -> ExtremumCertificate:
    """Is ``x_bar`` a global minimizer of ``f`` over the grid?

    Decided twice: by a direct scan for the minimum, and by testing whether
    the zero functional is a subgradient at ``x_bar`` (zero tolerance).  On
    1-D grids with ``x_bar`` interior, the zero subgradient is also put
    through the maximality LP.  Disagreement marks the certificate
    inconsistent.
    """
    idx, fx, pt = _node(f, x_bar)
    fin = f.finite
    direct = bool(fx <= f.values[fin].min())
    zero = SubgradientCandidate.affine(pt, fx, np.zeros(f.grid.dim))
    member = check_subgradient(f, zero, tol=0.0)
    boundary = bool(f.grid.boundary_mask()[idx])
    consistent = direct == member.ok
    maximality, notes = None, []
    if member.ok:
        if f.grid.dim == 1 and not boundary:
            K = max(lipschitz_modulus(f), 1.0) if fin.all() else 1.0
            cert = certify_maximality(f, zero.support(f.grid), K, pin=pt)
            maximality = cert.status
            consistent = consistent and cert.maximal
        elif boundary:
            notes.append("x_bar on the box boundary: box-restricted maximality of 0 not tested")
        else:
            notes.append("zero functional is maximal by structure (no 2-D maximality LP)")
    if direct:
        witness = zero
    else:
        j = int(np.argmin(np.where(fin, f.values, math.inf)))
        witness = {"violating_node": j, "violating_point": f.grid.node(j).tolist(),
                   "value": float(f.values[j])}
    if not consistent:
        notes.append("INCONSISTENT: direct scan and subgradient route disagree")
    return ExtremumCertificate("global_min_iff", pt, direct and member.ok, witness, consistent,
                               boundary, maximality, (), tuple(notes))


def global_max_certificate(f: SampledFunction, x_bar) -> ExtremumCertificate:
    """Global maximum via the mirrored minimum certificate of ``-f``."""
    c = superdifferential_dual(global_min_certificate, f, x_bar)
    w = c.witness.negated() if isinstance(c.witness, SubgradientCandidate) else c.witness
    notes = c.notes + (("boundary-attained maximum",) if c.holds and c.boundary else ())
    return ExtremumCertificate("global_max_iff", c.x_bar, c.holds, w, c.consistent,
                               c.boundary, c.maximality, (), notes)


def _one_sided_slopes(h: np.ndarray, idx: int, step: float) -> tuple[float, float]:
    """``(s_plus, s_minus)`` difference quotients; a missing side is +-inf."""
    s_minus = (h[idx] - h[idx - 1]) / step if idx > 0 else math.inf
    s_plus = (h[idx + 1] - h[idx]) / step if idx < h.size - 1 else -math.inf
    return s_plus, s_minus


def max_necessary_condition(f: SampledFunction, x_bar, minorants) -> ExtremumCertificate:
    """At a global maximum, 0 lies in the superdifferential of every supporting minorant.

    Each superdifferential is the interval ``[s_plus, s_minus]`` of one-sided
    difference quotients at ``x_bar``.
    """
    if f.grid.dim != 1:
        raise PreconditionError("the classical superdifferential interval is 1-D only")
    idx, fx, pt = _node(f, x_bar)
    tol = f.tol_feas()
    fin = f.finite
    hs = []
    for m in minorants:
        v = np.asarray(m.values if hasattr(m, "values") else m, dtype=float)
        if np.any(v[fin] > f.values[fin] + tol) or abs(v[idx] - fx) > tol:
            raise PreconditionError("every minorant must support f at x_bar")
        hs.append(v)
    boundary = bool(idx == 0 or idx == f.grid.size - 1)
    notes = ["reading: superdifferentials of supporting minorants at a global maximum"]
    if boundary:
        notes.append("x_bar on the boundary: one-sided interval")
    if fx < f.values[fin].max():
        return ExtremumCertificate("max_necessary", pt, False, "hypothesis not met: "
                                   "f does not attain its maximum at x_bar", True, boundary,
                                   None, (), tuple(notes))
    step = f.grid.spacing[0]
    intervals = tuple(_one_sided_slopes(v, idx, step) for v in hs)
    holds = all(sp <= tol and -tol <= sm for sp, sm in intervals)
    return ExtremumCertificate("max_necessary", pt, holds, None, True, boundary, None,
                               intervals, tuple(notes))


# --------------------------------------------------------------------------
# Calculus rules


def _is_supergradient(f: SampledFunction, cand: SubgradientCandidate) -> bool:
    return bool(superdifferential_dual(check_subgradient, f, cand))


def calculus_scaling_check(f: SampledFunction, x_bar, lam: float,
                           cand: SubgradientCandidate) -> bool:
    """``lam * cand`` is a subgradient of ``lam * f``.

    For ``lam > 0`` ``cand`` must be a subgradient of ``f``; for ``lam < 0`` a
    supergradient.
    """
    if lam == 0:
        raise PreconditionError("lambda = 0 is excluded")
    if tuple(f.grid.node(f.index(x_bar)).tolist()) != cand.base:
        raise PreconditionError("candidate is anchored at a different point")
    pre = check_subgradient(f, cand).ok if lam > 0 else _is_supergradient(f, cand)
    if not pre:
        kind = "subgradient" if lam > 0 else "supergradient"
        raise PreconditionError(f"candidate is not a {kind} of f at x_bar")
    return bool(check_subgradient(f.scale(lam), cand.scaled(lam)))


def calculus_sum_check(f1: SampledFunction, f2: SampledFunction, x_bar,
                       c1: SubgradientCandidate, c2: SubgradientCandidate) -> bool:
    """``c1 + c2`` is a subgradient of ``f1 + f2`` (nodes with a +inf summand impose nothing)."""
    if f1.grid != f2.grid:
        raise PreconditionError("f1 and f2 must share a grid")
    for f, c in ((f1, c1), (f2, c2)):
        chk = check_subgradient(f, c)
        if not chk:
            raise PreconditionError("each candidate must be a subgradient of its function")
    total = f1 + f2
    return bool(check_subgradient(total, c1.add(c2, f1.grid)))


@dataclass(frozen=True, eq=False)
class DominationResult:
    dominates: bool
    minorant: GridMinorant
    certificate: MaximalityCertificate
    worst_margin: float

    def __bool__(self) -> bool:
        return self.dominates


def calculus_domination_check(f1: SampledFunction, f2: SampledFunction, x_bar,
                              l1: SubgradientCandidate, K: float | None = None,
                              **lp_options) -> DominationResult:
    """Lift a subgradient of ``f1`` to a maximal subgradient of ``f2 >= f1`` (1-D).

    Requires ``f1 <= f2`` and ``f1(x_bar) = f2(x_bar)``.  The LP output is
    pinned at ``x_bar`` and must dominate ``l1``'s supporting function.
    """
    if f1.grid != f2.grid or f1.grid.dim != 1:
        raise PreconditionError("domination check needs f1, f2 on one 1-D grid")
    idx, fx1, pt = _node(f1, x_bar)
    tol = max(f1.tol_feas(), f2.tol_feas())
    both = f1.finite & f2.finite
    if np.any(f1.values[both] > f2.values[both] + tol) or np.any(
            np.isposinf(f1.values) & np.isfinite(f2.values)):
        raise PreconditionError("need f1 <= f2 at every node")
    if abs(float(f2.values[idx]) - fx1) > tol:
        raise PreconditionError("need f1(x_bar) = f2(x_bar)")
    if not check_subgradient(f1, l1):
        raise PreconditionError("l1 is not a subgradient of f1 at x_bar")
    seed = l1.support(f1.grid)
    seed_mod = lipschitz_modulus(SampledFunction(f1.grid, seed))
    if K is None:
        K = max(2.0 * lipschitz_modulus(f2) if f2.finite.all() else 0.0, seed_mod)
    out, cert = maximal_minorant(f2, seed, K, pin=pt, **lp_options)
    margin = float(np.min(out.values - seed))
    ok = margin >= -cert.tol_feas and out.check(f2, cert.tol_feas).ok
    return DominationResult(bool(ok), out, cert, margin)


# --------------------------------------------------------------------------
# Randomized property trials


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    verdict: bool
    worst_slack: float


_TRIAL_GRID = (-1.0, 1.0, 101)


def _trial_sum(rng: np.random.Generator) -> TrialRecord:
    g = Grid.line(*_TRIAL_GRID)
    f1 = random_piecewise_linear(rng, g, int(rng.integers(3, 9)))
    f2 = random_piecewise_linear(rng, g, int(rng.integers(3, 9)))
    x = tuple(g.node(int(rng.integers(g.size))).tolist())
    c1, c2 = cone_subgradient(f1, x), cone_subgradient(f2, x)
    ok = calculus_sum_check(f1, f2, x, c1, c2)
    return TrialRecord(0, ok, check_subgradient(f1 + f2, c1.add(c2, g)).worst_slack)


def _trial_scaling(rng: np.random.Generator) -> TrialRecord:
    g = Grid.line(*_TRIAL_GRID)
    f = random_piecewise_linear(rng, g, int(rng.integers(3, 9)))
    x = tuple(g.node(int(rng.integers(g.size))).tolist())
    lam = float(rng.uniform(0.1, 4.0)) * (1 if rng.random() < 0.5 else -1)
    if lam > 0:
        cand = cone_subgradient(f, x)
        member = lambda fn, c: bool(check_subgradient(fn, c))
    else:
        cand = superdifferential_dual(cone_subgradient, f, x)
        member = _is_supergradient
    forward = calculus_scaling_check(f, x, lam, cand)
    back = member(f.scale(lam).scale(1.0 / lam), cand.scaled(lam).scaled(1.0 / lam))
    slack = check_subgradient(f.scale(lam), cand.scaled(lam)).worst_slack
    return TrialRecord(0, forward and back == member(f, cand), slack)


def _trial_domination(rng: np.random.Generator) -> TrialRecord:
    g = Grid.line(*_TRIAL_GRID)
    f2 = random_piecewise_linear(rng, g, int(rng.integers(3, 9)), lipschitz=2.0)
    j = int(rng.integers(1, g.size - 1))
    x = tuple(g.node(j).tolist())
    z = g.axis(0) - x[0]
    bump = rng.uniform(0, 1) * np.abs(z) + rng.uniform(0, 1) * z ** 2
    f1 = SampledFunction(g, f2.values - bump)
    res = calculus_domination_check(f1, f2, x, cone_subgradient(f1, x))
    ok = res.dominates and res.certificate.maximal and res.minorant.check(f2).ok
    return TrialRecord(0, ok, res.worst_margin)


TRIAL_RULES = {"sum": _trial_sum, "scaling": _trial_scaling, "domination": _trial_domination}


def calculus_trials(rule: str, trials: int, seed: int = 0) -> list[TrialRecord]:
    """Randomized precondition-satisfying trials of one calculus rule.

    Each trial draws from its own generator spawned off ``seed``, so a run is
    reproducible and trials are order-independent.
    """
    try:
        fn = TRIAL_RULES[rule]
    except KeyError:
        raise PreconditionError(f"unknown rule {rule!r}; known: {', '.join(TRIAL_RULES)}") from None
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    seqs = np.random.SeedSequence(seed).spawn(trials)
    out = []
    for i, ss in enumerate(seqs):
        r = fn(np.random.default_rng(ss))
        out.append(TrialRecord(i, r.verdict, float(r.worst_slack)))
    return out
