"""``lcx`` command-line front end.

Every JSON document carries ``command`` and ``inputs`` so that
``lcx <command> --verify FILE`` can rebuild the problem and re-check the
recorded result with an independent brute-force checker.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ekeland import density_scan, ekeland_refine
from .envelopes import (
    ConeFunction, certify_maximality, lc_convexity_test, legendre_fenchel, lipschitz_lower_envelope,
    lipschitz_modulus, lipschitz_modulus_bruteforce, lipschitz_upper_envelope, maximal_minorant,
    validate_minorant,
)
from .errors import LcxError, PreconditionError, UsageError
from .extremum import (
    calculus_trials, global_max_certificate, global_min_certificate, max_necessary_condition,
)
from .function_model import (
    GALLERY_IDS, GalleryFunction, Grid, SampledFunction, affine, gallery, piecewise_linear,
    sample,
)
from .subdiff import (
    SubgradientCandidate, check_maximality, check_subgradient, subdifferentiability_oracle,
    superdifferential_dual,
)

COMMANDS = ("envelope", "modulus", "lctest", "maximal", "lft", "calm", "subgrad", "maxcheck",
            "ekeland", "density", "extremum", "calculus", "gallery")
_VALUE_FLAGS = {"--fn", "--grid", "--norm", "--k", "--K", "--at", "--eps", "--delta",
                "--levels", "--stride", "--tol-feas", "--tol-lp", "--out", "--csv", "--seed",
                "--verify", "--slopes", "--minorant", "--cand", "--kind", "--rule", "--trials"}
_DEFAULT_K_SCHEDULE = "1,2,4,8,16,32,64"


# --------------------------------------------------------------------------
# Parsing of function, grid, point and candidate specs


def parse_grid(text: str, norm="2") -> Grid:
    """``lo:hi:n`` or ``lo1:hi1:n1,lo2:hi2:n2``."""
    lows, highs, ns = [], [], []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise UsageError(f"bad grid axis {part!r}; expected lo:hi:n")
        try:
            lows.append(float(bits[0]))
            highs.append(float(bits[1]))
            ns.append(int(bits[2]))
        except ValueError:
            raise UsageError(f"bad grid axis {part!r}") from None
    return Grid(tuple(lows), tuple(highs), tuple(ns), norm)


def parse_point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad point {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


def _load_json(spec: str):
    if spec.lstrip().startswith(("{", "[")):
        return json.loads(spec)
    p = Path(spec)
    if not p.is_file():
        raise UsageError(f"no such file {spec!r}")
    return json.loads(p.read_text(encoding="utf-8"))


def parse_function(spec):
    """Resolve ``--fn``; returns ``(function, json_spec)``.

    Accepted: ``gallery:<id>``, ``gallery:affine:a:b``,
    ``gallery:pwl:x1,x2,..:y1,y2,..``, a JSON file path, inline JSON, or a
    dict previously emitted as ``inputs.fn``.
    """
    if isinstance(spec, dict):
        if "spec" in spec:
            return parse_function(spec["spec"])[0], spec
        if spec.get("kind") == "samples":
            return SampledFunction.from_json(spec), spec
        if spec.get("kind") == "gallery":
            return _gallery_from(spec["id"], spec.get("params", [])), spec
        raise UsageError("function JSON needs kind 'samples' or 'gallery'")
    if spec.startswith("gallery:"):
        parts = spec.split(":")
        if parts[1] == "affine" and len(parts) == 4:
            return affine(float(parts[2]), float(parts[3])), {"spec": spec}
        if parts[1] == "pwl" and len(parts) == 4:
            return piecewise_linear(_floats(parts[2]), _floats(parts[3])), {"spec": spec}
        if len(parts) == 2:
            return gallery(parts[1]), {"spec": spec}
        raise UsageError(f"bad gallery spec {spec!r}")
    d = _load_json(spec)
    return parse_function(d)[0], d


def _gallery_from(id: str, params) -> GalleryFunction:
    if id == "affine":
        return affine(*params)
    if id == "pwl":
        return piecewise_linear(*params)
    return gallery(id)


def _default_grid(dim: int, norm) -> Grid:
    return Grid.line(-1.0, 1.0, 201, norm) if dim == 1 else Grid.square(-1.0, 1.0, 21, norm)


def parse_candidate(text: str, base, anchor: float) -> SubgradientCandidate:
    """``cone:k``, ``affine:s`` (``affine:s1,s2`` in 2-D) or ``zero``."""
    kind, _, rest = text.partition(":")
    if kind == "cone":
        return SubgradientCandidate.cone(base, anchor, float(rest))
    if kind == "affine":
        return SubgradientCandidate.affine(base, anchor, _floats(rest))
    if kind == "zero":
        return SubgradientCandidate.affine(base, anchor, [0.0] * len(base))
    raise UsageError(f"bad candidate {text!r}; expected cone:k, affine:s or zero")


def parse_minorant(text: str, grid: Grid) -> np.ndarray:
    """``affine:a:b``, ``cone:apex:k:level``, ``const:c``, or JSON values."""
    parts = text.split(":")
    try:
        if parts[0] == "affine" and len(parts) == 3:
            return float(parts[1]) * grid.axis(0) + float(parts[2])
        if parts[0] == "cone" and len(parts) == 4:
            return ConeFunction(parse_point(parts[1]), float(parts[2]), float(parts[3])).on(grid)
        if parts[0] == "const" and len(parts) == 2:
            return np.full(grid.size, float(parts[1]))
    except ValueError:
        raise UsageError(f"bad minorant {text!r}") from None
    d = _load_json(text)
    v = np.asarray(d["values"] if isinstance(d, dict) else d, dtype=float)
    if v.shape != (grid.size,):
        raise UsageError("minorant JSON must hold one value per grid node")
    return v


# --------------------------------------------------------------------------
# Context assembled from the arguments


class Ctx:
    def __init__(self, args):
        self.args = args
        self.inputs: dict = {}
        self._f = None

    def opt(self, name, default=None):
        v = getattr(self.args, name, None)
        return default if v is None else v

    @property
    def norm(self):
        return self.opt("norm", "2")

    def raw_function(self):
        spec = self.opt("fn")
        if spec is None:
            raise UsageError("--fn is required")
        fn, js = parse_function(spec)
        self.inputs["fn"] = js
        return fn

    def grid_for(self, dim: int) -> Grid:
        g = self.opt("grid")
        grid = parse_grid(g, self.norm) if g else _default_grid(dim, self.norm)
        if grid.dim != dim:
            raise PreconditionError(f"function is {dim}-D but the grid is {grid.dim}-D")
        return grid

    def function(self) -> SampledFunction:
        if self._f is None:
            fn = self.raw_function()
            if isinstance(fn, SampledFunction):
                f = fn if self.opt("norm") is None else SampledFunction(
                    fn.grid.with_norm(self.norm), fn.values, fn.name)
            else:
                f = sample(fn, self.grid_for(fn.dim))
            if self.opt("negate"):
                f = f.negate()
            self.inputs["negate"] = bool(self.opt("negate"))
            self.inputs["grid"] = f.grid.to_json()
            self._f = f
        return self._f

    def point(self, name="at", required=True):
        v = self.opt(name)
        if v is None:
            if required:
                raise UsageError(f"--{name} is required")
            return None
        p = parse_point(v)
        self.inputs[name] = list(p)
        return p

    def tol_feas(self, f: SampledFunction) -> float:
        t = self.opt("tol_feas")
        if t is not None:
            if not t > 0:
                raise UsageError("--tol-feas must be > 0")
            return float(t)
        base = os.environ.get("LCX_TOL_FEAS")
        try:
            b = 1e-9 if base is None else float(base)
        except ValueError:
            raise UsageError(f"LCX_TOL_FEAS={base!r} is not a number") from None
        if not b > 0:
            raise UsageError("LCX_TOL_FEAS must be > 0")
        return f.tol_feas(b)

    def tol_lp(self):
        t = self.opt("tol_lp")
        if t is not None and not t > 0:
            raise UsageError("--tol-lp must be > 0")
        return t


# --------------------------------------------------------------------------
# Output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _to_float(v) -> float:
    if isinstance(v, str):
        return {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}[v]
    return float(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _write(path, text: str, stdout) -> None:
    if path is None or path == "-":
        stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def emit(ctx: Ctx, doc: dict, stdout, csv_data=None, csv_default_stdout=False) -> None:
    """Write the JSON document and optional CSV.

    When ``csv_default_stdout`` is set and no ``--csv`` path is given, the CSV
    goes to stdout and the JSON only to ``--out`` (if set).
    """
    doc = {"command": ctx.args.command, "inputs": ctx.inputs, "result": doc}
    out, csv_path = ctx.opt("out"), ctx.opt("csv")
    if csv_data is not None and csv_path is None and csv_default_stdout:
        stdout.write(csv_data)
        if out is not None:
            _write(out, dumps(doc), stdout)
        return
    if csv_data is not None and csv_path is not None:
        _write(csv_path, csv_data, stdout)
    _write(out, dumps(doc), stdout)


# --------------------------------------------------------------------------
# Commands


def _coords(grid: Grid) -> list[str]:
    return ["x"] if grid.dim == 1 else [f"x{i + 1}" for i in range(grid.dim)]


def cmd_envelope(ctx: Ctx, stdout):
    f = ctx.function()
    k = float(ctx.opt("k", 1.0))
    ctx.inputs["k"] = k
    lo, hi = lipschitz_lower_envelope(f, k), lipschitz_upper_envelope(f, k)
    rows = [list(p) + [a, b, c] for p, a, b, c in
            zip(f.grid.points, f.values, lo.values, hi.values)]
    data = csv_text(_coords(f.grid) + ["f", "E_minus", "E_plus"], rows)
    fin = f.finite
    doc = {"k": k, "lower": lo.values, "upper": hi.values,
           "max_err_upper": float(np.max(np.abs(hi.values[fin] - f.values[fin]), initial=0.0)),
           "max_err_lower": float(np.max(np.abs(lo.values[fin] - f.values[fin]), initial=0.0))}
    emit(ctx, doc, stdout, data, csv_default_stdout=True)


def cmd_modulus(ctx: Ctx, stdout):
    f = ctx.function()
    emit(ctx, {"modulus": lipschitz_modulus(f), "nodes": f.grid.size}, stdout)


def cmd_lctest(ctx: Ctx, stdout):
    fn = ctx.raw_function()
    if isinstance(fn, SampledFunction):
        raise UsageError("lctest needs a closed-form (gallery) function")
    if ctx.opt("negate"):
        fn = fn.negate()
    ctx.inputs["negate"] = bool(ctx.opt("negate"))
    grid = ctx.grid_for(fn.dim)
    ctx.inputs["grid"] = grid.to_json()
    ks = _floats(ctx.opt("k", _DEFAULT_K_SCHEDULE))
    ctx.inputs["k_schedule"] = ks
    probe = ctx.point(required=False)
    levels = int(ctx.opt("levels", 6))
    ctx.inputs["levels"] = levels
    rep = lc_convexity_test(fn, grid, ks, None if probe is None else [probe], levels)
    emit(ctx, rep.to_json(), stdout)


def cmd_maximal(ctx: Ctx, stdout):
    f = ctx.function()
    spec = ctx.opt("minorant")
    if spec is None:
        raise UsageError("--minorant is required")
    seed = parse_minorant(spec, f.grid)
    ctx.inputs["minorant"] = seed
    K = ctx.opt("K")
    pin = ctx.point(required=False)
    tol = ctx.tol_feas(f)
    if ctx.opt("kind", "lift") == "certify":
        cert = certify_maximality(f, seed, K, pin, tol_feas=tol, tol_lp=ctx.tol_lp())
        ctx.inputs["kind"] = "certify"
        emit(ctx, {"certificate": cert.to_json(), "minorant": seed}, stdout)
        return
    out, cert = maximal_minorant(f, seed, K, pin, tol_feas=tol, tol_lp=ctx.tol_lp())
    ctx.inputs["kind"] = "lift"
    emit(ctx, {"certificate": cert.to_json(), "minorant": out.values,
               "dominates_seed": bool(np.all(out.values >= seed - tol))}, stdout)


def cmd_lft(ctx: Ctx, stdout):
    f = ctx.function()
    slopes = parse_grid(ctx.opt("slopes", "-2:2:401"))
    ctx.inputs["slopes"] = slopes.to_json()
    conj, edge = legendre_fenchel(f, slopes, return_flags=True)
    s = slopes.axis(0)
    data = csv_text(["s", "f_star", "edge_argmax"],
                    [[a, b, int(e)] for a, b, e in zip(s, conj.values, edge)])
    emit(ctx, {"f_star": conj.values, "edge_argmax": edge}, stdout, data,
         csv_default_stdout=True)


def cmd_calm(ctx: Ctx, stdout):
    fn = ctx.raw_function()
    if isinstance(fn, SampledFunction):
        raise UsageError("calm refines the grid and needs a closed-form (gallery) function")
    if ctx.opt("negate"):
        fn = fn.negate()
    ctx.inputs["negate"] = bool(ctx.opt("negate"))
    grid = ctx.grid_for(fn.dim)
    ctx.inputs["grid"] = grid.to_json()
    x = ctx.point()
    levels = int(ctx.opt("levels", 5))
    ctx.inputs["levels"] = levels
    K_cap = float(ctx.opt("K", 100.0))
    ctx.inputs["K_cap"] = K_cap
    cert = subdifferentiability_oracle(fn, x, levels, K_cap, grid)
    emit(ctx, cert.to_json(), stdout)


def _candidate(ctx: Ctx, f: SampledFunction, x):
    spec = ctx.opt("cand")
    if spec is None:
        raise UsageError("--cand is required")
    ctx.inputs["cand"] = spec
    base = tuple(f.grid.node(f.index(x)).tolist())
    return parse_candidate(spec, base, f.at(base))


def cmd_subgrad(ctx: Ctx, stdout):
    f = ctx.function()
    x = ctx.point()
    cand = _candidate(ctx, f, x)
    kind = ctx.opt("kind", "sub")
    if kind not in ("sub", "super"):
        raise UsageError("--kind must be sub or super")
    ctx.inputs["kind"] = kind
    tol = ctx.tol_feas(f)
    if kind == "sub":
        chk = check_subgradient(f, cand, tol)
    else:
        chk = superdifferential_dual(check_subgradient, f, cand, tol)
    emit(ctx, {"check": chk.to_json(), "candidate": cand.to_json()}, stdout)


def cmd_maxcheck(ctx: Ctx, stdout):
    f = ctx.function()
    x = ctx.point()
    cand = _candidate(ctx, f, x)
    cert = check_maximality(f, cand, ctx.opt("K"), tol_feas=ctx.tol_feas(f), tol_lp=ctx.tol_lp())
    emit(ctx, {"certificate": cert.to_json(), "support": cand.support(f.grid)}, stdout)


def cmd_ekeland(ctx: Ctx, stdout):
    f = ctx.function()
    x = ctx.point()
    spec = ctx.opt("minorant")
    if spec is None:
        k = float(ctx.opt("k", 1.0))
        h = lipschitz_lower_envelope(f, k).values
        ctx.inputs["k"] = k
    else:
        h = parse_minorant(spec, f.grid)
    ctx.inputs["minorant"] = h
    eps, delta = ctx.opt("eps"), ctx.opt("delta")
    ctx.inputs.update(eps=eps, delta=delta)
    res = ekeland_refine(f, h, x, eps, delta, ctx.tol_feas(f))
    doc = res.to_json()
    doc["invariants_hold"] = res.invariants_hold(ctx.tol_feas(f))
    emit(ctx, doc, stdout)


def cmd_density(ctx: Ctx, stdout):
    f = ctx.function()
    eps, delta = float(ctx.opt("eps", 0.5)), float(ctx.opt("delta", 0.5))
    k, stride = float(ctx.opt("k", 1.0)), int(ctx.opt("stride", 1))
    ctx.inputs.update(eps=eps, delta=delta, k=k, stride=stride)
    scan = density_scan(f, eps, delta, k, stride)
    doc = scan.to_json()
    doc["bound"] = delta + stride * max(f.grid.spacing)
    emit(ctx, doc, stdout)


def cmd_extremum(ctx: Ctx, stdout):
    f = ctx.function()
    x = ctx.point()
    kind = ctx.opt("kind", "min")
    ctx.inputs["kind"] = kind
    if kind == "min":
        cert = global_min_certificate(f, x)
    elif kind == "max":
        cert = global_max_certificate(f, x)
    elif kind == "necessary":
        k = float(ctx.opt("k", 2.0 * lipschitz_modulus(f)))
        ctx.inputs["k"] = k
        h = lipschitz_lower_envelope(f, k)
        cert = max_necessary_condition(f, x, [h])
    else:
        raise UsageError("--kind must be min, max or necessary")
    emit(ctx, cert.to_json(), stdout)


def cmd_calculus(ctx: Ctx, stdout):
    rule = ctx.opt("rule", "sum")
    default = 50 if rule == "domination" else 200
    trials, seed = int(ctx.opt("trials", default)), int(ctx.opt("seed", 0))
    ctx.inputs.update(rule=rule, trials=trials, seed=seed)
    recs = calculus_trials(rule, trials, seed)
    data = csv_text(["trial", "verdict", "worst_slack"],
                    [[r.trial, str(r.verdict).lower(), r.worst_slack] for r in recs])
    doc = {"passed": sum(r.verdict for r in recs), "trials": trials,
           "all_true": all(r.verdict for r in recs),
           "records": [[r.trial, r.verdict, r.worst_slack] for r in recs]}
    emit(ctx, doc, stdout, data)


def cmd_gallery(ctx: Ctx, stdout):
    if ctx.opt("list") or ctx.opt("fn") is None:
        stdout.write("\n".join(GALLERY_IDS) + "\n")
        return
    f = ctx.function()
    emit(ctx, f.to_json(), stdout)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# --------------------------------------------------------------------------
# Verification: independent brute-force re-checks of recorded results


def _brute_dist(grid: Grid, i: int) -> np.ndarray:
    diff = grid.points - grid.points[i]
    return np.linalg.norm(diff, ord=grid.norm, axis=1) if grid.dim > 1 else np.abs(diff[:, 0])


def _brute_envelope(f: SampledFunction, k: float, lower: bool) -> np.ndarray:
    v = f.values
    use = np.isfinite(v) if not lower else ~np.isposinf(v)
    out = np.empty(v.size)
    for i in range(v.size):
        d = _brute_dist(f.grid, i)
        if lower:
            out[i] = np.min(np.where(use, v + k * d, math.inf))
        else:
            out[i] = np.max(np.where(use, v - k * d, -math.inf))
    return out


def _verify(doc: dict) -> dict:
    cmd = doc.get("command")
    inp, res = doc.get("inputs", {}), doc.get("result", {})
    if cmd not in COMMANDS:
        raise UsageError(f"certificate has unknown command {cmd!r}")
    f = None
    if "fn" in inp and "grid" in inp:
        fn, _ = parse_function(inp["fn"])
        grid = Grid.from_json(inp["grid"])
        f = fn if isinstance(fn, SampledFunction) else sample(fn, grid)
        if isinstance(fn, SampledFunction) and fn.grid != grid:
            f = SampledFunction(grid, fn.values, fn.name)
        if inp.get("negate"):
            f = f.negate()
    tol = 1e-9 * (1 + (f.sup_norm() if f is not None else 0.0))
    checks: dict = {}
    if cmd == "envelope":
        k = inp["k"]
        lo = np.array([_to_float(v) for v in res["lower"]])
        hi = np.array([_to_float(v) for v in res["upper"]])
        checks["lower"] = bool(np.allclose(lo, _brute_envelope(f, k, True), atol=1e-12, rtol=0))
        checks["upper"] = bool(np.allclose(hi, _brute_envelope(f, k, False), atol=1e-12, rtol=0))
    elif cmd == "modulus":
        checks["modulus"] = abs(lipschitz_modulus_bruteforce(f) - res["modulus"]) <= tol
    elif cmd in ("maximal", "maxcheck"):
        cert = res["certificate"]
        K = cert["K"]
        vals = res["minorant"] if cmd == "maximal" else res["support"]
        chk = validate_minorant(f, vals, K, cert["tolerances"]["tol_feas"])
        checks["feasible"] = chk.ok
        if cert["improvement"] is not None:
            imp = np.asarray(cert["improvement"], dtype=float)
            checks["improvement_feasible"] = validate_minorant(
                f, imp, K, cert["tolerances"]["tol_feas"]).ok
            checks["improvement_dominates"] = bool(
                np.all(imp >= np.asarray(vals) - cert["tolerances"]["tol_feas"]))
    elif cmd == "lft":
        s = Grid.from_json(inp["slopes"]).axis(0)
        fin = f.finite
        x, v = f.grid.axis(0)[fin], f.values[fin]
        brute = np.array([max(si * xj - vj for xj, vj in zip(x, v)) for si in s])
        got = np.array([_to_float(t) for t in res["f_star"]])
        checks["conjugate"] = bool(np.allclose(got, brute, atol=1e-12, rtol=1e-15))
    elif cmd == "calm":
        fn, _ = parse_function(inp["fn"])
        if inp.get("negate"):
            fn = fn.negate()
        g = Grid.from_json(inp["grid"])
        x = np.asarray(inp["at"], dtype=float)
        mods = []
        for _ in range(inp["levels"]):
            fs = sample(fn, g)
            i = fs.index(x)
            d = _brute_dist(g, i)
            m = (d > 0) & fs.finite
            mods.append(float(np.max(np.maximum(fs.values[i] - fs.values[m], 0) / d[m])))
            g = g.refine(2)
        checks["moduli"] = bool(np.allclose(mods, res["modulus_sequence"], rtol=1e-12, atol=0))
    elif cmd == "subgrad":
        c = res["candidate"]
        x = np.asarray(c["base"], dtype=float)
        i = f.index(x)
        z = f.grid.points - f.grid.points[i]
        if c["form"] == "cone":
            l = -c["k"] * np.linalg.norm(z, ord=f.grid.norm, axis=1)
        else:
            l = z @ np.asarray(c["slope"], dtype=float)
        sign = 1.0 if inp["kind"] == "sub" else -1.0
        slack = sign * (f.values - (l + f.values[i]))
        slack = slack[f.finite]
        tol_f = res["check"]["tol_feas"]
        checks["verdict"] = bool(slack.min() >= -tol_f) == res["check"]["ok"]
    elif cmd == "ekeland":
        sup = np.asarray(res["support"]["values"], dtype=float)
        fin = f.finite
        j = f.index(res["x_delta"])
        i0 = f.index(res["x_bar"])
        checks["minorant"] = bool(np.all(sup[fin] <= f.values[fin] + tol))
        checks["touch"] = abs(sup[j] - f.values[j]) <= tol
        checks["distance"] = _brute_dist(f.grid, i0)[j] <= res["delta"] + tol
    elif cmd == "density":
        cert = res["certified_nodes"]
        radius = max(float(np.min(_brute_dist(f.grid, i)[cert]))
                     for i in np.flatnonzero(f.finite))
        checks["radius"] = abs(radius - res["covering_radius"]) <= 1e-12
    elif cmd == "extremum":
        i = f.index(inp["at"])
        v = f.values[f.finite]
        if inp["kind"] == "min":
            checks["verdict"] = bool(f.values[i] <= v.min()) == res["holds"]
        elif inp["kind"] == "max":
            checks["verdict"] = bool(f.values[i] >= v.max()) == res["holds"]
        else:
            checks["hypothesis"] = (f.values[i] >= v.max()) or not res["holds"]
    elif cmd == "calculus":
        again = calculus_trials(inp["rule"], inp["trials"], inp["seed"])
        checks["reproduced"] = [[r.trial, r.verdict, r.worst_slack] for r in again] == [
            [a, b, _to_float(c)] for a, b, c in res["records"]]
    elif cmd == "lctest":
        if res["witness_k"] is not None:
            lo = _brute_envelope(f, res["witness_k"], True)
            checks["witness_finite"] = bool(np.isfinite(lo).all())
    else:
        raise UsageError(f"no verifier for {cmd!r}")
    return {"verified": all(checks.values()) if checks else False, "checks": checks,
            "command": cmd}


# --------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lcx", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lcx {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fn", help="gallery:<id>, gallery:affine:a:b, gallery:pwl:xs:ys, "
                                     "JSON file or inline JSON")
    common.add_argument("--grid", help="lo:hi:n or lo1:hi1:n1,lo2:hi2:n2")
    common.add_argument("--norm", choices=["1", "2", "inf"])
    common.add_argument("--k", help="Lipschitz constant (lctest: comma-separated schedule)")
    common.add_argument("--K", type=float, help="Lipschitz budget / calmness cap")
    common.add_argument("--at", help="point, comma-separated coordinates")
    common.add_argument("--eps", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--levels", type=int)
    common.add_argument("--stride", type=int)
    common.add_argument("--tol-feas", dest="tol_feas", type=float)
    common.add_argument("--tol-lp", dest="tol_lp", type=float)
    common.add_argument("--out", help="JSON output path (default stdout)")
    common.add_argument("--csv", help="CSV output path")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--verify", metavar="FILE", help="re-check a JSON certificate")
    common.add_argument("--slopes", help="slope grid for lft, lo:hi:n")
    common.add_argument("--minorant", help="affine:a:b, cone:apex:k:level, const:c or JSON")
    common.add_argument("--cand", help="cone:k, affine:s[,s2] or zero")
    common.add_argument("--kind", help="variant selector (subgrad: sub|super, "
                                       "extremum: min|max|necessary, maximal: lift|certify)")
    common.add_argument("--rule", choices=["sum", "scaling", "domination"])
    common.add_argument("--trials", type=int)
    common.add_argument("--negate", action="store_true", help="use -f")
    common.add_argument("--list", action="store_true", help="gallery: list ids")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _join_negative_values(argv):
    """Allow ``--grid -2:2:401`` by rewriting it to ``--grid=-2:2:401``."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and argv[i + 1] not in _VALUE_FLAGS and argv[i + 1] != "-" \
                and not argv[i + 1].startswith("--"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        for name in ("tol_feas", "tol_lp"):
            v = getattr(args, name, None)
            if v is not None and not v > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be > 0")
        if args.verify:
            rep = _verify(json.loads(Path(args.verify).read_text(encoding="utf-8")))
            stdout.write(dumps(rep))
            return 0 if rep["verified"] else 1
        HANDLERS[args.command](Ctx(args), stdout)
        return 0
    except (LcxError, ValueError, KeyError, json.JSONDecodeError, OSError) as e:
        msg = " ".join(str(e).split()) or type(e).__name__
        stderr.write(f"error: {type(e).__name__}: {msg}\n")
        return 2
    except Exception as e:  # noqa: BLE001 - report, never traceback
        stderr.write(f"internal error: {type(e).__name__}: {' '.join(str(e).split())}\n")
        return 1


def main() -> None:
    sys.exit(run())
