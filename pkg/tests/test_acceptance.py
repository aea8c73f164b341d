"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into the pytest terminal summary.
"""

import io
import json
import subprocess
import sys
import time

import numpy as np
import pytest

import oracles
from lcx.cli import run
from lcx.ekeland import density_scan, ekeland_refine
from lcx.envelopes import (
    ConeFunction, affine_maximal_minorant, certify_maximality, legendre_fenchel,
    lipschitz_upper_envelope,
)
from lcx.extremum import calculus_domination_check, calculus_trials, global_min_certificate
from lcx.function_model import Grid, SampledFunction, gallery, random_piecewise_linear, sample
from lcx.subdiff import (
    SubgradientCandidate, calmness_modulus, check_subgradient, cone_subgradient,
    subdifferentiability_oracle, superdifferential_dual,
)

RESULTS: dict[int, str] = {}


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_c01_envelope_identity():
    g = Grid.line(-2, 2, 401)
    x = g.axis(0)
    rng = np.random.default_rng(1)
    fs = [sample(gallery("abs_1d"), g)]
    fs += [random_piecewise_linear(rng, g, int(rng.integers(3, 10)), lipschitz=1.0)
           for _ in range(20)]
    worst_err, worst_oracle, worst_t = 0.0, 0.0, 0.0
    for f in fs:
        t = time.perf_counter()
        up = lipschitz_upper_envelope(f, 1.0).values
        worst_t = max(worst_t, time.perf_counter() - t)
        brute = np.max(f.values[None, :] - np.abs(x[:, None] - x[None, :]), axis=1)
        worst_err = max(worst_err, float(np.max(np.abs(up - f.values))))
        worst_oracle = max(worst_oracle, float(np.max(np.abs(brute - f.values))))
    ok = worst_err <= 1e-12 and worst_oracle <= 1e-12 and worst_t < 1.0
    report(1, "E+_1 f = f for 1-Lipschitz f", ok,
           f"max err {worst_err:.2e}, oracle err {worst_oracle:.2e}, "
           f"slowest {worst_t:.3f}s over {len(fs)} functions")


def test_c02_lctest_witness():
    out, err = io.StringIO(), io.StringIO()
    code = run(["lctest", "--fn", "gallery:neg_sqrt_abs"], stdout=out, stderr=err)
    res = json.loads(out.getvalue())["result"] if code == 0 else {}
    first = min(k for k in json.loads(out.getvalue())["inputs"]["k_schedule"] if k >= 1)
    ok = code == 0 and res["witness_k"] == first and res["verdict"].startswith("LC-convex")
    report(2, "lctest witness on neg_sqrt_abs", ok,
           f"exit {code}, witness k={res.get('witness_k')}, verdict {res.get('verdict')!r}")


def test_c03_affine_seeds_and_average():
    g = Grid.line(-2, 2, 401)
    f = sample(gallery("square"), g)
    x = g.axis(0)
    c_up = certify_maximality(f, 2 * x - 1, K=2.0)
    c_dn = certify_maximality(f, -2 * x - 1, K=2.0)
    c_avg = certify_maximality(f, np.full(g.size, -1.0), K=2.0)
    imp = None if c_avg.improvement is None else c_avg.improvement.values
    dominates = imp is not None and bool(np.all(imp >= -1.0 - c_avg.tol_feas)
                                         and np.any(imp > -1.0 + 1e-6))
    ok = (c_up.maximal and c_dn.maximal and max(c_up.lp_objective_gap,
                                                 c_dn.lp_objective_gap) <= 1e-7
          and c_avg.status == "improvable" and dominates)
    report(3, "2x-1, -2x-1 maximal; average improvable", ok,
           f"gaps {c_up.lp_objective_gap:.1e}/{c_dn.lp_objective_gap:.1e}, "
           f"average {c_avg.status} (gap {c_avg.lp_objective_gap:.3f})")


def test_c04_conjugate():
    t = time.perf_counter()
    f = sample(gallery("square"), Grid.line(-4, 4, 1601))
    slopes = Grid.line(-2, 2, 801)
    conj = legendre_fenchel(f, slopes)
    s = slopes.axis(0)
    err = np.abs(conj.values - s ** 2 / 4)
    h = 0.005
    within_bound = bool(np.all(err <= h * np.abs(s) / 2 + h * h / 4 + 1e-12))
    aff = affine_maximal_minorant(f, 2.0)
    aff_err = float(np.max(np.abs(aff.values - (2 * f.grid.axis(0) - 1))))
    dt = time.perf_counter() - t
    ok = err.max() <= 6e-3 and within_bound and aff_err <= 1e-9 and dt < 5.0
    report(4, "discrete conjugate of x^2", ok,
           f"max err {err.max():.2e} (bound ok: {within_bound}), affine err {aff_err:.1e}, "
           f"{dt:.2f}s")


def test_c05_calmness():
    cert = subdifferentiability_oracle(gallery("neg_sqrt_abs"), 0.0, 5)
    mods = np.array(cert.modulus_sequence)
    hs = np.array(cert.spacings)
    g, brute = Grid.line(-1, 1, 201), []
    for _ in range(5):
        fs = sample(gallery("neg_sqrt_abs"), g)
        brute.append(oracles.calmness(g.points, fs.values, fs.index(0.0), 2))
        g = g.refine(2)
    increasing = bool(np.all(np.diff(mods) > 0))
    close = bool(np.all(np.abs(mods * np.sqrt(hs) - 1) <= 0.05))
    f = sample(gallery("square"), Grid.line(-1, 1, 2001))
    sq = calmness_modulus(f, 1.0)
    ok = (increasing and close and np.allclose(mods, brute, rtol=1e-12)
          and np.allclose(brute, [10, 14.142135623730951, 20, 28.284271247461902, 40], rtol=1e-9)
          and cert.verdict == "diverging" and abs(sq - 2) <= 0.04)
    report(5, "calmness moduli", ok,
           f"neg_sqrt_abs {np.round(mods, 2).tolist()} -> {cert.verdict}; "
           f"square at 1, h=1e-3: {sq:.4f}")


def test_c06_example_families():
    t = time.perf_counter()
    g = Grid.square(-1, 1, 201, norm=1)
    f = sample(gallery("abs_diff_2d"), g)
    x, y = g.points[:, 0], g.points[:, 1]
    origin = (0.0, 0.0)

    def cand(table):
        return SubgradientCandidate("grid", origin, 0.0, grid=g, table=table)

    alphas = np.linspace(-1, 1, 21)
    sub_ok = [bool(check_subgradient(f, cand(a * x - np.abs(y)))) for a in alphas]
    sub_bad = [bool(check_subgradient(f, cand(a * x - np.abs(y)))) for a in (-1.1, 1.1)]
    sup = lambda a: bool(superdifferential_dual(check_subgradient, f, cand(np.abs(x) - a * y)))
    sup_ok = [sup(a) for a in alphas]
    sup_bad = [sup(a) for a in (-1.1, 1.1)]
    dt = time.perf_counter() - t
    ok = all(sub_ok) and not any(sub_bad) and all(sup_ok) and not any(sup_bad) and dt < 10
    report(6, "subgradient / supergradient families of |x|-|y|", ok,
           f"sub {sum(sub_ok)}/21 accepted, +-1.1 rejected: {not any(sub_bad)}; "
           f"super {sum(sup_ok)}/21, +-1.1 rejected: {not any(sup_bad)}; {dt:.2f}s")


def test_c07_ekeland():
    g = Grid.line(-1, 1, 1001)
    f = sample(gallery("neg_sqrt_abs"), g)
    r = ekeland_refine(f, ConeFunction((0.0,), 0.5, -0.5), 0.0, 0.5, 0.5)
    h = g.spacing[0]
    stride, delta = 10, 2 * h
    scan = density_scan(f, 0.5, delta, 1.0, stride)
    ok = (r.iterations <= g.size and abs(r.x_delta[0]) <= 0.5 and r.invariants_hold(1e-9)
          and scan.covering_radius <= delta + stride * h + 1e-12
          and all(p.invariants_hold(1e-9) for p in scan.results))
    report(7, "Ekeland refinement and density scan", ok,
           f"x_delta={r.x_delta[0]:.4f} after {r.iterations} steps; covering radius "
           f"{scan.covering_radius:.4f} <= {delta + stride * h:.4f}")


def test_c08_extremum_consistency():
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    g = Grid.line(-1, 1, 101)
    bad = mism = 0
    for _ in range(50):
        f = random_piecewise_linear(rng, g, int(rng.integers(3, 10)))
        m = f.values.min()
        for j in range(g.size):
            c = global_min_certificate(f, g.node(j))
            bad += not c.consistent
            mism += c.holds != (f.values[j] == m)
    dt = time.perf_counter() - t
    report(8, "global-min routes agree", bad == 0 and mism == 0 and dt < 30,
           f"{bad} inconsistencies, {mism} argmin mismatches over {50 * g.size} nodes, {dt:.2f}s")


def _independent_minorant_check(f, v, K, tol):
    concave = bool(np.all(v[:-2] - 2 * v[1:-1] + v[2:] <= tol))
    below = bool(np.all(v <= f.values + tol))
    lip = oracles.modulus(f.grid.points, v, 2) <= K + tol
    return concave and below and lip


def test_c09_calculus():
    sums = calculus_trials("sum", 200, seed=9)
    scal = calculus_trials("scaling", 200, seed=9)
    rng_root = np.random.SeedSequence(9).spawn(50)
    g = Grid.line(-1, 1, 101)
    dom_ok = 0
    for ss in rng_root:
        rng = np.random.default_rng(ss)
        f2 = random_piecewise_linear(rng, g, int(rng.integers(3, 9)), lipschitz=2.0)
        j = int(rng.integers(1, g.size - 1))
        xb = tuple(g.node(j).tolist())
        z = g.axis(0) - xb[0]
        f1 = SampledFunction(g, f2.values - rng.uniform(0, 1) * np.abs(z)
                             - rng.uniform(0, 1) * z ** 2)
        l1 = cone_subgradient(f1, xb)
        res = calculus_domination_check(f1, f2, xb, l1)
        tol = res.certificate.tol_feas
        v = res.minorant.values
        dom_ok += (res.dominates and res.certificate.maximal
                   and _independent_minorant_check(f2, v, res.minorant.K, tol)
                   and bool(np.all(v >= l1.support(g) - tol)) and abs(v[j] - f2.values[j]) <= tol)
    n_sum, n_scal = sum(r.verdict for r in sums), sum(r.verdict for r in scal)
    ok = n_sum == 200 and n_scal == 200 and dom_ok == 50
    report(9, "calculus rules", ok,
           f"sum {n_sum}/200, scaling involution {n_scal}/200, domination {dom_ok}/50")


SUITE = [
    ["envelope", "--fn", "gallery:abs_1d", "--k", "1", "--grid", "-2:2:401"],
    ["calm", "--fn", "gallery:neg_sqrt_abs", "--at", "0", "--levels", "5"],
    ["lctest", "--fn", "gallery:neg_sqrt_abs"],
    ["maximal", "--fn", "gallery:square", "--grid", "-2:2:401", "--minorant", "const:-1",
     "--K", "2"],
    ["lft", "--fn", "gallery:square", "--grid", "-4:4:1601", "--slopes", "-2:2:401"],
    ["ekeland", "--fn", "gallery:neg_sqrt_abs", "--grid", "-1:1:1001", "--at", "0",
     "--minorant", "cone:0:0.5:-0.5", "--eps", "0.5", "--delta", "0.5"],
    ["density", "--fn", "gallery:neg_sqrt_abs", "--grid", "-1:1:1001", "--stride", "10",
     "--delta", "0.004"],
    ["extremum", "--fn", "gallery:square", "--at", "0"],
    ["calculus", "--rule", "sum", "--trials", "200", "--seed", "7"],
    ["calculus", "--rule", "domination", "--trials", "50", "--seed", "7"],
]


def _suite_bytes(tmp):
    blobs = []
    for i, argv in enumerate(SUITE):
        out, csvp = tmp / f"{i}.json", tmp / f"{i}.csv"
        p = subprocess.run([sys.executable, "-m", "lcx", *argv, "--out", str(out),
                            "--csv", str(csvp)], capture_output=True)
        if p.returncode != 0:
            return None, f"{argv[0]} exited {p.returncode}: {p.stderr.decode().strip()}"
        blobs.append(p.stdout + out.read_bytes() + (csvp.read_bytes() if csvp.exists() else b""))
    return blobs, ""


def test_c10_determinism(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a, why_a = _suite_bytes(tmp_path / "a")
    b, why_b = _suite_bytes(tmp_path / "b")
    ok = a is not None and b is not None and a == b
    detail = why_a or why_b or f"{len(SUITE)} commands, {sum(map(len, a))} bytes identical: {ok}"
    report(10, "byte-identical reruns", ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
