"""Acceptance criteria, one test each, at the tolerances of the project brief.

Every test records a single ``[ACCEPTANCE n] PASS/FAIL: ...`` line that is
printed immediately and collected into the pytest terminal summary. Run this
file directly (``python tests/test_acceptance.py``) to see only these lines.
"""

import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from fkground.builtins import (GOLDEN_OMEGA, antiferromagnetic_demo, cosine_potential,
                               decoupled_demo, demo_potential, fk_periodic, fk_quasiperiodic,
                               long_range_pair, three_body_demo, two_block_demo)
from fkground.cli import main as cli_main
from fkground.comparison import contact_propagation, hilbert_identity_check, synthetic_scenario
from fkground.errors import ContactError, ConvergenceError, FKGroundError
from fkground.foliation import ClosedFormFamily, HullFamily, build_foliation
from fkground.groundstate import brute_force_oracle, minimize_window, verify_theorem
from fkground.hull import sample_config, solve_hull
from fkground.model import (LatticeConfiguration, chain, constant_background, hessian_entry,
                            linear_background, residual, window_energy)

from conftest import ACCEPTANCE_LINES, SMALL_EPS

DEMO_EPS = 0.01
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def record(n, passed, message):
    line = f"[ACCEPTANCE {n}] {'PASS' if passed else 'FAIL'}: {message}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def lin(w, b=0.0, phi=None):
    return LatticeConfiguration(linear_background(w, b), phi)


BUILTIN_MODELS = [
    fk_periodic(),
    fk_periodic(cosine_potential(0.1)),
    fk_quasiperiodic(demo_potential(DEMO_EPS)),
    long_range_pair(),
    three_body_demo(),
    antiferromagnetic_demo(),
    decoupled_demo(),
    two_block_demo(),
]


@pytest.fixture(scope="session")
def demo_hull_attempt():
    """Solve the nominal demo hull once; returns (solution or error, seconds)."""
    t0 = time.perf_counter()
    try:
        out = solve_hull(demo_potential(DEMO_EPS), GOLDEN_OMEGA, n_trunc=32, tol=1e-12)
    except ConvergenceError as exc:
        out = exc
    return out, time.perf_counter() - t0


def _reached_factor(exc):
    done = [eps for eps, _, r in exc.history if r < 1e-12]
    return max(done) if done else 0.0


# 1 ---------------------------------------------------------------------------


def test_criterion_1_zero_potential_exactness():
    t0 = time.perf_counter()
    worst, n_reports, ok = 0.0, 0, True
    for omega in (0.0, 0.3, GOLDEN_OMEGA):
        fam = build_foliation(ClosedFormFamily.linear(fk_periodic(), omega))
        res = verify_theorem(fam, window_schedule=range(1, 16))
        ok &= res.passed
        worst = max(worst, max(abs(r.gamma_star) for r in res.reports))
        n_reports += len(res.reports)
    elapsed = time.perf_counter() - t0
    passed = ok and worst <= 1e-12 and elapsed < 10.0
    record(1, passed, f"V=0, omega in {{0, 0.3, golden}}: {n_reports} (beta, window) pairs, "
                      f"max |gamma_star| = {worst:.1e} (<= 1e-12), {elapsed:.1f} s (< 10 s)")


# 2 ---------------------------------------------------------------------------


def test_criterion_2_hull_solver_convergence(demo_hull_attempt):
    out, elapsed = demo_hull_attempt
    if isinstance(out, ConvergenceError):
        record(2, False, f"eps={DEMO_EPS} demo hull does not converge ({out}); last "
                         f"converged amplitude {_reached_factor(out) * DEMO_EPS:.5f} after "
                         f"{elapsed:.0f} s (no monotone hull exists at eps={DEMO_EPS}, see README)")
    r = out.final_residuals[-1]
    C = out.quadratic_constant()
    passed = (r < 1e-12 and out.final_iterations <= 8 and C is not None and math.isfinite(C)
              and elapsed < 60.0)
    record(2, passed, f"eps={DEMO_EPS} demo hull: residual {r:.1e} (< 1e-12) in "
                      f"{out.final_iterations} Newton steps (<= 8), C = {C}, "
                      f"{elapsed:.1f} s (< 60 s)")


# 3 ---------------------------------------------------------------------------


def test_criterion_3_main_theorem_on_demo_hull(demo_hull_attempt):
    out, _ = demo_hull_attempt
    if isinstance(out, ConvergenceError):
        record(3, False, f"no eps={DEMO_EPS} hull foliation to verify (hull solver failed: {out})")
    t0 = time.perf_counter()
    spec = fk_quasiperiodic(demo_potential(DEMO_EPS))
    try:
        fam = build_foliation(HullFamily(spec, out.hull))
        res = verify_theorem(fam, window_schedule=range(1, 16),
                             betas=np.linspace(-2.0, 2.0, 21))
    except FKGroundError as exc:
        record(3, False, f"eps={DEMO_EPS} hull foliation rejected: {exc}")
    elapsed = time.perf_counter() - t0
    g = max(r.gamma_star for r in res.reports)
    s = max(r.stationarity for r in res.reports)
    passed = res.passed and g <= 1e-8 and s < 1e-8 and elapsed < 600
    record(3, passed, f"21 beta x windows 1..15: max gamma_star {g:.1e} (<= 1e-8), "
                      f"max stationarity {s:.1e} (< 1e-8), {elapsed:.0f} s (< 600 s)")


# 4 ---------------------------------------------------------------------------


def test_criterion_4_oracle_equivalence():
    windows = [list(w) for k in (1, 2, 3) for w in itertools.combinations((0, 1, 2), k)]
    cases = []
    for beta in (0.0, 0.37):
        cases.append(("V=0", fk_periodic(), lin(0.3, beta)))
        # at eps = 0.01 no hull exists; linear configurations are non-equilibria
        # with strictly positive gamma, which exercises the minimizer fully
        cases.append((f"eps={DEMO_EPS}", fk_quasiperiodic(demo_potential(DEMO_EPS)),
                      lin(GOLDEN_OMEGA, beta)))
    worst, worst_case, n = 0.0, None, 0
    for label, spec, u in cases:
        for w in windows:
            res = minimize_window(spec, u, w)
            o = brute_force_oracle(spec, u, w)
            d = abs(res.gamma_star - o.gamma_max)
            n += 1
            if d >= worst:
                worst, worst_case = d, (label, w, res.gamma_star, o.gamma_max)
    record(4, worst <= 1e-3, f"{n} windows of <= 3 sites (V=0 and eps={DEMO_EPS}): max "
                             f"|gamma_star - oracle| = {worst:.1e} (<= 1e-3) at {worst_case[:2]}")


# 5 ---------------------------------------------------------------------------


def test_criterion_5_gradient_hessian_consistency():
    rng = np.random.default_rng(5)
    h = 1e-6
    worst_g, worst_h, n = 0.0, 0.0, 0
    for spec in BUILTIN_MODELS:
        for _ in range(100):
            u = lin(rng.uniform(-1, 1), rng.uniform(-1, 1),
                    {s: rng.uniform(-1, 1) for s in range(-12, 13)})
            i = int(rng.integers(-4, 5))
            fd = (window_energy(spec, u.perturbed({i: h}), [i])
                  - window_energy(spec, u.perturbed({i: -h}), [i])) / (2 * h)
            worst_g = max(worst_g, abs(residual(spec, u, i) - fd))
            j = i + int(rng.integers(-spec.range_bound + 1, spec.range_bound))
            fd2 = (residual(spec, u.perturbed({j: h}), i)
                   - residual(spec, u.perturbed({j: -h}), i)) / (2 * h)
            worst_h = max(worst_h, abs(hessian_entry(spec, u, i, j) - fd2))
            n += 1
    record(5, worst_g < 1e-6 and worst_h < 1e-5,
           f"{n} random configurations over {len(BUILTIN_MODELS)} built-in models: "
           f"max residual-FD error {worst_g:.1e} (< 1e-6), max hessian-FD error "
           f"{worst_h:.1e} (< 1e-5)")


# 6 ---------------------------------------------------------------------------


def test_criterion_6_hilbert_identity():
    rng = np.random.default_rng(6)
    worst, worst_free = 0.0, 0.0
    for spec in BUILTIN_MODELS:
        for _ in range(50):
            u = lin(rng.uniform(-1, 1), rng.uniform(-1, 1),
                    {s: rng.normal() for s in range(-6, 7)})
            sites = rng.choice(np.arange(-3, 4), int(rng.integers(1, 5)), replace=False)
            eta = {int(s): rng.normal() for s in sites}
            i = int(rng.integers(-2, 3))
            worst = max(worst, hilbert_identity_check(spec, u, eta, i, 16))
    free = fk_periodic()
    for _ in range(50):
        u = lin(rng.uniform(-1, 1), 0.0, {s: rng.normal() for s in range(-6, 7)})
        eta = {int(s): rng.normal() for s in rng.choice(np.arange(-3, 4), 3, replace=False)}
        worst_free = max(worst_free, hilbert_identity_check(free, u, eta, 0, 16))
    record(6, worst < 1e-10 and worst_free < 1e-14,
           f"50 scenarios x {len(BUILTIN_MODELS)} models at 16 nodes: max discrepancy "
           f"{worst:.1e} (< 1e-10); V=0: {worst_free:.1e} (< 1e-14)")


# 7 ---------------------------------------------------------------------------


def test_criterion_7_contact_propagation(small_hull_spec):
    hull_spec, hull = small_hull_spec
    bases = [
        ("fk-linear", fk_periodic(), lin(0.3, 0.1), chain(0, 7)),
        ("long-range-linear", long_range_pair(cutoff=3), lin(0.3, 0.1), chain(0, 7)),
        ("three-body-linear", three_body_demo(), lin(0.3, 0.1), chain(0, 7)),
        (f"hull-member eps={SMALL_EPS}", hull_spec, sample_config(hull, beta=0.4), chain(0, 9)),
    ]
    rng = np.random.default_rng(7)
    counterexamples, not_strict, n = 0, 0, 0
    for k in range(20):
        name, spec, base, window = bases[k % len(bases)]
        sc = synthetic_scenario(spec, base, window, rng, sign=1 if k % 2 == 0 else -1)
        n += 1
        try:
            res = contact_propagation(spec, sc)
        except ContactError:
            counterexamples += 1
            continue
        if not (res.strict and set(window) < set(res.certified)):
            not_strict += 1
    record(7, counterexamples == 0 and not_strict == 0,
           f"{n} synthetic single-signed scenarios ({', '.join(b[0] for b in bases)}): "
           f"{counterexamples} counterexamples, {not_strict} without a strict frontier")


# 8 ---------------------------------------------------------------------------


def test_criterion_8_negative_controls(tmp_path):
    out = tmp_path / "antiferro"
    code = cli_main(["verify", str(CONFIGS / "verify_antiferro.toml"), "--output-dir", str(out)])
    err = json.loads((out / "error.json").read_text()) if (out / "error.json").exists() else {}
    antiferro_ok = code == 2 and err.get("hypothesis") == "ferromagnetic_check"
    zero = LatticeConfiguration(constant_background(0.0))
    # eps < 0 makes u = 0 sit on the maxima of -V: not a ground state
    o = brute_force_oracle(fk_periodic(cosine_potential(-0.1)), zero, [0])
    # the literal eps > 0 case is the trivial ground state (reported, not required)
    o_pos = brute_force_oracle(fk_periodic(cosine_potential(0.1)), zero, [0])
    record(8, antiferro_ok and o.gamma_max > 0,
           f"antiferromagnetic demo: exit {code}, hypothesis {err.get('hypothesis')!r}; "
           f"u=0 under V=-0.1 cos 2 pi x: oracle gamma {o.gamma_max:.4f} > 0 "
           f"(under V=+0.1 cos 2 pi x: {o_pos.gamma_max:.1e})")


# 9 ---------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    runs = []
    free = CONFIGS / "verify_free.toml"
    small = CONFIGS / "run_demo_qp_small.toml"
    hull_dir = tmp_path / "hull"
    assert cli_main(["solve-hull", str(small), "--output-dir", str(hull_dir)]) == 0
    for label, cfg, base in (("free chain", free, None), (f"eps={SMALL_EPS} hull", small,
                                                          hull_dir)):
        dirs = []
        for threads in (1, 8):
            d = tmp_path / f"{label.split()[0]}-{threads}"
            if base is not None:
                d.mkdir()
                (d / "hull.json").write_bytes((base / "hull.json").read_bytes())
            code = cli_main(["verify", str(cfg), "--threads", str(threads),
                             "--output-dir", str(d)])
            assert code == 0, f"verify {label} with {threads} threads exited {code}"
            dirs.append(d)
        same = all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
                   for f in ("verify.csv", "foliation.csv"))
        runs.append((label, same))
    record(9, all(s for _, s in runs),
           "threads 1 vs 8, verify.csv and foliation.csv byte-identical: "
           + ", ".join(f"{label}: {'yes' if s else 'NO'}" for label, s in runs))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
