"""Command-line driver: ``fkground {solve-hull,verify,report,check-model,contact}``.

Exit statuses: 0 pass, 1 conclusion failure, 2 hypothesis failure, 3 usage or I/O
error. Every nonzero exit also writes ``error.json`` to the output directory when
one is known.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .comparison import ContactScenario, contact_propagation
from .errors import (ContactError, ContractError, ConvergenceError, FKGroundError,
                     FoliationError, GraphError, HypothesisError, ModelFileError,
                     PreconditionError, ResonanceError)
from .foliation import (ClosedFormFamily, HullFamily, build_foliation, check_axioms,
                        foliation_rows, foliation_summary)
from .graph import build_graph, is_transitive, transitivity_report
from .groundstate import report_rows, report_summary, verify_theorem
from .hull import hull_residual, monotonicity_margin, sample_config, solve_hull
from .model import (LatticeConfiguration, chain, check_terms, coercivity_probe,
                    ferromagnetic_check, linear_background)

log = logging.getLogger("fkground")

EXIT_PASS, EXIT_CONCLUSION, EXIT_HYPOTHESIS, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class _Fail(Exception):
    def __init__(self, code, kind, message, **detail):
        super().__init__(message)
        self.code, self.kind, self.detail = code, kind, detail


# ---------------------------------------------------------------------------
# helpers


def _load_config(args) -> fio.RunConfig:
    cfg = fio.load_config(args.config)
    if args.output_dir is not None:
        cfg.output_dir = Path(args.output_dir)
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg.threads = args.threads
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _probe_configs(spec, omega, sites, seed, n=4):
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(n):
        base = linear_background([omega or 0.0] + [0.0] * (spec.dim - 1), rng.uniform(-1, 1))
        phi = {s: float(v) for s, v in zip(sites, rng.uniform(-1.0, 1.0, len(sites)))}
        probes.append(LatticeConfiguration(base, phi, spec.dim))
    return probes


def _family(cfg: fio.RunConfig, model: fio.ModelDescription):
    f = cfg.foliation
    if f["source"] == "hull":
        hull = fio.load_hull(_require(cfg.resolve(f["hull_file"]), "hull file"))
        if model.potential is None or not np.array_equal(hull.alpha, model.potential.alpha):
            raise ModelFileError("hull file does not match the model's medium")
        return HullFamily(model.spec, hull)
    return ClosedFormFamily.linear(model.spec, [model.omega or 0.0] + [0.0] * (model.spec.dim - 1))


# ---------------------------------------------------------------------------
# commands


def cmd_solve_hull(cfg: fio.RunConfig) -> int:
    model = fio.load_model(_require(cfg.model_path, "model file"))
    if model.potential is None or model.potential.d < 2:
        raise UsageError("solve-hull needs a model with a quasi-periodic medium (d >= 2)")
    if model.omega is None:
        raise UsageError("solve-hull needs model.omega")
    s = cfg.solve
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    try:
        sol = solve_hull(model.potential, model.omega, epsilon_schedule=s["epsilon_schedule"],
                         n_trunc=s["n_trunc"], tol=s["tol"], max_iter=s["max_iter"],
                         divisor_floor=s["divisor_floor"], max_halvings=s["max_halvings"])
    except ResonanceError as exc:
        raise _Fail(EXIT_HYPOTHESIS, "ResonanceError", str(exc), hypothesis="small_divisor",
                    mode=list(exc.mode), divisor=exc.divisor, floor=exc.floor)
    except ConvergenceError as exc:
        fio.write_csv(out / "hull_convergence.csv",
                      [["stage", "iteration", "max_residual"]] + [list(r) for r in exc.history])
        raise _Fail(EXIT_CONCLUSION, "ConvergenceError", str(exc),
                    history=[list(r) for r in exc.history])
    h = sol.hull
    fio.save_hull(h, cfg.resolve(s["hull_file"]))
    fio.write_csv(out / "hull_convergence.csv",
                  [["stage", "iteration", "max_residual"]] + [list(r) for r in sol.history])
    fine = float(np.abs(hull_residual(h, model.potential, 4 * (2 * h.n_trunc + 1))).max()) \
        if not model.potential.is_zero else 0.0
    summary = {
        "converged": True,
        "stages": sol.stages,
        "final_iterations": sol.final_iterations,
        "final_residual": sol.final_residuals[-1] if sol.final_residuals else 0.0,
        "fine_grid_residual": fine,
        "quadratic_constant": sol.quadratic_constant(),
        "min_divisor": sol.min_divisor,
        "min_divisor_mode": list(sol.min_divisor_mode),
        "nonresonance_min_k_alpha": model.potential.nonresonance(),
        "monotonicity_margin": monotonicity_margin(h),
        "sup_norm": h.sup_norm(),
        "n_coefficients": len(h.coefficient_map()),
    }
    fio.write_json(out / "hull_summary.json", summary)
    print(json.dumps(fio._jsonable(summary), sort_keys=True))
    return EXIT_PASS


def _ferromagnetic_precheck(model, cfg, window):
    probes = _probe_configs(model.spec, model.omega, window, cfg.seed)
    ferro = ferromagnetic_check(model.spec, probes, window)
    if not ferro.is_ferromagnetic:
        p, q, v = ferro.worst_entry
        raise HypothesisError("ferromagnetic_check", f"entry ({p}, {q}) = {v!r}")


def cmd_verify(cfg: fio.RunConfig) -> int:
    model = fio.load_model(_require(cfg.model_path, "model file"))
    spec = model.spec
    f, v = cfg.foliation, cfg.verify
    window = chain(f["window"][0], f["window"][1]) if spec.dim == 1 else None
    if window is None:
        raise UsageError("verify supports one-dimensional chains")
    _ferromagnetic_precheck(model, cfg, chain(-2, max(cfg.window_schedule()) + 2))
    gen = _family(cfg, model)
    try:
        fam = build_foliation(gen, cfg.beta_grid(), window, f["equilibrium_tol"], cfg.threads)
    except FoliationError as exc:
        raise HypothesisError("A1 (equilibrium)", str(exc))
    check_axioms(fam, a3_threshold=f["a3_threshold"])
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    fio.write_csv(out / "foliation.csv", foliation_rows(fam))
    fio.write_json(out / "foliation.json", foliation_summary(fam))
    result = verify_theorem(fam, spec, cfg.window_schedule(), cfg.verify_betas(),
                            gamma_tol=v["gamma_tol"], stationarity_tol=v["stationarity_tol"],
                            threads=cfg.threads, seed=cfg.seed, max_iter=v["max_iter"])
    fio.write_csv(out / "verify.csv", report_rows(result))
    summary = report_summary(result)
    summary["source"] = fam.source
    fio.write_json(out / "verify.json", summary)
    if not result.passed:
        w = result.worst
        raise _Fail(EXIT_CONCLUSION, "ConclusionFailure",
                    f"{result.violations} violation(s); worst beta={w.beta!r}, "
                    f"window size {w.window_size}, gamma_star={w.gamma_star!r}",
                    beta=w.beta, window_size=w.window_size, gamma_star=w.gamma_star,
                    window_monotone=result.window_monotone)
    print(f"pass: {len(result.reports)} (beta, window) pairs, max gamma_star "
          f"{summary['max_gamma_star']!r}, max stationarity {summary['max_stationarity']!r}")
    return EXIT_PASS


def cmd_report(cfg: fio.RunConfig) -> int:
    out = cfg.output_dir
    verify_csv = _require(out / "verify.csv", "verify output (run `fkground verify` first)")
    fol_csv = _require(out / "foliation.csv", "foliation output (run `fkground verify` first)")
    rows = fio.read_csv(verify_csv)
    by_size: dict[int, list] = {}
    for r in rows:
        by_size.setdefault(int(r["window_size"]), []).append(r)
    table = [["window_size", "n_beta", "max_gamma_star", "min_gamma_star", "max_stationarity",
              "n_fail"]]
    for size in sorted(by_size):
        rs = by_size[size]
        g = [float(r["gamma_star"]) for r in rs]
        st = [float(r["stationarity"]) for r in rs]
        table.append([size, len(rs), max(g), min(g), max(st),
                      sum(r["verdict"] != "pass" for r in rs)])
    fio.write_csv(out / "report_gamma_by_window.csv", table)
    fol = fio.read_csv(fol_csv)
    margins = [["beta", "ordering_margin", "monotonicity_margin"]]
    for r in fol:
        margins.append([float(r["beta"]), r["ordering_margin"], r["monotonicity_margin"]])
    fio.write_csv(out / "report_ordering_margin.csv", margins)
    written = ["report_gamma_by_window.csv", "report_ordering_margin.csv"]
    if cfg.foliation["source"] == "hull":
        hull = fio.load_hull(_require(cfg.resolve(cfg.foliation["hull_file"]), "hull file"))
        x = np.linspace(0.0, 1.0, cfg.report["section_points"])
        pts = x[:, None] * hull.alpha
        hv = hull.evaluate(pts)
        dv = 1.0 + hull.derivative().evaluate(pts)
        sec = [["x", "h", "one_plus_d_alpha_h"]] + [[a, b, c] for a, b, c in zip(x, hv, dv)]
        fio.write_csv(out / "report_hull_section.csv", sec)
        written.append("report_hull_section.csv")
    print("wrote " + ", ".join(written))
    return EXIT_PASS


def cmd_check_model(path: Path, output_dir: Path | None, seed: int) -> int:
    model = fio.load_model(_require(path, "model file"))
    spec = model.spec
    window = chain(-10, 10) if spec.dim == 1 else None
    if window is None:
        raise UsageError("check-model supports one-dimensional chains")
    probes = _probe_configs(spec, model.omega, window, seed)
    ferro = ferromagnetic_check(spec, probes, window)
    graph = build_graph(spec, probes, window)
    trans = transitivity_report(spec, graph)
    coercive = all(coercivity_probe(spec, probes[0], None, s).passed for s in window)
    problems = check_terms(spec, probes[0], window)
    report = {
        "model": model.kind,
        "ferromagnetic": {"passed": ferro.is_ferromagnetic,
                          "worst_entry": None if ferro.worst_entry is None else
                          [list(ferro.worst_entry[0]), list(ferro.worst_entry[1]),
                           ferro.worst_entry[2]],
                          "n_probes": ferro.n_probes, "note": ferro.note},
        "transitivity": {"passed": is_transitive(graph), "n_components": trans.n_components,
                         "translation_invariant_edges": trans.translation_invariant_edges},
        "coercivity": {"passed": coercive},
        "term_problems": problems,
    }
    if model.potential is not None:
        report["nonresonance_min_k_alpha"] = model.potential.nonresonance()
    if output_dir is not None:
        fio.write_json(Path(output_dir) / "check_model.json", report)
    print(json.dumps(fio._jsonable(report), sort_keys=True))
    ok = ferro.is_ferromagnetic and report["transitivity"]["passed"] and coercive
    if problems:
        raise ModelFileError("; ".join(problems))
    if not ok:
        failed = [k for k in ("ferromagnetic", "transitivity", "coercivity")
                  if not report[k]["passed"]]
        raise HypothesisError(failed[0] if failed[0] != "ferromagnetic" else "ferromagnetic_check",
                              "see report")
    return EXIT_PASS


def cmd_contact(path: Path, output_dir: Path | None) -> int:
    sc = fio.load_scenario(_require(path, "scenario file"))
    model = fio.load_model(_require(sc.model_path, "model file"))
    spec = model.spec
    if sc.base == "hull":
        hull = fio.load_hull(_require(sc.hull_file, "hull file"))
        base = sample_config(hull, beta=sc.beta)
    else:
        w = sc.omega if sc.omega is not None else (model.omega or 0.0)
        base = LatticeConfiguration(linear_background(w, sc.beta))
    scenario = ContactScenario.create(spec, base, sc.eta, sc.contact_site, sc.window,
                                      sc.scenario_tol)
    res = contact_propagation(spec, scenario, sc.contact_tol, sc.scenario_tol)
    report = {"certified_zero": [list(s) for s in res.certified],
              "frontier": [list(s) for s in res.frontier], "strict": res.strict,
              "steps": res.steps, "eta_sign": scenario.sign}
    if output_dir is not None:
        fio.write_json(Path(output_dir) / "contact.json", report)
    print(json.dumps(fio._jsonable(report), sort_keys=True))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fkground", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("solve-hull", "solve the hull equation and write the hull file"),
                        ("verify", "build the foliation and verify the ground-state property"),
                        ("report", "emit plot-ready CSV tables from a previous run")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", type=Path, help="run configuration (TOML)")
        sp.add_argument("--output-dir", type=Path, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
    sp = sub.add_parser("check-model", help="check the theorem's hypotheses for a model file")
    sp.add_argument("model", type=Path)
    sp.add_argument("--output-dir", type=Path, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp = sub.add_parser("contact", help="run contact propagation on a scenario file")
    sp.add_argument("scenario", type=Path)
    sp.add_argument("--output-dir", type=Path, default=None)
    return p


def _write_error(output_dir, payload):
    if output_dir is None:
        return
    try:
        fio.write_json(Path(output_dir) / "error.json", payload)
    except OSError:
        pass


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    output_dir = getattr(args, "output_dir", None)
    try:
        if args.command in ("solve-hull", "verify", "report"):
            cfg = _load_config(args)
            output_dir = cfg.output_dir
            fn = {"solve-hull": cmd_solve_hull, "verify": cmd_verify,
                  "report": cmd_report}[args.command]
            return fn(cfg)
        if args.command == "check-model":
            return cmd_check_model(args.model, args.output_dir, args.seed)
        return cmd_contact(args.scenario, args.output_dir)
    except _Fail as exc:
        payload = {"error": exc.kind, "message": str(exc), "exit_status": exc.code, **exc.detail}
        code = exc.code
    except HypothesisError as exc:
        payload = {"error": "HypothesisError", "hypothesis": exc.hypothesis,
                   "message": str(exc), "exit_status": EXIT_HYPOTHESIS}
        code = EXIT_HYPOTHESIS
    except (PreconditionError, GraphError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "exit_status": EXIT_HYPOTHESIS}
        code = EXIT_HYPOTHESIS
    except ContactError as exc:
        payload = {"error": "ContactError", "message": str(exc), "site": exc.site,
                   "value": exc.value, "exit_status": EXIT_CONCLUSION}
        code = EXIT_CONCLUSION
    except (UsageError, ModelFileError, ContractError, OSError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_status": EXIT_USAGE}
        code = EXIT_USAGE
    except FKGroundError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "exit_status": EXIT_CONCLUSION}
        code = EXIT_CONCLUSION
    print(f"fkground: {payload['message']}", file=sys.stderr)
    _write_error(output_dir, payload)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
