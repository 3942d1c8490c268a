"""File formats: TOML model/config/scenario files, hull JSON, CSV and JSON reports.

Every table is parsed strictly: unknown keys raise :class:`ModelFileError`.
Floats are written with ``repr`` so files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import builtins as bi
from .errors import ModelFileError
from .hull import HullFunction
from .model import InteractionSpec, TorusPotential

MODEL_KINDS = ("fk-periodic", "fk-quasiperiodic", "long-range-pair", "three-body-demo",
               "antiferromagnetic-demo", "decoupled", "two-block")


def load_toml(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise ModelFileError(f"{path}: {exc}") from exc


def _check_keys(table: dict, allowed, where: str):
    if not isinstance(table, dict):
        raise ModelFileError(f"[{where}] must be a table")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ModelFileError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _num(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelFileError(f"{where} must be a number")
    v = float(v)
    if not math.isfinite(v):
        raise ModelFileError(f"{where} must be finite")
    return v


def _int(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ModelFileError(f"{where} must be an integer")
    return int(v)


def _vector(v, where) -> list[float]:
    if not isinstance(v, list) or not v:
        raise ModelFileError(f"{where} must be a nonempty array")
    return [_num(x, f"{where}[{i}]") for i, x in enumerate(v)]


# ---------------------------------------------------------------------------
# model files


@dataclass
class ModelDescription:
    kind: str
    spec: InteractionSpec
    omega: float | None
    potential: TorusPotential | None
    source: str = ""

    @property
    def is_quasiperiodic(self) -> bool:
        return self.potential is not None and self.potential.d >= 2


def parse_potential(table: dict, alpha) -> TorusPotential:
    _check_keys(table, ("epsilon", "coefficients"), "model.potential")
    if ("epsilon" in table) == ("coefficients" in table):
        raise ModelFileError("[model.potential] needs exactly one of epsilon, coefficients")
    if "epsilon" in table:
        eps = _num(table["epsilon"], "model.potential.epsilon")
        return bi.demo_potential(eps, alpha) if len(alpha) > 1 else bi.cosine_potential(eps)
    coeffs = {}
    rows = table["coefficients"]
    if not isinstance(rows, list):
        raise ModelFileError("model.potential.coefficients must be an array of [k, re, im]")
    for n, row in enumerate(rows):
        where = f"model.potential.coefficients[{n}]"
        if not isinstance(row, list) or len(row) != 3 or not isinstance(row[0], list):
            raise ModelFileError(f"{where} must be [k-vector, real, imag]")
        k = tuple(_int(c, where) for c in row[0])
        if len(k) != len(alpha):
            raise ModelFileError(f"{where}: k has length {len(k)}, alpha has {len(alpha)}")
        coeffs[k] = complex(_num(row[1], where), _num(row[2], where))
    try:
        return TorusPotential(alpha, coeffs)
    except ValueError as exc:
        raise ModelFileError(f"model.potential: {exc}") from exc


def parse_model(data: dict, source: str = "") -> ModelDescription:
    _check_keys(data, ("model",), "top level of model file")
    if "model" not in data:
        raise ModelFileError("model file needs a [model] table")
    m = data["model"]
    _check_keys(m, ("kind", "dim", "omega", "alpha", "potential", "cutoff", "decay",
                    "couplings", "kappa", "coupling", "cut"), "model")
    kind = m.get("kind")
    if kind not in MODEL_KINDS:
        raise ModelFileError(f"model.kind must be one of {', '.join(MODEL_KINDS)}")
    dim = _int(m.get("dim", 1), "model.dim")
    omega = _num(m["omega"], "model.omega") if "omega" in m else None
    alpha = _vector(m["alpha"], "model.alpha") if "alpha" in m else None
    pot = None
    if "potential" in m:
        if alpha is None:
            alpha = bi.DEMO_ALPHA if kind == "fk-quasiperiodic" else [1.0]
        pot = parse_potential(m["potential"], alpha)
    allowed_extra = {
        "long-range-pair": {"cutoff", "decay", "couplings"},
        "three-body-demo": {"kappa"},
        "antiferromagnetic-demo": {"coupling"},
        "two-block": {"cut"},
    }.get(kind, set())
    extra = {"cutoff", "decay", "couplings", "kappa", "coupling", "cut"} & set(m)
    if extra - allowed_extra:
        raise ModelFileError(f"key(s) {sorted(extra - allowed_extra)} not valid for {kind}")
    try:
        if kind == "fk-periodic":
            spec = bi.fk_periodic(pot, dim)
        elif kind == "fk-quasiperiodic":
            if pot is None:
                pot = TorusPotential.zero(alpha or bi.DEMO_ALPHA)
            spec = bi.fk_quasiperiodic(pot)
        elif kind == "long-range-pair":
            couplings = None
            if "couplings" in m:
                couplings = {}
                for n, row in enumerate(m["couplings"]):
                    if not isinstance(row, list) or len(row) != 2:
                        raise ModelFileError(f"model.couplings[{n}] must be [r, c]")
                    couplings[_int(row[0], "coupling distance")] = _num(row[1], "coupling")
            spec = bi.long_range_pair(couplings, _int(m.get("cutoff", 20), "model.cutoff"),
                                      _num(m.get("decay", 0.5), "model.decay"), pot)
        elif kind == "three-body-demo":
            spec = bi.three_body_demo(_num(m.get("kappa", 0.25), "model.kappa"), pot)
        elif kind == "antiferromagnetic-demo":
            spec = bi.antiferromagnetic_demo(_num(m.get("coupling", 1.0), "model.coupling"))
        elif kind == "decoupled":
            spec = bi.decoupled_demo()
        else:
            spec = bi.two_block_demo(_int(m.get("cut", 0), "model.cut"))
    except ModelFileError:
        raise
    except ValueError as exc:
        raise ModelFileError(f"model: {exc}") from exc
    if spec.dim != dim:
        raise ModelFileError(f"model.dim = {dim} but {kind} has dimension {spec.dim}")
    return ModelDescription(kind, spec, omega, pot, source)


def load_model(path) -> ModelDescription:
    return parse_model(load_toml(path), str(path))


# ---------------------------------------------------------------------------
# run configuration


DEFAULTS = {
    "solve": {"n_trunc": 32, "tol": 1e-12, "max_iter": 12, "divisor_floor": 1e-6,
              "epsilon_schedule": None, "hull_file": "hull.json", "max_halvings": 8},
    "foliation": {"source": "linear", "hull_file": "hull.json", "beta_min": -2.0,
                  "beta_max": 2.0, "n_beta": 101, "tail": 1000.0, "window": [-50, 50],
                  "equilibrium_tol": None, "a3_threshold": 100.0},
    "verify": {"betas": 21, "window_sizes": 15, "gamma_tol": 1e-8,
               "stationarity_tol": 1e-8, "max_iter": 100},
    "report": {"section_points": 201},
}


@dataclass
class RunConfig:
    model_path: Path
    output_dir: Path
    threads: int = 1
    seed: int = 0
    solve: dict = field(default_factory=dict)
    foliation: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def resolve(self, name: str) -> Path:
        """Paths inside the output directory unless absolute."""
        p = Path(name)
        return p if p.is_absolute() else self.output_dir / p

    def beta_grid(self) -> list[float]:
        f = self.foliation
        core = np.linspace(f["beta_min"], f["beta_max"], f["n_beta"]).tolist()
        if f["tail"]:
            return [-f["tail"]] + core + [f["tail"]]
        return core

    def verify_betas(self) -> list[float]:
        b = self.verify["betas"]
        if isinstance(b, list):
            return [float(x) for x in b]
        f = self.foliation
        return np.linspace(f["beta_min"], f["beta_max"], b).tolist()

    def window_schedule(self) -> list[int]:
        w = self.verify["window_sizes"]
        return list(range(1, w + 1)) if isinstance(w, int) else [int(x) for x in w]


def _section(data, name):
    table = dict(DEFAULTS[name])
    given = data.get(name, {})
    _check_keys(given, DEFAULTS[name], name)
    table.update(given)
    return table


def parse_config(data: dict, base_dir: Path, source: str = "config") -> RunConfig:
    _check_keys(data, ("model", "output_dir", "threads", "seed", "solve", "foliation",
                       "verify", "report"), f"top level of {source}")
    if "model" not in data or not isinstance(data["model"], str):
        raise ModelFileError("config needs model = \"path/to/model.toml\"")
    cfg = RunConfig(
        model_path=(base_dir / data["model"]),
        output_dir=(base_dir / data.get("output_dir", "out")),
        threads=_int(data.get("threads", 1), "threads"),
        seed=_int(data.get("seed", 0), "seed"),
        solve=_section(data, "solve"),
        foliation=_section(data, "foliation"),
        verify=_section(data, "verify"),
        report=_section(data, "report"),
        base_dir=base_dir,
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.threads < 1:
        raise ModelFileError("threads must be >= 1")
    s, f, v = cfg.solve, cfg.foliation, cfg.verify
    for key in ("tol", "divisor_floor"):
        if _num(s[key], f"solve.{key}") <= 0:
            raise ModelFileError(f"solve.{key} must be positive")
    for key in ("n_trunc", "max_iter", "max_halvings"):
        if _int(s[key], f"solve.{key}") < (0 if key == "max_halvings" else 1):
            raise ModelFileError(f"solve.{key} out of range")
    if s["epsilon_schedule"] is not None:
        sched = _vector(s["epsilon_schedule"], "solve.epsilon_schedule")
        if any(e <= 0 for e in sched):
            raise ModelFileError("solve.epsilon_schedule entries must be positive")
    if f["source"] not in ("linear", "hull"):
        raise ModelFileError("foliation.source must be \"linear\" or \"hull\"")
    if _int(f["n_beta"], "foliation.n_beta") < 2:
        raise ModelFileError("foliation.n_beta must be >= 2")
    if not _num(f["beta_min"], "foliation.beta_min") < _num(f["beta_max"], "foliation.beta_max"):
        raise ModelFileError("foliation beta grid must be strictly increasing")
    tail = _num(f["tail"], "foliation.tail")
    if tail and tail <= max(abs(f["beta_min"]), abs(f["beta_max"])):
        raise ModelFileError("foliation.tail must exceed the core beta range (or be 0)")
    win = f["window"]
    if not (isinstance(win, list) and len(win) == 2 and win[0] <= win[1]):
        raise ModelFileError("foliation.window must be [lo, hi] with lo <= hi")
    _int(win[0], "foliation.window[0]"), _int(win[1], "foliation.window[1]")
    if f["equilibrium_tol"] is not None and _num(f["equilibrium_tol"],
                                                 "foliation.equilibrium_tol") <= 0:
        raise ModelFileError("foliation.equilibrium_tol must be positive")
    for key in ("gamma_tol", "stationarity_tol"):
        if _num(v[key], f"verify.{key}") <= 0:
            raise ModelFileError(f"verify.{key} must be positive")
    if _int(v["max_iter"], "verify.max_iter") < 1:
        raise ModelFileError("verify.max_iter must be >= 1")
    b = v["betas"]
    if isinstance(b, list):
        bs = _vector(b, "verify.betas")
        if any(y <= x for x, y in zip(bs, bs[1:])):
            raise ModelFileError("verify.betas must be strictly increasing")
    elif _int(b, "verify.betas") < 1:
        raise ModelFileError("verify.betas must be >= 1")
    w = v["window_sizes"]
    sizes = [_int(x, "verify.window_sizes") for x in w] if isinstance(w, list) else \
        [_int(w, "verify.window_sizes")]
    if not sizes or min(sizes) < 1:
        raise ModelFileError("window sizes must be >= 1")
    if _int(cfg.report["section_points"], "report.section_points") < 2:
        raise ModelFileError("report.section_points must be >= 2")


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(load_toml(path), path.parent, str(path))


# ---------------------------------------------------------------------------
# hull files


def hull_to_dict(h: HullFunction) -> dict:
    coeffs = [[list(k), c.real, c.imag] for k, c in h.coefficient_map().items()]
    return {"format": "fkground-hull", "version": 1, "d": h.d, "alpha": h.alpha.tolist(),
            "omega": h.omega, "n_trunc": h.n_trunc, "offset": h.offset, "coefficients": coeffs}


def hull_from_dict(data: dict) -> HullFunction:
    keys = ("format", "version", "d", "alpha", "omega", "n_trunc", "offset", "coefficients")
    _check_keys(data, keys, "hull file")
    if data.get("format") != "fkground-hull":
        raise ModelFileError("not a hull file")
    d, N = int(data["d"]), int(data["n_trunc"])
    M = 2 * N + 1
    coeffs = np.zeros((M,) * d, dtype=complex)
    for k, re, im in data["coefficients"]:
        if len(k) != d or max(abs(c) for c in k) > N:
            raise ModelFileError(f"coefficient index {k} outside the truncation cube")
        coeffs[tuple(c + N for c in k)] = complex(float(re), float(im))
    try:
        return HullFunction(np.asarray(data["alpha"], float), float(data["omega"]), coeffs,
                            float(data.get("offset", 0.0)))
    except ValueError as exc:
        raise ModelFileError(f"hull file: {exc}") from exc


def save_hull(h: HullFunction, path) -> None:
    write_json(path, hull_to_dict(h))


def load_hull(path) -> HullFunction:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"{path}: {exc}") from exc
    return hull_from_dict(data)


# ---------------------------------------------------------------------------
# writers


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def write_json(path, data) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# scenario files


@dataclass
class ScenarioDescription:
    model_path: Path
    base: str
    beta: float
    hull_file: Path | None
    omega: float | None
    eta: dict
    contact_site: tuple
    window: list
    contact_tol: float
    scenario_tol: float


def load_scenario(path) -> ScenarioDescription:
    path = Path(path)
    data = load_toml(path)
    _check_keys(data, ("model", "scenario"), f"top level of {path}")
    if "model" not in data or "scenario" not in data:
        raise ModelFileError("scenario file needs model = ... and a [scenario] table")
    s = data["scenario"]
    _check_keys(s, ("base", "beta", "hull_file", "omega", "eta", "contact_site", "window",
                    "contact_tol", "scenario_tol"), "scenario")
    base = s.get("base", "linear")
    if base not in ("linear", "hull"):
        raise ModelFileError("scenario.base must be \"linear\" or \"hull\"")
    if base == "hull" and "hull_file" not in s:
        raise ModelFileError("scenario.base = \"hull\" needs hull_file")
    eta = {}
    for n, row in enumerate(s.get("eta", [])):
        if not isinstance(row, list) or len(row) != 2:
            raise ModelFileError(f"scenario.eta[{n}] must be [site, value]")
        site = row[0] if isinstance(row[0], list) else [row[0]]
        eta[tuple(_int(c, "eta site") for c in site)] = _num(row[1], "eta value")
    if "contact_site" not in s or "window" not in s:
        raise ModelFileError("scenario needs contact_site and window")
    cs = s["contact_site"]
    cs = tuple(_int(c, "contact_site") for c in (cs if isinstance(cs, list) else [cs]))
    win = s["window"]
    if not (isinstance(win, list) and len(win) == 2 and all(isinstance(c, int) for c in win)):
        raise ModelFileError("scenario.window must be [lo, hi]")
    return ScenarioDescription(
        path.parent / data["model"], base, _num(s.get("beta", 0.0), "scenario.beta"),
        (path.parent / s["hull_file"]) if "hull_file" in s else None,
        _num(s["omega"], "scenario.omega") if "omega" in s else None, eta, cs,
        [(n,) for n in range(win[0], win[1] + 1)],
        _num(s.get("contact_tol", 1e-8), "scenario.contact_tol"),
        _num(s.get("scenario_tol", 1e-9), "scenario.scenario_tol"))
