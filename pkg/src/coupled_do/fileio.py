"""File formats: model files, dataset and result CSVs, and INI configs.

All numeric fields are serialized with 17 significant digits so that a
load of a save reproduces every value bit-exactly.  CSV files are plain
RFC-4180 with a header row; the column sets below are versioned and
covered by golden-file tests.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .basis import BasisConfig
from .errors import ConfigError, DataError
from .learner import FitReport, SeparatedModel, TrajectoryDataset
from .sim import ScenarioResult

MODEL_FORMAT_VERSION = 1
DATASET_CSV_VERSION = 1
SCENARIO_CSV_VERSION = 1

SCENARIO_CSV_COLUMNS = ["t", "eta", "eta_d", "v", "u", "delta_true", "delta_hat", "mode"]
REPORT_CSV_COLUMNS = ["function", "p", "noise_variance", "delta", "seed", "n_train",
                      "n_test", "train_mae", "test_mae", "gram_condition",
                      "residual_sup", "theta_error"]
SWEEP_CSV_COLUMNS = ["function", "p", "noise_variance", "seed", "test_mae", "status"]
METRICS_CSV_COLUMNS = ["mode", "seed", "tracking_mae", "estimation_mae",
                       "estimation_tail_mae", "decay_slope", "gain_failures"]


def fmt(value: float) -> str:
    """Decimal form that round-trips float64 exactly."""
    return format(float(value), ".17g")


def dataset_digest(data: TrajectoryDataset) -> str:
    """Stable content hash of a dataset (order-sensitive)."""
    h = hashlib.sha256()
    for arr in (data.t, data.x, data.u, data.delta):
        if arr is not None:
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return "sha256:" + h.hexdigest()[:16]


# --- model files -------------------------------------------------------------

def save_model(path, model: SeparatedModel, seed: Optional[int] = None,
               delta: Optional[float] = None, digest: str = "",
               timestamp: Optional[str] = None) -> None:
    """Write a model file: versioned header, basis fields, theta block."""
    cfg = model.config
    lines = [
        f"format_version = {MODEL_FORMAT_VERSION}",
        f"p = {cfg.p}",
        f"n = {cfg.n}",
        f"feature_dim = {cfg.feature_dim}",
        f"normalize = {'true' if cfg.normalize else 'false'}",
        "x_box = " + "; ".join(f"{fmt(lo)},{fmt(hi)}" for lo, hi in cfg.x_box),
        "t_box = " + "; ".join(f"{fmt(lo)},{fmt(hi)}" for lo, hi in cfg.t_box),
        f"seed = {'' if seed is None else seed}",
        f"ridge_delta = {'' if delta is None else fmt(delta)}",
        f"dataset_digest = {digest}",
        "created = " + (timestamp if timestamp is not None
                        else datetime.now(timezone.utc).isoformat(timespec="seconds")),
        f"theta_rows = {model.theta.shape[0]}",
        f"theta_cols = {model.theta.shape[1]}",
        "theta =",
    ]
    for row in model.theta:
        lines.append("  " + " ".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> SeparatedModel:
    """Read a model file written by :func:`save_model`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    fields: dict[str, str] = {}
    theta_lines: list[str] = []
    in_theta = False
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if in_theta:
            theta_lines.append(line)
            continue
        if line == "theta =":
            in_theta = True
            continue
        if "=" not in line:
            raise DataError(f"model file line not key = value: {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()

    try:
        version = int(fields["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format version {version}")
        cfg = BasisConfig(
            p=int(fields["p"]), n=int(fields["n"]),
            feature_dim=int(fields["feature_dim"]),
            x_box=_parse_box(fields["x_box"]),
            t_box=_parse_box(fields["t_box"]),
            normalize=fields["normalize"] == "true")
        rows, cols = int(fields["theta_rows"]), int(fields["theta_cols"])
        theta = np.array([[float(v) for v in line.split()] for line in theta_lines])
    except KeyError as exc:
        raise DataError(f"model file missing field {exc}") from exc
    except ValueError as exc:
        raise DataError(f"model file malformed: {exc}") from exc
    if theta.shape != (rows, cols):
        raise DataError(f"theta block is {theta.shape}, header says ({rows}, {cols})")
    return SeparatedModel(theta=theta, config=cfg)


def _parse_box(text: str) -> list[list[float]]:
    out = []
    for pair in text.split(";"):
        lo, hi = pair.split(",")
        out.append([float(lo), float(hi)])
    return out


# --- dataset CSV --------------------------------------------------------------

def dataset_columns(n: int, o: int, with_delta: bool) -> list[str]:
    cols = ["t"] + [f"x_{i+1}" for i in range(n)] + [f"u_{i+1}" for i in range(o)]
    if with_delta:
        cols += [f"delta_{i+1}" for i in range(n)]
    return cols


def save_dataset(path, data: TrajectoryDataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset_columns(data.n, data.o, data.delta is not None))
        for i in range(len(data)):
            row = [fmt(data.t[i])] + [fmt(v) for v in data.x[i]] + [fmt(v) for v in data.u[i]]
            if data.delta is not None:
                row += [fmt(v) for v in data.delta[i]]
            writer.writerow(row)


def load_dataset(path) -> TrajectoryDataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"dataset file is empty: {path}")
        rows = [[float(v) for v in row] for row in reader if row]
    n = sum(1 for c in header if c.startswith("x_"))
    o = sum(1 for c in header if c.startswith("u_"))
    with_delta = any(c.startswith("delta_") for c in header)
    expected = dataset_columns(n, o, with_delta)
    if header != expected:
        raise DataError(f"dataset columns {header} do not match schema {expected}")
    if not rows:
        raise DataError(f"dataset has a header but no records: {path}")
    arr = np.asarray(rows)
    return TrajectoryDataset(
        t=arr[:, 0], x=arr[:, 1:1 + n], u=arr[:, 1 + n:1 + n + o],
        delta=arr[:, 1 + n + o:] if with_delta else None)


# --- scenario CSV -------------------------------------------------------------

def save_scenario(path, result: ScenarioResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCENARIO_CSV_COLUMNS)
        for i in range(len(result.t)):
            writer.writerow([fmt(result.t[i]), fmt(result.eta[i]), fmt(result.eta_d[i]),
                             fmt(result.v[i]), fmt(result.u[i]), fmt(result.delta_true[i]),
                             fmt(result.delta_hat[i]), result.mode])


def load_scenario_series(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"scenario file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCENARIO_CSV_COLUMNS:
            raise DataError(f"scenario columns {reader.fieldnames} do not match "
                            f"schema {SCENARIO_CSV_COLUMNS}")
        rows = list(reader)
    out = {c: np.array([float(r[c]) for r in rows]) for c in SCENARIO_CSV_COLUMNS[:-1]}
    out["mode"] = rows[0]["mode"] if rows else ""
    return out


# --- append-style result CSVs --------------------------------------------------

def append_csv_row(path, columns: list[str], row: list) -> None:
    """Append one row, creating the file with its header when missing."""
    path = Path(path)
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(columns)
        writer.writerow(row)


def report_row(function: str, p: int, sigma2: float, delta: float, seed: int,
               n_train: int, n_test: int, report: FitReport) -> list:
    return [function, p, fmt(sigma2), fmt(delta), seed, n_train, n_test,
            fmt(report.train_mae), fmt(report.test_mae), fmt(report.gram_condition),
            fmt(report.residual_sup),
            "" if report.theta_error is None else fmt(report.theta_error)]


def existing_sweep_keys(path) -> set[tuple]:
    """Keys (function, p, noise_variance) already present in a sweep CSV."""
    path = Path(path)
    if not path.exists():
        return set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_CSV_COLUMNS:
            raise DataError(f"sweep columns {reader.fieldnames} do not match "
                            f"schema {SWEEP_CSV_COLUMNS}")
        return {(r["function"], int(r["p"]), float(r["noise_variance"])) for r in reader}


# --- INI configuration ----------------------------------------------------------

_DEFAULTS = {
    "basis": {"p": "2", "normalize": "false", "x_box": "", "t_box": ""},
    "learning": {"function": "quad_drag_drift", "delta": "0.01", "n_samples": "10000",
                 "train_fraction": "0.5", "window": "9", "fit_order": "3",
                 "seed": "0", "noise_variance": "0.1"},
    "observer": {"poles": "-0.4, -0.4, -0.4", "cond_limit": "1e8", "ndo_gain": "0.4"},
    "scenario": {"plant": "newton", "k_eta": "10", "k_v": "25", "mass": "1",
                 "eta0": "0", "v0": "0", "sigma_v2": "0.1", "dt": "0.001",
                 "duration": "20", "modes": "none, ndo, hodo", "seed": "0",
                 "log_sigma": "false"},
    "sweep": {"functions": "sine_product, cubic_drift, sine_cubic",
              "p_values": "1, 2, 3, 4, 5, 6",
              "noise_variances": "0, 0.01, 0.05, 0.1"},
    "io": {"out_dir": "out", "model_file": "", "dataset_file": "", "results_file": ""},
}


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment configuration.

    Sections mirror the INI file; every downstream invariant is checked
    at load time and violations name the offending ``section.field``.
    """

    basis: dict = field(default_factory=dict)
    learning: dict = field(default_factory=dict)
    observer: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    io: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return getattr(self, name)


def _typed(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            if raw.lower() not in ("true", "false"):
                raise ValueError("expected true or false")
            return raw.lower() == "true"
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from exc


def _float_list(section: str, key: str, raw: str) -> list[float]:
    if not raw.strip():
        raise ConfigError(f"{section}.{key}: must be a non-empty list")
    return [_typed(section, key, part.strip(), float) for part in raw.split(",")]


def _positive(section: str, key: str, value):
    if value <= 0:
        raise ConfigError(f"{section}.{key}: must be > 0, got {value}")
    return value


def load_config(path) -> ExperimentConfig:
    """Parse an INI experiment file, applying defaults and validating."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"config file malformed: {exc}") from exc

    merged = {sec: dict(defaults) for sec, defaults in _DEFAULTS.items()}
    for sec in parser.sections():
        if sec not in merged:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, value in parser.items(sec):
            if key not in merged[sec]:
                raise ConfigError(f"{sec}.{key}: unknown field")
            merged[sec][key] = value

    cfg = ExperimentConfig(**merged)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> dict:
    """Type-check every field; returns the typed view used by commands."""
    b, l, o, s, w = cfg.basis, cfg.learning, cfg.observer, cfg.scenario, cfg.sweep
    typed = {}
    typed["p"] = _typed("basis", "p", b["p"], int)
    if typed["p"] < 0:
        raise ConfigError(f"basis.p: must be >= 0, got {typed['p']}")
    typed["normalize"] = _typed("basis", "normalize", b["normalize"], bool)
    for key in ("x_box", "t_box"):
        raw = b[key].strip()
        if raw:
            pair = _float_list("basis", key, raw)
            if len(pair) != 2 or pair[0] >= pair[1]:
                raise ConfigError(f"basis.{key}: expected 'lo, hi' with lo < hi, got {raw!r}")
            typed[key] = (pair[0], pair[1])
        else:
            typed[key] = None

    typed["function"] = l["function"]
    typed["ridge_delta"] = _positive("learning", "delta", _typed("learning", "delta", l["delta"], float))
    typed["n_samples"] = _positive("learning", "n_samples", _typed("learning", "n_samples", l["n_samples"], int))
    typed["train_fraction"] = _typed("learning", "train_fraction", l["train_fraction"], float)
    if not 0.0 < typed["train_fraction"] < 1.0:
        raise ConfigError(f"learning.train_fraction: must be in (0, 1), got {typed['train_fraction']}")
    typed["window"] = _typed("learning", "window", l["window"], int)
    typed["fit_order"] = _typed("learning", "fit_order", l["fit_order"], int)
    typed["seed"] = _typed("learning", "seed", l["seed"], int)
    typed["noise_variance"] = _typed("learning", "noise_variance", l["noise_variance"], float)
    if typed["noise_variance"] < 0:
        raise ConfigError(f"learning.noise_variance: must be >= 0, got {typed['noise_variance']}")

    typed["poles"] = tuple(_float_list("observer", "poles", o["poles"]))
    if any(p >= 0 for p in typed["poles"]):
        raise ConfigError("observer.poles: all poles must be strictly negative")
    typed["cond_limit"] = _positive("observer", "cond_limit", _typed("observer", "cond_limit", o["cond_limit"], float))
    typed["ndo_gain"] = _positive("observer", "ndo_gain", _typed("observer", "ndo_gain", o["ndo_gain"], float))

    typed["plant"] = s["plant"]
    if typed["plant"] != "newton":
        raise ConfigError(f"scenario.plant: only 'newton' is available, got {typed['plant']!r}")
    for key, kind in (("k_eta", float), ("k_v", float), ("mass", float),
                      ("dt", float), ("duration", float)):
        typed[key] = _positive("scenario", key, _typed("scenario", key, s[key], kind))
    for key in ("eta0", "v0"):
        typed[key] = _typed("scenario", key, s[key], float)
    typed["sigma_v2"] = _typed("scenario", "sigma_v2", s["sigma_v2"], float)
    if typed["sigma_v2"] < 0:
        raise ConfigError(f"scenario.sigma_v2: must be >= 0, got {typed['sigma_v2']}")
    typed["modes"] = [m.strip() for m in s["modes"].split(",") if m.strip()]
    for m in typed["modes"]:
        if m not in ("none", "ndo", "hodo"):
            raise ConfigError(f"scenario.modes: must be none|ndo|hodo, got {m!r}")
    typed["scenario_seed"] = _typed("scenario", "seed", s["seed"], int)
    typed["log_sigma"] = _typed("scenario", "log_sigma", s["log_sigma"], bool)

    typed["sweep_functions"] = [f.strip() for f in w["functions"].split(",") if f.strip()]
    typed["p_values"] = [int(v) for v in _float_list("sweep", "p_values", w["p_values"])]
    typed["noise_variances"] = _float_list("sweep", "noise_variances", w["noise_variances"])

    typed["out_dir"] = cfg.io["out_dir"]
    typed["model_file"] = cfg.io["model_file"]
    typed["dataset_file"] = cfg.io["dataset_file"]
    typed["results_file"] = cfg.io["results_file"]
    return typed


def save_config(path, cfg: ExperimentConfig) -> None:
    """Write a config back to INI form (field-for-field)."""
    parser = configparser.ConfigParser()
    for sec in _DEFAULTS:
        parser[sec] = cfg.section(sec)
    with open(path, "w") as fh:
        parser.write(fh)
