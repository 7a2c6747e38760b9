"""Experiment configuration: JSON files plus dotted-path overrides."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from .process_models import ProcessSpec, validate_spec
from .rd_solver import log_s_grid

TASKS = ("simulate", "id", "rd", "rdd", "verify")
REQUIRED = {
    "simulate": ("spec", "n"),
    "id": ("spec", "n", "k_max", "b_grid"),
    "rd": ("spec", "m", "N", "s_grid"),
    "rdd": ("m", "N", "s_grid"),
    "verify": (),
}
DEFAULTS = {
    "seed": 0,
    "tol": 1e-3,
    "max_iter": 20000,
    "safety_factor": 100.0,
    "scheme": "bbit",
    "estimator": "plugin",
    "form": "increment",
    "output_dir": ".",
    "quick": False,
}


class ConfigError(ValueError):
    """Config is malformed; the message names the offending field."""


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides:
        item = item[2:] if item.startswith("--") else item
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, value = item.split("=", 1)
        keys = path.split(".")
        node = out
        for k in keys[:-1]:
            nxt = node.get(k)
            if nxt is None:
                nxt = node[k] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override path {path!r} crosses a non-object field {k!r}")
            node = nxt
        node[keys[-1]] = _parse_value(value)
    return out


@dataclass
class ExperimentConfig:
    task: str
    spec: ProcessSpec | None = None
    n: int | None = None
    seed: int = 0
    k_max: int | None = None
    b_grid: list | None = None
    m: int | None = None
    N: int | None = None
    s_grid: dict | None = None
    tol: float = 1e-3
    max_iter: int = 20000
    safety_factor: float = 100.0
    scheme: str = "bbit"
    estimator: str = "plugin"
    form: str = "increment"
    oracle: dict | None = None
    quick: bool = False
    output_dir: str = "."
    extra: dict = field(default_factory=dict)

    def slopes(self) -> list[float]:
        g = self.s_grid
        return log_s_grid(g["start_exponent"], g["stop_exponent"], g["count"])

    def to_dict(self) -> dict:
        d = {"task": self.task, "seed": self.seed, "tol": self.tol, "max_iter": self.max_iter,
             "safety_factor": self.safety_factor, "scheme": self.scheme,
             "estimator": self.estimator, "form": self.form, "quick": self.quick,
             "output_dir": self.output_dir}
        for key in ("n", "k_max", "b_grid", "m", "N", "s_grid", "oracle"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        if self.spec is not None:
            d["spec"] = self.spec.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        """Hash of everything that affects results (the output directory excluded)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _need_int(raw, key, low=None, high=None):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer")
    if (low is not None and v < low) or (high is not None and v > high):
        raise ConfigError(f"{key}={v} out of range [{low}, {high}]")
    return v


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    required = list(REQUIRED[task])
    if task == "rdd" and "oracle" not in raw:
        required.append("spec")
    if task == "rdd" and "oracle" in raw:
        required = []
    for key in required:
        if key not in raw:
            raise ConfigError(f"missing required field {key!r} for task={task}")
    known = set(DEFAULTS) | {"task", "spec", "n", "k_max", "b_grid", "m", "N", "s_grid", "oracle"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")

    vals = {**DEFAULTS, **raw}
    cfg = ExperimentConfig(task=task)
    if "spec" in raw:
        try:
            cfg.spec = ProcessSpec.from_dict(raw["spec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"spec: {exc}") from None
        report = validate_spec(cfg.spec)
        if not report.ok:
            raise ConfigError("spec: " + "; ".join(report.errors))
    cfg.seed = _need_int(vals, "seed", 0, 2**63 - 1)
    if "n" in raw:
        cfg.n = _need_int(raw, "n", 2)
    if "k_max" in raw:
        cfg.k_max = _need_int(raw, "k_max", 0, 6)
    if "b_grid" in raw:
        grid = raw["b_grid"]
        if not isinstance(grid, list) or not grid or not all(
                isinstance(b, int) and not isinstance(b, bool) and b >= 1 for b in grid):
            raise ConfigError("b_grid must be a nonempty list of positive integers")
        cfg.b_grid = sorted(set(grid))
    if "m" in raw:
        cfg.m = _need_int(raw, "m", 1, 3)
    if "N" in raw:
        cfg.N = _need_int(raw, "N", 1, 1024)
    if "s_grid" in raw:
        g = raw["s_grid"]
        if not isinstance(g, dict) or set(g) != {"start_exponent", "stop_exponent", "count"}:
            raise ConfigError("s_grid must have start_exponent, stop_exponent and count")
        if not isinstance(g["count"], int) or g["count"] < 2:
            raise ConfigError("s_grid.count must be an integer >= 2")
        if g["start_exponent"] < g["stop_exponent"]:
            raise ConfigError("s_grid.start_exponent must be >= stop_exponent (steepest slope first)")
        cfg.s_grid = {k: g[k] for k in ("start_exponent", "stop_exponent", "count")}
    try:
        cfg.tol = float(vals["tol"])
        cfg.safety_factor = float(vals["safety_factor"])
    except (TypeError, ValueError):
        raise ConfigError("tol and safety_factor must be numbers") from None
    if cfg.tol <= 0:
        raise ConfigError("tol must be positive")
    if cfg.safety_factor <= 0:
        raise ConfigError("safety_factor must be positive")
    cfg.max_iter = _need_int(vals, "max_iter", 1)
    if vals["scheme"] not in ("bbit", "blevel"):
        raise ConfigError("scheme must be 'bbit' or 'blevel'")
    if vals["estimator"] not in ("plugin", "miller_madow"):
        raise ConfigError("estimator must be 'plugin' or 'miller_madow'")
    if vals["form"] not in ("increment", "block"):
        raise ConfigError("form must be 'increment' or 'block'")
    cfg.scheme, cfg.estimator, cfg.form = vals["scheme"], vals["estimator"], vals["form"]
    cfg.quick = bool(vals["quick"])
    cfg.output_dir = str(vals["output_dir"])
    if "oracle" in raw:
        o = raw["oracle"]
        if not isinstance(o, dict) or "kind" not in o:
            raise ConfigError("oracle must be an object with a 'kind'")
        cfg.oracle = o
    return cfg


def load_config(path: str | None, overrides=(), task: str | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    if task is not None:
        if raw.get("task", task) != task:
            raise ConfigError(f"config task {raw['task']!r} does not match command {task!r}")
        raw["task"] = task
    return parse_config(apply_overrides(raw, overrides))
