"""Run-configuration schema, result envelopes and deterministic file output."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .fields import ConfigError, FieldConfig, config_from_dict
from .spin import Gauge

UNITS = {
    "system": "reduced",
    "energy": "mu_B |g_F| x field; hbar = 1, so energies are angular frequencies",
    "field": "Larmor angular frequency mu_B |g_F| B / hbar",
    "gradient": "B' = 1 unless set in the config",
    "length": "config units (rho_0 for rings, L for Ioffe-Pritchard traps)",
    "time": "1 / (mu_B |g_F| B' x length unit)",
    "phase": "radians",
}

# allowed keys per block, with their expected JSON types
_SCHEMA = {
    "scan": {"window": list, "half_width": (int, float), "center": list, "resolution": (list, int),
             "route": str, "figure": bool},
    "trajectory": {"kind": str, "period": (int, float), "rho": (int, float), "z": (int, float),
                   "winding": int, "phi0": (int, float), "rho_split": (int, float, type(None)),
                   "z_span": (int, float, type(None)), "waypoints": (list, type(None)),
                   "closed": bool, "ramp": str},
    "evolve": {"tol": (int, float), "doublings": int, "initial": str, "commensurate": bool,
               "nonadiabatic_correction": bool, "steps_per_period": int, "min_fidelity": (int, float),
               "workers": int},
    "validity": {"rwa_threshold": (int, float), "adiabatic_threshold": (int, float),
                 "samples": int, "period": (int, float)},
    "compare": {"samples": int, "oracle": bool},
}
_TOP = {"config", "gauge", "branch", "spin", "threads", *_SCHEMA}


@dataclass
class RunConfig:
    config: dict
    gauge: str = "rotation"
    branch: float = 1
    spin: float = 1
    threads: int = 1
    scan: dict = field(default_factory=dict)
    trajectory: dict | None = None
    evolve: dict = field(default_factory=dict)
    validity: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)

    def field_config(self) -> FieldConfig:
        return config_from_dict(self.config)

    def to_dict(self) -> dict:
        d = {"config": dict(self.config), "gauge": self.gauge, "branch": self.branch,
             "spin": self.spin, "threads": self.threads}
        for k in _SCHEMA:
            v = getattr(self, k)
            if v:
                d[k] = v
        return d


def _check_block(name: str, block) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be an object")
    allowed = _SCHEMA[name]
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"'{name}': unknown keys {sorted(unknown)}")
    for k, v in block.items():
        types = allowed[k] if isinstance(allowed[k], tuple) else (allowed[k],)
        if isinstance(v, bool) and bool not in types:
            raise ConfigError(f"'{name}.{k}' has the wrong type")
        if not isinstance(v, types):
            raise ConfigError(f"'{name}.{k}' has the wrong type")
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"'{name}.{k}' must be finite")
    return dict(block)


def parse_run_config(doc) -> RunConfig:
    """Validate a run-configuration document; raises ConfigError on any schema problem."""
    if not isinstance(doc, dict):
        raise ConfigError("run configuration must be a JSON object")
    unknown = set(doc) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "config" not in doc:
        raise ConfigError("missing 'config' block")
    config_from_dict(doc["config"])  # validates kind and parameters
    try:
        gauge = Gauge.parse(doc.get("gauge", "rotation")).value
    except ValueError:
        raise ConfigError(f"unknown gauge {doc.get('gauge')!r}") from None
    branch = doc.get("branch", 1)
    spin = doc.get("spin", 1)
    threads = doc.get("threads", 1)
    for name, v in (("branch", branch), ("spin", spin)):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{name}' must be a number")
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError("'threads' must be a positive integer")
    _check_branch(spin, branch)
    blocks = {k: _check_block(k, doc[k]) for k in _SCHEMA if k in doc}
    return RunConfig(dict(doc["config"]), gauge, branch, spin, threads,
                     blocks.get("scan", {}), blocks.get("trajectory"), blocks.get("evolve", {}),
                     blocks.get("validity", {}), blocks.get("compare", {}))


def _check_branch(spin, branch):
    two_f = 2 * spin
    if spin < 0 or abs(two_f - round(two_f)) > 1e-12:
        raise ConfigError("'spin' must be a non-negative half-integer")
    k = spin - branch
    if abs(k - round(k)) > 1e-12 or not 0 <= round(k) <= round(two_f):
        raise ConfigError(f"branch {branch} is not a projection for spin {spin}")


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_run_config(doc)


# -- output ---------------------------------------------------------------

def format_float(x: float) -> str:
    """17 significant digits; NaN and infinities become an empty field."""
    if x is None or not math.isfinite(x):
        return ""
    return "%.17g" % x


def grid_csv(grid) -> str:
    lines = ["rho,z,gamma_n"]
    for rho, z, g in grid.rows():
        lines.append(f"{format_float(rho)},{format_float(z)},{format_float(g)}")
    return "\n".join(lines) + "\n"


def atomic_write(path, data: str | bytes) -> Path:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (bool, int, float, str)) or x is None:
        return x
    return str(x)


def envelope(command: str, run: RunConfig, *, wall_time: float, verdicts: dict,
             data: dict, status: str = "ok") -> dict:
    return {
        "tool": "arfp-berry",
        "version": __version__,
        "command": command,
        "status": status,
        "units": UNITS,
        "run_config": run.to_dict(),
        "data": data,
        "wall_time_s": wall_time,
        "verdicts": verdicts,
    }


def dump_json(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"
