"""Configuration files, trace CSV ingestion and result serialization."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from . import __version__
from .dissipator import RateModel
from .estimation import ExperimentTrace
from .hamiltonian import FieldConfig, SystemParams


class ConfigError(ValueError):
    """Invalid configuration or input file; maps to exit code 2."""


# config -------------------------------------------------------------------------

def load_config(path: str | Path) -> dict:
    """Read a YAML (or JSON) config.  A result sidecar replays its echoed config."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if "command" in data and "config" in data:
        data = data["config"]
    return data


def merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def _build(cls, section: dict | None, name: str):
    section = dict(section or {})
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name}: {exc}") from exc


def system_from(cfg: dict) -> SystemParams:
    return _build(SystemParams, cfg.get("system"), "system")


def rates_from(cfg: dict) -> RateModel:
    return _build(RateModel, cfg.get("rates"), "rates")


def field_from(cfg: dict) -> FieldConfig:
    sec = dict(cfg.get("field") or {})
    if "b_gauss" not in sec:
        raise ConfigError("field.b_gauss is required")
    try:
        return FieldConfig(float(sec["b_gauss"]), float(sec.get("theta_deg", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid field: {exc}") from exc


def grid_from(value: Any, name: str) -> list[float]:
    """A grid is an explicit list, ``{start, stop, count}`` or ``{start, stop, step}``."""
    if value is None:
        raise ConfigError(f"{name} grid is required")
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        values = [float(v) for v in value]
    elif isinstance(value, dict):
        if "values" in value:
            return grid_from(list(value["values"]), name)
        try:
            start, stop = float(value["start"]), float(value["stop"])
        except KeyError as exc:
            raise ConfigError(f"{name} grid needs start and stop") from exc
        if "count" in value:
            values = np.linspace(start, stop, int(value["count"])).tolist()
        elif "step" in value:
            step = float(value["step"])
            if step <= 0:
                raise ConfigError(f"{name} step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = (start + step * np.arange(n)).tolist()
        else:
            raise ConfigError(f"{name} grid needs count or step")
    else:
        raise ConfigError(f"cannot read {name} grid from {value!r}")
    if not values:
        raise ConfigError(f"{name} grid is empty")
    if any(not math.isfinite(v) for v in values):
        raise ConfigError(f"{name} grid has non-finite values")
    return values


def time_grid_from(cfg: dict) -> list[float]:
    t = grid_from(cfg.get("time"), "time")
    if t[0] < 0 or any(b <= a for a, b in zip(t, t[1:])):
        raise ConfigError("time grid must be strictly increasing and >= 0")
    return t


def resolved(cfg: dict) -> dict:
    """Echo of ``cfg`` with every physical default filled in."""
    out = dict(cfg)
    out["system"] = asdict(system_from(cfg))
    out["rates"] = asdict(rates_from(cfg))
    return out


# CSV ------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence],
              comments: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (comments or {}).items():
            fh.write(f"# {key} = {_fmt(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


TRACE_COLUMNS = ("t_us", "p_plus1", "p_zero")


def read_trace_csv(path: str | Path) -> ExperimentTrace:
    """Parse a measured trace: ``# b_gauss = ...`` / ``# theta_deg = ...`` comment
    lines, then columns ``t_us, p_plus1, p_zero[, sigma]``."""
    meta: dict[str, float] = {}
    header = None
    rows: list[tuple[int, list[str]]] = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text.lstrip("#").strip()
                for sep in ("=", ":"):
                    if sep in body:
                        key, value = (s.strip() for s in body.split(sep, 1))
                        try:
                            meta[key] = float(value)
                        except ValueError:
                            pass
                        break
                continue
            cells = next(csv.reader([text]))
            if header is None:
                header = [c.strip() for c in cells]
                continue
            rows.append((lineno, cells))
    if header is None:
        raise ConfigError(f"{path}: missing header row")
    missing = [c for c in TRACE_COLUMNS if c not in header]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")
    for key in ("b_gauss", "theta_deg"):
        if key not in meta:
            raise ConfigError(f"{path}: missing '# {key} = ...' header line")
    cols = {name: header.index(name) for name in header}
    data: dict[str, list[float]] = {name: [] for name in header}
    prev_t = -math.inf
    for lineno, cells in rows:
        if len(cells) != len(header):
            raise ConfigError(f"{path}: line {lineno} has {len(cells)} fields, expected {len(header)}")
        try:
            values = {name: float(cells[i]) for name, i in cols.items()}
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
        if not values["t_us"] > prev_t:
            raise ConfigError(f"{path}: line {lineno}: timestamps not strictly increasing")
        prev_t = values["t_us"]
        for name, v in values.items():
            data[name].append(v)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    try:
        f = FieldConfig(meta["b_gauss"], meta["theta_deg"])
        return ExperimentTrace(f, np.array(data["t_us"]), np.array(data["p_plus1"]),
                               np.array(data["p_zero"]),
                               np.array(data["sigma"]) if "sigma" in data else None,
                               name=Path(path).stem)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_trace_csv(path: str | Path, trace: ExperimentTrace) -> None:
    header = list(TRACE_COLUMNS)
    cols = [trace.times, trace.p_plus1, trace.p_zero]
    if trace.sigma is not None:
        header.append("sigma")
        cols.append(trace.sigma)
    write_csv(path, header, zip(*cols),
              comments={"b_gauss": trace.field.b, "theta_deg": trace.field.theta})


def read_steady_csv(path: str | Path) -> list[tuple[float, float, float]]:
    """Rows of ``b_gauss, p_plus1_inf, p_zero_inf`` for angle refinement."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(lines)
    need = ("b_gauss", "p_plus1_inf", "p_zero_inf")
    if reader.fieldnames is None or any(n not in reader.fieldnames for n in need):
        raise ConfigError(f"{path}: need columns {need}")
    out = []
    for k, row in enumerate(reader, start=2):
        try:
            out.append(tuple(float(row[n]) for n in need))
        except ValueError as exc:
            raise ConfigError(f"{path}: row {k}: {exc}") from exc
    if not out:
        raise ConfigError(f"{path}: no data rows")
    return out


# result records ----------------------------------------------------------------

@dataclass
class ResultRecord:
    command: str
    config: dict
    outputs: dict = field(default_factory=dict)
    version: str = __version__
    wall_clock_s: float = 0.0
    _start: float = field(default_factory=time.perf_counter, repr=False)

    def finish(self) -> "ResultRecord":
        self.wall_clock_s = time.perf_counter() - self._start
        return self

    def write(self, path: str | Path) -> None:
        payload = {"command": self.command, "config": self.config, "outputs": self.outputs,
                   "version": self.version, "wall_clock_s": self.wall_clock_s}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def sidecar_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_suffix(".json")
