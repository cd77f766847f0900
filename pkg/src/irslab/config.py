"""Experiment configuration: JSON schema, dB conversion and grid expansion.

Config layout (every grid entry is a list; scalars are accepted and
wrapped)::

    {
      "mode": "validate",
      "schemes": ["Random", "TD"],
      "metrics": ["outage", "rate"],
      "grid": {"P_dB": [-10, 0, 10], "M": [10], "rho": [1.0], "N": [2]},
      "power": {"xi": 1.2, "P_S_dBW": 9, "P_D_dBm": 10, "P_E_dBm": 10},
      "trials": 1000000,
      "seed": 1
    }

Grid keys: ``P_dB M m T tau Delta N psi kappa rho sigma_sq_dB noise_dB
P_o_dB sigma_e_sq``. For the selection schemes the pair (N, m) fixes
``M = m N`` when ``m`` is given; otherwise ``m = M / N`` must be an integer.
All dB fields are converted to linear exactly once, here.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .analytic import CodingConfig, SelectionConfig
from .channel import SystemParams
from .energy import PowerModel
from .simulate import MetricKind, Scheme

MODES = ("analytic", "simulate", "validate", "sweep")
GRID_DEFAULTS: dict[str, list] = {
    "P_dB": [0.0], "M": [10], "T": [1], "tau": [0], "Delta": [math.pi], "N": [1],
    "psi": [1.0], "kappa": [1.0], "rho": [1.0], "sigma_sq_dB": [0.0], "noise_dB": [0.0],
    "P_o_dB": [0.0],
}
OPTIONAL_GRID = ("m", "sigma_e_sq")
POWER_DEFAULTS = {"xi": 1.2, "P_S_dBW": 9.0, "P_D_dBm": 10.0, "P_E_dBm": 10.0}
TOP_KEYS = {"mode", "schemes", "metrics", "grid", "power", "trials", "seed", "output", "name",
            "description"}
SELECTION = (Scheme.TD, Scheme.ATD)
POINT_KEYS = ("M", "P_dB", "rho", "N", "m", "T", "tau", "Delta", "psi", "kappa", "sigma_sq_dB",
              "noise_dB", "P_o_dB", "sigma_e_sq")


class ConfigError(ValueError):
    """Schema violation; the message names the offending field."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return db_to_linear(dbm) / 1000.0


@dataclass(frozen=True)
class GridPoint:
    """One fully resolved parameter point (linear units plus the dB echo)."""

    scheme: Scheme
    sp: SystemParams
    P_dB: float
    rho: float
    coding: CodingConfig
    selection: Optional[SelectionConfig]
    training_power: float
    sigma_e_sq: Optional[float]
    raw: dict

    def sort_key(self) -> tuple:
        # unused axes are None and sort first
        return (self.scheme.value,) + tuple(
            -math.inf if self.raw[k] is None else float(self.raw[k]) for k in POINT_KEYS)


@dataclass
class ExperimentConfig:
    mode: str
    schemes: list[Scheme]
    metrics: list[MetricKind]
    grid: dict[str, list]
    power: PowerModel
    trials: int
    seed: int
    source: dict = field(default_factory=dict)

    def points(self) -> list[GridPoint]:
        """Cartesian expansion of the grid, per scheme, sorted deterministically."""
        keys = list(GRID_DEFAULTS) + [k for k in OPTIONAL_GRID if k in self.grid]
        values = [self.grid.get(k, GRID_DEFAULTS.get(k)) for k in keys]
        out = {}
        for scheme in self.schemes:
            for combo in itertools.product(*values):
                raw = dict(zip(keys, combo))
                raw.setdefault("m", None)
                raw.setdefault("sigma_e_sq", None)
                point = _resolve(scheme, raw)
                if point is not None:
                    out.setdefault(point.sort_key(), point)
        return [out[k] for k in sorted(out)]

    def with_overrides(self, trials: Optional[int] = None, seed: Optional[int] = None,
                       mode: Optional[str] = None) -> "ExperimentConfig":
        src = json.loads(json.dumps(self.source))
        if trials is not None:
            src["trials"] = trials
        if seed is not None:
            src["seed"] = seed
        if mode is not None:
            src["mode"] = mode
        return parse_config(src)


def _resolve(scheme: Scheme, raw: dict) -> Optional[GridPoint]:
    """Scheme-relevant projection of a grid combination; irrelevant axes are collapsed."""
    raw = dict(raw)
    if scheme in SELECTION:
        n = int(raw["N"])
        if raw["m"] is not None:
            raw["M"] = int(raw["m"]) * n
        elif raw["M"] % n:
            raise ConfigError(f"grid: M={raw['M']} is not divisible by N={n} for {scheme.value}")
        raw["m"] = raw["M"] // n
        if scheme is Scheme.TD:
            raw["psi"] = None
    else:
        raw["N"], raw["m"], raw["psi"] = None, None, None
    if scheme not in (Scheme.RRC, Scheme.OBF, Scheme.CT):
        raw["T"] = 1
    if scheme not in (Scheme.OBF, Scheme.CT):
        raw["tau"] = 0
    if scheme is not Scheme.OBF:
        raw["Delta"], raw["kappa"] = None, None
    if scheme is not Scheme.CT:
        raw["P_o_dB"], raw["sigma_e_sq"] = None, None
    elif raw["sigma_e_sq"] is not None:
        raw["P_o_dB"] = None
    try:
        sigma_sq = db_to_linear(raw["sigma_sq_dB"])
        sp = SystemParams(int(raw["M"]), db_to_linear(raw["P_dB"]), db_to_linear(raw["noise_dB"]),
                          sigma_sq, 1.0)
        coding = CodingConfig(int(raw["T"]), int(raw["tau"]),
                              math.pi if raw["Delta"] is None else float(raw["Delta"]),
                              1.0 if raw["kappa"] is None else float(raw["kappa"]))
        selection = None
        if scheme in SELECTION:
            selection = SelectionConfig(int(raw["N"]), int(raw["m"]),
                                        float(raw["rho"] if raw["psi"] is None else raw["psi"]))
    except ValueError as exc:
        raise ConfigError(f"grid point {_describe(raw)} for {scheme.value}: {exc}") from None
    p_o = 0.0 if raw["P_o_dB"] is None else db_to_linear(raw["P_o_dB"])
    return GridPoint(scheme, sp, float(raw["P_dB"]), float(raw["rho"]), coding, selection,
                     p_o, raw["sigma_e_sq"], raw)


def _describe(raw: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in raw.items() if v is not None)


def _as_list(name: str, value: Any) -> list:
    vals = value if isinstance(value, list) else [value]
    if not vals:
        raise ConfigError(f"grid.{name}: must be non-empty")
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"grid.{name}: expected numbers, got {v!r}")
    return vals


def _int_list(name: str, vals: list) -> list:
    for v in vals:
        if int(v) != v:
            raise ConfigError(f"grid.{name}: expected integers, got {v!r}")
    return [int(v) for v in vals]


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a decoded JSON document."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"top level: unknown field(s) {sorted(unknown)}")
    mode = data.get("mode", "validate")
    if mode not in MODES:
        raise ConfigError(f"mode: {mode!r} is not one of {list(MODES)}")
    schemes_raw = data.get("schemes")
    if not isinstance(schemes_raw, list) or not schemes_raw:
        raise ConfigError("schemes: expected a non-empty list")
    schemes = []
    for i, name in enumerate(schemes_raw):
        try:
            schemes.append(Scheme(name))
        except ValueError:
            raise ConfigError(f"schemes[{i}]: unknown scheme {name!r}; "
                              f"expected one of {[s.value for s in Scheme]}") from None
    metrics_raw = data.get("metrics", ["outage", "rate"])
    metrics = []
    for i, name in enumerate(metrics_raw if isinstance(metrics_raw, list) else [None]):
        try:
            metrics.append(MetricKind(name))
        except ValueError:
            raise ConfigError(f"metrics[{i}]: unknown metric {name!r}") from None
    grid_raw = data.get("grid", {})
    if not isinstance(grid_raw, dict):
        raise ConfigError("grid: expected an object")
    grid = {}
    for key, value in grid_raw.items():
        if key not in GRID_DEFAULTS and key not in OPTIONAL_GRID:
            raise ConfigError(f"grid.{key}: unknown parameter")
        vals = _as_list(key, value)
        if key in ("M", "m", "T", "tau", "N"):
            vals = _int_list(key, vals)
        grid[key] = vals
    power_raw = data.get("power", {})
    if not isinstance(power_raw, dict):
        raise ConfigError("power: expected an object")
    unknown = set(power_raw) - set(POWER_DEFAULTS)
    if unknown:
        raise ConfigError(f"power: unknown field(s) {sorted(unknown)}")
    pw = POWER_DEFAULTS | power_raw
    try:
        power = PowerModel(float(pw["xi"]), db_to_linear(pw["P_S_dBW"]),
                           dbm_to_watts(pw["P_D_dBm"]), dbm_to_watts(pw["P_E_dBm"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"power: {exc}") from None
    trials = data.get("trials", 100_000)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError(f"trials: expected a positive integer, got {trials!r}")
    seed = data.get("seed", 1)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
    cfg = ExperimentConfig(mode, schemes, metrics, grid, power, trials, seed,
                           json.loads(json.dumps(data)))
    cfg.points()  # surfaces per-point violations (m*N = M, tau <= T, ...)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data)
