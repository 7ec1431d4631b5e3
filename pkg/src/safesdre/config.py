"""Scenario configuration: YAML schema, validation, and model assembly.

A scenario file fully determines an experiment: the plant, the obstacle
set, the barrier construction, cost weights, controller list, integrator
settings, and the initial-condition set (explicit states and/or a seeded
sampling box). All physical quantities are SI. Unknown keys are rejected so
typos fail loudly, and dotted-key overrides are type-checked against the
schema before they apply.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .barriers import (
    SafetySpec,
    augment,
    chord_is_safe,
    circle_obstacle,
    get_barrier,
)
from .exceptions import ConfigError, OriginUnsafe
from .systems import CostSpec, make_benchmark

__all__ = ["ScenarioConfig", "load_config", "parse_overrides", "builtin_scenario_path"]

# Template of every legal key with its default. ``None`` defaults mean
# "optional, no value"; nested dicts validate recursively; list defaults
# validate element types only.
_TEMPLATE = {
    "name": "scenario",
    "system": {"benchmark": "linear2d", "params": {}},
    "obstacles": [],  # entries: {center: [..], radius: float}
    "barrier": {"kind": "inverse", "gamma": 1.0, "mode": "per_constraint"},
    "cost": {"q_diag": [1.0], "q_z": 1.0, "r_diag": [1.0]},
    "controllers": [],
    "integrator": {
        "dt": 1e-3,
        "t_final": 10.0,
        "method": "rk4",
        "control_update": "zoh",
    },
    "initial_conditions": {
        "explicit": None,
        "sample": None,  # {box_low: [..], box_high: [..], count: int, seed: int}
    },
    "convergence_eps": 1e-2,
    "h_floor": 1e-9,
    "diverge_norm": 1e8,
    "log_every": 1,
    "certificate": False,
    "h_far": None,
    "gain_lipschitz_bound": None,
    "seed": 0,
    "outputs": "out",
    "roa": None,  # {box_low, box_high, c_grid: [..], samples: int, seed: int}
}

_SAMPLE_KEYS = {"box_low", "box_high", "count", "seed"}
_ROA_KEYS = {"box_low", "box_high", "c_grid", "samples", "seed"}


def _check_keys(raw: dict, template: dict, path: str = ""):
    for key, value in raw.items():
        here = f"{path}{key}"
        if key not in template:
            raise ConfigError(f"unknown config key {here!r}")
        tmpl = template[key]
        if isinstance(tmpl, dict) and key not in ("params",):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{here!r} must be a mapping")
            _check_keys(value, tmpl, here + ".")


def _merge(template: dict, raw: dict) -> dict:
    out = copy.deepcopy(template)
    for key, value in raw.items():
        if isinstance(template.get(key), dict) and isinstance(value, dict) \
                and key != "params":
            out[key] = _merge(template[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_overrides(pairs) -> dict:
    """Parse ``section.key=value`` strings into a nested dict.

    Values go through YAML scalar parsing, so ``1e-4``, ``true`` and
    ``[1, 2]`` all do what they look like.
    """
    nested: dict = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        dotted, _, text = pair.partition("=")
        keys = dotted.strip().split(".")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {text!r}: {exc}") from exc
        if isinstance(value, str):
            # YAML 1.1 keeps bare scientific notation like 1e-4 a string.
            try:
                value = float(value)
            except ValueError:
                pass
        node = nested
        for k in keys[:-1]:
            node = node.setdefault(k.strip(), {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} conflicts with another override")
        node[keys[-1].strip()] = value
    return nested


def _type_check_overrides(nested: dict, template: dict, path: str = ""):
    for key, value in nested.items():
        here = f"{path}{key}"
        if key not in template:
            raise ConfigError(f"override targets unknown key {here!r}")
        tmpl = template[key]
        if isinstance(tmpl, dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"override {here!r} must be a mapping")
            _type_check_overrides(value, tmpl, here + ".")
        elif tmpl is not None and value is not None:
            if isinstance(tmpl, bool) != isinstance(value, bool):
                raise ConfigError(f"override {here!r}: expected bool, got {value!r}")
            if isinstance(tmpl, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"override {here!r}: expected number, got {value!r}")
            if isinstance(tmpl, str) and not isinstance(value, str):
                raise ConfigError(f"override {here!r}: expected string, got {value!r}")
            if isinstance(tmpl, list) and not isinstance(value, list):
                raise ConfigError(f"override {here!r}: expected list, got {value!r}")


@dataclass
class ScenarioConfig:
    """Validated scenario; also the single source for model assembly."""

    raw: dict

    # -- plain accessors ----------------------------------------------------

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def dt(self) -> float:
        return float(self.raw["integrator"]["dt"])

    @property
    def t_final(self) -> float:
        return float(self.raw["integrator"]["t_final"])

    @property
    def control_update(self) -> str:
        return self.raw["integrator"]["control_update"]

    @property
    def controllers(self) -> list:
        return list(self.raw["controllers"])

    @property
    def convergence_eps(self) -> float:
        return float(self.raw["convergence_eps"])

    @property
    def h_floor(self) -> float:
        return float(self.raw["h_floor"])

    @property
    def diverge_norm(self) -> float:
        return float(self.raw["diverge_norm"])

    @property
    def log_every(self) -> int:
        return int(self.raw["log_every"])

    @property
    def certificate(self) -> bool:
        return bool(self.raw["certificate"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def outputs(self) -> str:
        return self.raw["outputs"]

    # -- model assembly -----------------------------------------------------

    def build_system(self):
        sysconf = self.raw["system"]
        return make_benchmark(sysconf["benchmark"], **(sysconf["params"] or {}))

    def build_safety(self) -> SafetySpec:
        constraints = [
            circle_obstacle(ob["center"], ob["radius"], name=f"obstacle{i}")
            for i, ob in enumerate(self.raw["obstacles"])
        ]
        return SafetySpec(constraints, mode=self.raw["barrier"]["mode"])

    def build_barrier(self):
        return get_barrier(self.raw["barrier"]["kind"])

    def build_augmented(self):
        return augment(
            self.build_system(),
            self.build_safety(),
            self.build_barrier(),
            gamma=float(self.raw["barrier"]["gamma"]),
        )

    def build_costs(self, aug):
        """(augmented-state cost, plant-only cost) as constant CostSpecs."""
        c = self.raw["cost"]
        q_diag = np.asarray(c["q_diag"], dtype=float)
        if q_diag.size != aug.n:
            raise ConfigError(
                f"cost.q_diag has {q_diag.size} entries, system has {aug.n} states"
            )
        r_diag = np.asarray(c["r_diag"], dtype=float)
        if r_diag.size != aug.m:
            raise ConfigError(
                f"cost.r_diag has {r_diag.size} entries, system has {aug.m} inputs"
            )
        q_z = float(c["q_z"])
        if np.any(q_diag < 0) or q_z < 0 or np.any(r_diag <= 0):
            raise ConfigError("cost weights must satisfy q >= 0, r > 0")
        Q_bar = np.diag(np.concatenate([q_diag, np.full(aug.q, q_z)]))
        R = np.diag(r_diag)
        return CostSpec.constant(Q_bar, R), CostSpec.constant(np.diag(q_diag), R)

    def initial_conditions(self, aug) -> list:
        """Explicit states plus seeded box samples, all safety-checked."""
        ic = self.raw["initial_conditions"]
        states = []
        for row in ic["explicit"] or []:
            x0 = np.asarray(row, dtype=float)
            if x0.size != aug.n:
                raise ConfigError(f"initial condition {row} has wrong dimension")
            states.append(x0)
        sample = ic["sample"]
        if sample:
            low = np.asarray(sample["box_low"], dtype=float)
            high = np.asarray(sample["box_high"], dtype=float)
            if low.size != aug.n or high.size != aug.n:
                raise ConfigError("sampling box dimension mismatch")
            count = int(sample["count"])
            rng = np.random.default_rng(int(sample.get("seed", self.seed)))
            found = 0
            for _ in range(1000 * max(count, 1)):
                if found == count:
                    break
                x0 = rng.uniform(low, high)
                if aug.safety.min_margin(x0) > 0 and chord_is_safe(aug.safety, x0):
                    states.append(x0)
                    found += 1
            if found < count:
                raise ConfigError(
                    f"could only sample {found}/{count} safe initial conditions"
                )
        for x0 in states:
            if aug.safety.min_margin(x0) <= 0:
                raise ConfigError(f"initial condition {x0.tolist()} is unsafe")
            if not chord_is_safe(aug.safety, x0):
                raise ConfigError(
                    f"initial condition {x0.tolist()} has no safe chord to the origin"
                )
        return states

    # -- validation ----------------------------------------------------------

    def validate(self):
        raw = self.raw
        integ = raw["integrator"]
        if integ["dt"] <= 0:
            raise ConfigError("integrator.dt must be positive")
        if integ["t_final"] <= integ["dt"]:
            raise ConfigError("integrator.t_final must exceed integrator.dt")
        if integ["method"] != "rk4":
            raise ConfigError(f"unknown integrator method {integ['method']!r}")
        if integ["control_update"] not in ("zoh", "continuous"):
            raise ConfigError("integrator.control_update must be zoh or continuous")
        if raw["log_every"] < 1:
            raise ConfigError("log_every must be >= 1")
        for kind in raw["controllers"]:
            if kind not in ("bas_sdre", "vanilla_sdre", "bas_lqr"):
                raise ConfigError(f"unknown controller kind {kind!r}")
        for ob in raw["obstacles"]:
            extra = set(ob) - {"center", "radius"}
            if extra:
                raise ConfigError(f"unknown obstacle keys {sorted(extra)}")
            if ob["radius"] <= 0:
                raise ConfigError("obstacle radius must be positive")
        sample = raw["initial_conditions"]["sample"]
        if sample is not None:
            extra = set(sample) - _SAMPLE_KEYS
            if extra:
                raise ConfigError(f"unknown sample keys {sorted(extra)}")
        if raw["roa"] is not None:
            extra = set(raw["roa"]) - _ROA_KEYS
            if extra:
                raise ConfigError(f"unknown roa keys {sorted(extra)}")

        # The origin must be strictly safe for barrier augmentation to exist.
        aug = None
        try:
            aug = self.build_augmented()
        except OriginUnsafe:
            raise
        self.build_costs(aug)
        self.initial_conditions(aug)
        return self


def load_config(source, overrides=None, seed=None) -> ScenarioConfig:
    """Load, override, and validate a scenario.

    ``source`` is a path to a YAML file or an already-parsed mapping.

    Raises
    ------
    ConfigError
        Unknown keys, malformed overrides, or semantic violations.
    OriginUnsafe
        Some obstacle contains the origin.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if raw is None:
            raw = {}
    elif isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        raise ConfigError(f"unsupported config source {type(source).__name__}")
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must contain a mapping at top level")

    _check_keys(raw, _TEMPLATE)
    merged = _merge(_TEMPLATE, raw)
    if overrides:
        if not isinstance(overrides, dict):
            overrides = parse_overrides(overrides)
        _check_keys(overrides, _TEMPLATE)
        _type_check_overrides(overrides, _TEMPLATE)
        merged = _merge(merged, overrides)
    if seed is not None:
        merged["seed"] = int(seed)
    return ScenarioConfig(raw=merged).validate()


def builtin_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (bare name, no extension)."""
    here = Path(__file__).parent / "scenarios"
    candidate = here / f"{name}.yaml"
    if not candidate.exists():
        available = sorted(p.stem for p in here.glob("*.yaml"))
        raise ConfigError(f"no builtin scenario {name!r}; available: {available}")
    return candidate
