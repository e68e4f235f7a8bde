"""Experiment configuration: YAML defaults, user overrides, validation, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .constants import G, TWO_PI
from .dynamics import BeamParams, MassParams, Physics, SweepSettings
from .errors import ConfigError
from .reservoir import RunSettings
from .signal_chain import AcquisitionConfig, DriveConfig, ShakerModel
from .tasks import NarmaSpec, ParitySpec

# Reduced profile for smoke tests and CI; results are not comparable to full runs.
FAST_OVERRIDES = {
    "run": {"washout": 50, "steps_per_period": 24, "ramp_periods": 4, "calibration_periods": 10},
    "narma": {"train_len": 1000, "test_len": 250},
    "parity": {"train_len": 1000, "test_len": 500},
    "characterize": {
        "fd_points": 36,
        "v0_points": 27,
        "sensor_points": 20,
        "settle_cycles": 300,
        "measure_cycles": 60,
    },
}

SWEEPABLE = ("v0", "fd", "alpha", "theta", "gamma")


def load_defaults() -> dict:
    text = resources.files("neuroaccel").joinpath("default_config.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(user: dict | None = None, fast: bool = False) -> dict:
    """Defaults, then the fast profile (if requested), then user values."""
    cfg = load_defaults()
    if fast:
        cfg = _merge(cfg, FAST_OVERRIDES)
    if user:
        if not isinstance(user, dict):
            raise ConfigError("config file must contain a mapping")
        cfg = _merge(cfg, user)
    cfg["profile"] = "fast" if fast else "full"
    Experiment(cfg)  # validate
    return cfg


def load(path: str | Path | None = None, fast: bool = False) -> dict:
    user = None
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return resolve(user, fast)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _inclusive(r) -> list[int]:
    if isinstance(r, (list, tuple)) and len(r) == 2:
        lo, hi = int(r[0]), int(r[1])
        if hi < lo:
            raise ConfigError(f"empty range {r}")
        return list(range(lo, hi + 1))
    raise ConfigError(f"range must be [low, high], got {r!r}")


def _numbers(section: dict, ints=()) -> dict:
    """Coerce a flat section to numbers; YAML reads ``1e3`` (no exponent sign) as text."""
    out = {}
    for k, v in section.items():
        if v is None:
            out[k] = None
        elif k in ints:
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


@dataclass
class Experiment:
    """Typed views of a resolved config mapping; construction validates it."""

    cfg: dict

    def __post_init__(self) -> None:
        try:
            self.physics
            self.shaker_for(self.drive("narma"))
            self.acquisition
            self.run_settings
            self.narma_spec
            self.parity_spec
            self.sweep_settings
            self.gamma_grid
            for task in ("narma", "parity"):
                self.drive(task)
            if self.cfg["narma"]["target_source"] not in ("measured", "setpoint"):
                raise ConfigError("narma.target_source must be 'measured' or 'setpoint'")
            bad = set(self.cfg["sweep"]["grid"]) - set(SWEEPABLE)
            if bad:
                raise ConfigError(f"sweep grid keys must be among {SWEEPABLE}, got {sorted(bad)}")
            if self.cfg["sweep"]["task"] not in ("narma", "parity"):
                raise ConfigError("sweep.task must be 'narma' or 'parity'")
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @property
    def physics(self) -> Physics:
        b = dict(self.cfg["physics"]["beam"])
        m = dict(self.cfg["physics"]["mass"])
        omega0 = TWO_PI * float(b.pop("f0_hz"))
        if b.get("effective_mass") is None:
            b.pop("effective_mass", None)
        beam = BeamParams(omega0=omega0, **_numbers(b))
        k = float(m["stiffness"])
        mass = MassParams(
            mass=k / (TWO_PI * float(m["f0_hz"])) ** 2,
            stiffness=k,
            q_factor=float(m["q_factor"]),
            travel_limit=float(m["travel_limit"]),
        )
        return Physics(beam, mass)

    def drive(self, task: str) -> DriveConfig:
        d = _numbers(self.cfg["drive"], ints=("n_nodes", "mask_seed"))
        t = self.cfg[task]
        return DriveConfig(alpha=float(t["alpha"]), input_gain=float(t["input_gain_g"]) * G, **d)

    @property
    def acquisition(self) -> AcquisitionConfig:
        return AcquisitionConfig(**_numbers(self.cfg["acquisition"], ints=("bits", "filter_order", "noise_seed")))

    def shaker_for(self, drive: DriveConfig) -> ShakerModel:
        s = self.cfg["shaker"]
        return ShakerModel.default(
            sample_rate=1.0 / drive.theta,
            mode=s["mode"],
            sections=tuple((float(f), float(q)) for f, q in s["sections"]),
            dc_block_hz=float(s["dc_block_hz"]),
            drift=None if s["drift"] is None else tuple(float(v) for v in s["drift"]),
            travel_limit=float(s["travel_limit"]),
            centering_hz=float(s["centering_hz"]),
        )

    @property
    def run_settings(self) -> RunSettings:
        return RunSettings(**{k: int(v) for k, v in self.cfg["run"].items()})

    @property
    def narma_spec(self) -> NarmaSpec:
        c = self.cfg["narma"]
        return NarmaSpec(
            n_range=_inclusive(c["n_range"]),
            train_len=int(c["train_len"]),
            test_len=int(c["test_len"]),
            input_low=float(c["input_low"]),
            input_high=float(c["input_high"]),
            seed=int(c["seed"]),
        )

    @property
    def parity_spec(self) -> ParitySpec:
        c = self.cfg["parity"]
        return ParitySpec(
            n_range=_inclusive(c["n_range"]),
            train_len=int(c["train_len"]),
            test_len=int(c["test_len"]),
            max_run=None if c["max_run"] is None else int(c["max_run"]),
            seed=int(c["seed"]),
        )

    def task_spec(self, task: str):
        if task == "narma":
            return self.narma_spec
        if task == "parity":
            return self.parity_spec
        raise ConfigError(f"unknown task {task!r}")

    @property
    def sweep_settings(self) -> SweepSettings:
        c = self.cfg["characterize"]
        return SweepSettings(
            settle_cycles=c["settle_cycles"],
            measure_cycles=c["measure_cycles"],
            steps_per_period=int(self.cfg["run"]["steps_per_period"]),
        )

    @property
    def gamma_grid(self) -> tuple[float, ...]:
        grid = tuple(float(g) for g in self.cfg["learning"]["gamma_grid"])
        if not grid or any(g < 0 for g in grid):
            raise ConfigError("gamma_grid must be a non-empty list of non-negative values")
        return grid

    def with_overrides(self, task: str, point: dict[str, Any]) -> "Experiment":
        """Copy with sweep-grid values applied (gamma is handled by the caller)."""
        cfg = copy.deepcopy(self.cfg)
        for key, value in point.items():
            if key in ("v0", "fd", "theta"):
                cfg["drive"][key] = float(value)
            elif key == "alpha":
                cfg[task]["alpha"] = float(value)
            elif key != "gamma":
                raise ConfigError(f"cannot sweep {key!r}")
        return Experiment(cfg)
