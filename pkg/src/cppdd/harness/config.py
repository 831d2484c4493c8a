# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Experiment configuration read from JSON documents."""

import json
import os
from collections.abc import Mapping
from dataclasses import dataclass, fields
from pathlib import Path

from ..protocol.field import MERSENNE_61
from .types import SYNTHETIC

EXPERIMENTS = ("correctness", "detection", "scalability", "recovery", "accounting")

SEED_VARIABLE = "CPPDD_SEED"

_DEFAULT_N = {
    "correctness": (1, 2, 10, 100),
    "detection": (20,),
    "scalability": (10, 50, 100, 200, 500),
    "recovery": (10,),
    "accounting": (10,),
}
_DEFAULT_DIM = {"detection": 64}


class ConfigError(ValueError):
    """The configuration document is invalid."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "correctness"
    n_values: tuple[int, ...] = (10,)
    dim: int = 784
    trials: int = 5
    seed: int = 0
    payloads: str = SYNTHETIC
    scale_bits: int = 20
    tau: int = 3
    broadcast_lo: bool = False
    hash_full_vector: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"Unknown experiment {self.experiment!r}, "
                f"choose from {', '.join(EXPERIMENTS)}"
            )
        if not self.n_values or min(self.n_values) < 1:
            raise ConfigError(f"Client counts must be >= 1, got {self.n_values}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.scale_bits < MERSENNE_61.bit_length() - 1:
            raise ConfigError(f"scale_bits out of range: {self.scale_bits}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def n_clients(self) -> int:
        return self.n_values[0]

    @classmethod
    def from_mapping(
        cls,
        data: Mapping,
        experiment: str | None = None,
        env: Mapping[str, str] | None = None,
    ) -> "ExperimentConfig":
        """Build a config from a parsed JSON document.

        ``n_clients`` is accepted as a single-valued ``n_values``. The
        :data:`SEED_VARIABLE` environment variable overrides ``seed``.
        Defaults for ``n_values`` and ``dim`` depend on the experiment.
        """
        data = dict(data)
        known = {f.name for f in fields(cls)} | {"n_clients"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        if experiment is not None:
            data["experiment"] = experiment
        name = data.get("experiment", cls.experiment)
        if "n_clients" in data:
            if "n_values" in data:
                raise ConfigError("Give either n_clients or n_values, not both")
            data["n_values"] = [data.pop("n_clients")]
        data.setdefault("n_values", _DEFAULT_N.get(name, cls.n_values))
        data.setdefault("dim", _DEFAULT_DIM.get(name, cls.dim))
        env = os.environ if env is None else env
        if SEED_VARIABLE in env:
            try:
                data["seed"] = int(env[SEED_VARIABLE])
            except ValueError:
                raise ConfigError(
                    f"{SEED_VARIABLE} must be an integer, got {env[SEED_VARIABLE]!r}"
                ) from None
        values = data["n_values"]
        if isinstance(values, str) or not hasattr(values, "__iter__"):
            raise ConfigError(f"n_values must be a list of integers, got {values!r}")
        data["n_values"] = tuple(_integer("n_values", n) for n in values)
        for key in ("dim", "trials", "seed", "scale_bits", "tau", "workers"):
            if key in data:
                data[key] = _integer(key, data[key])
        for key in ("broadcast_lo", "hash_full_vector"):
            if key in data and not isinstance(data[key], bool):
                raise ConfigError(f"{key} must be true or false")
        data["payloads"] = str(data.get("payloads", SYNTHETIC))
        return cls(**data)

    @classmethod
    def from_file(
        cls, path: str | Path, experiment: str | None = None
    ) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"Cannot read configuration {path}: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError(f"Configuration {path} must be a JSON object")
        return cls.from_mapping(data, experiment=experiment)


def _integer(key: str, value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value
