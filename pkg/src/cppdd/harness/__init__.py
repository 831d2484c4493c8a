# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
# ruff: noqa: E402, F401
"""Payload ingest, experiment drivers and the command line."""

from . import config, data, experiments, load, tools, workflow
from .config import ConfigError, ExperimentConfig
from .experiments import run_experiment, run_with_restart
from .load import IngestError, cci_from_arrays, load_payloads
from .types import Dimension, NClients, PayloadSource, TrialTranscripts
from .workflow import HarnessWorkflow, default_parameters, providers, with_seeds

__all__ = [
    "ConfigError",
    "Dimension",
    "ExperimentConfig",
    "HarnessWorkflow",
    "IngestError",
    "NClients",
    "PayloadSource",
    "TrialTranscripts",
    "cci_from_arrays",
    "config",
    "data",
    "default_parameters",
    "experiments",
    "load",
    "load_payloads",
    "providers",
    "run_experiment",
    "run_with_restart",
    "tools",
    "with_seeds",
]
