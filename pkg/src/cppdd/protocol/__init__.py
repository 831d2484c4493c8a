# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
# ruff: noqa: E402, F401
"""Field arithmetic, setup and client logic of the unanimous-release protocol."""

import sciline

from . import client, coordinator, core, field, wire
from .client import AbortNotice, AbortReason, ClientNode, Phase
from .coordinator import SetupError, SetupOutput
from .core import BroadcastPacket, CciMatrix, CciRecord, ClientEnvelope, PriorityMap
from .field import MERSENNE_61, FixedPointCodec, OpCode
from .types import (
    AuditMode,
    BroadcastLO,
    FixedOpCodes,
    HashFullVector,
    Modulus,
    RequestedPriorities,
    RetryBound,
    ScaleBits,
    SetupSeed,
)

providers = (*coordinator.providers,)
"""
List of providers for setting up a Sciline pipeline.

The pipeline turns a :class:`CciMatrix` into a :class:`SetupOutput`. It does
not load payloads, see :py:data:`cppdd.harness.providers` for a complete
workflow.
"""


def default_parameters() -> dict:
    return {
        Modulus: MERSENNE_61,
        ScaleBits: 20,
        RetryBound: 3,
        BroadcastLO: False,
        HashFullVector: False,
        AuditMode: False,
        SetupSeed: 0,
        FixedOpCodes: (),
        RequestedPriorities: (),
    }


def SetupWorkflow() -> sciline.Pipeline:
    """
    Coordinator workflow with default parameters. Set :class:`CciMatrix` to run.
    """
    return sciline.Pipeline(providers=providers, params=default_parameters())


__all__ = [
    "AbortNotice",
    "AbortReason",
    "AuditMode",
    "BroadcastLO",
    "BroadcastPacket",
    "CciMatrix",
    "CciRecord",
    "ClientEnvelope",
    "ClientNode",
    "FixedOpCodes",
    "FixedPointCodec",
    "HashFullVector",
    "Modulus",
    "OpCode",
    "Phase",
    "PriorityMap",
    "RequestedPriorities",
    "RetryBound",
    "ScaleBits",
    "SetupError",
    "SetupOutput",
    "SetupSeed",
    "SetupWorkflow",
    "client",
    "coordinator",
    "core",
    "default_parameters",
    "field",
    "providers",
    "wire",
]
