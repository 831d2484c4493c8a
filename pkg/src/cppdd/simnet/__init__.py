# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
# ruff: noqa: E402, F401
"""Deterministic in-process network for running protocol instances."""

from .faults import (
    Behavior,
    FaultPlan,
    ForgeOpening,
    Honest,
    TamperState,
    TransientCorrupt,
    Withhold,
    WithholdOpening,
    WrongKey,
    WrongOp,
    inject,
)
from .network import BoardRecord, BulletinBoard, Endpoint
from .runner import (
    Accept,
    OpCounters,
    Outcome,
    RunTranscript,
    SimClock,
    board_verify,
    check_release,
    run,
)

__all__ = [
    "Accept",
    "Behavior",
    "BoardRecord",
    "BulletinBoard",
    "Endpoint",
    "FaultPlan",
    "ForgeOpening",
    "Honest",
    "OpCounters",
    "Outcome",
    "RunTranscript",
    "SimClock",
    "TamperState",
    "TransientCorrupt",
    "Withhold",
    "WithholdOpening",
    "WrongKey",
    "WrongOp",
    "board_verify",
    "check_release",
    "inject",
    "run",
]
