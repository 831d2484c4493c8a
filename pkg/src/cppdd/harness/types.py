# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
from pathlib import Path
from typing import NewType

from ..simnet import RunTranscript

NClients = NewType("NClients", int)
"""Number of clients taking part in one protocol instance"""
Dimension = NewType("Dimension", int)
"""Length ``D`` of every payload vector"""
PayloadSource = NewType("PayloadSource", str | Path)
"""Path of a payload CSV file, or ``"synthetic"``"""

SYNTHETIC = "synthetic"

TrialTranscripts = NewType("TrialTranscripts", tuple[RunTranscript, ...])
"""Run transcripts of repeated trials, in trial order"""
