# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
from typing import NewType

from .field import FieldVector, OpCode

Modulus = NewType("Modulus", int)
"""Prime modulus of the field all protocol vectors live in"""
ScaleBits = NewType("ScaleBits", int)
"""Fixed-point precision ``s``, reals are scaled by ``2**s``"""
RetryBound = NewType("RetryBound", int)
"""Number of re-sends a client may request before aborting"""
BroadcastLO = NewType("BroadcastLO", bool)
"""Publish the obfuscated vectors in the packet instead of after release"""
HashFullVector = NewType("HashFullVector", bool)
"""Step checksums hash the whole state instead of its element sum"""
AuditMode = NewType("AuditMode", bool)
"""Keep the intermediate chain states in the setup output, tests only"""

SetupSeed = NewType("SetupSeed", int)
"""Seed of the key-material generator"""
FixedOpCodes = NewType("FixedOpCodes", tuple[OpCode, ...])
"""Operation per priority. Empty means drawn uniformly at random"""
RequestedPriorities = NewType("RequestedPriorities", tuple[int, ...])
"""Priority of each CCI record, in record order. Empty means record order"""

OrderedPayloads = NewType("OrderedPayloads", tuple[FieldVector, ...])
"""Payloads sorted so that index ``i - 1`` holds the payload of priority ``i``"""
ObfuscatedPayloads = NewType("ObfuscatedPayloads", tuple[FieldVector, ...])
"""Obfuscation-locked vectors ``O_i``, in priority order"""
