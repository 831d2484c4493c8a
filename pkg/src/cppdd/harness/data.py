# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
import importlib.resources
from pathlib import Path

from ..protocol import wire
from ..protocol.coordinator import SetupOutput
from ..protocol.core import BroadcastPacket, ClientEnvelope


def sample_payloads() -> Path:
    """Ten 28x28 grey-scale glyphs, one flattened image per row, values in [0, 1]."""
    return Path(
        str(importlib.resources.files("cppdd.harness") / "sample_payloads.csv")
    )


def save_setup(setup: SetupOutput, out: str | Path) -> list[Path]:
    """Write ``packet.bin`` and one ``envelope_<i>.bin`` per client."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "packet.bin"]
    written[0].write_bytes(wire.encode_packet(setup.packet))
    for envelope in setup.envelopes:
        path = out / f"envelope_{envelope.priority}.bin"
        path.write_bytes(wire.encode_envelope(envelope))
        written.append(path)
    return written


def load_packet(path: str | Path) -> BroadcastPacket:
    return wire.decode_packet(Path(path).read_bytes())


def load_envelope(path: str | Path, modulus: int) -> ClientEnvelope:
    return wire.decode_envelope(Path(path).read_bytes(), modulus)
