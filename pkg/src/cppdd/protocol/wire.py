# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Binary wire format for setup records and protocol messages.

Setup records start with the magic ``CPDD`` and a version byte, followed by
the fields in declaration order, each prefixed with its 4-byte little-endian
length. Vectors and elements use the canonical encodings of
:mod:`cppdd.protocol.field`; digests are raw 32 bytes and operation codes one
byte.
"""

import enum
import struct
from dataclasses import dataclass
from uuid import UUID

from .client import AbortNotice, AbortReason
from .core import (
    DIGEST_BYTES,
    KEY_BYTES,
    SALT_BYTES,
    TAG_BYTES,
    BroadcastPacket,
    ClientEnvelope,
    ConsensusKey,
    ObfuscationKey,
    PriorityMap,
    ProtocolParams,
    StepChecksum,
)
from .field import (
    ELEMENT_BYTES,
    FieldVector,
    OpCode,
    decode_vector,
    element,
    encode_element,
    encode_vector,
)

MAGIC = b"CPDD"
VERSION = 1

_HEADER = struct.Struct("<BIIQI")
FRAME_HEADER_BYTES = _HEADER.size
"""Kind, sender, receiver, sequence number and round of a message frame."""


class WireFormatError(ValueError):
    """Bytes do not form a valid record or frame."""


class _Writer:
    def __init__(self) -> None:
        self._parts = [MAGIC, bytes([VERSION])]

    def field(self, data: bytes) -> "_Writer":
        self._parts.append(struct.pack("<I", len(data)))
        self._parts.append(data)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        if data[:4] != MAGIC:
            raise WireFormatError("Missing CPDD magic")
        if len(data) < 5 or data[4] != VERSION:
            raise WireFormatError(f"Unsupported wire version, expected {VERSION}")
        self._data = data
        self._offset = 5

    def field(self) -> bytes:
        if self._offset + 4 > len(self._data):
            raise WireFormatError("Truncated record")
        (n,) = struct.unpack_from("<I", self._data, self._offset)
        start = self._offset + 4
        self._offset = start + n
        if self._offset > len(self._data):
            raise WireFormatError("Truncated record")
        return self._data[start : self._offset]

    def done(self) -> None:
        if self._offset != len(self._data):
            raise WireFormatError("Trailing bytes after record")


def _prefix(data: bytes, offset: int = 0) -> int:
    if len(data) < offset + 4:
        raise WireFormatError("Field too short for its 4-byte prefix")
    return struct.unpack_from("<I", data, offset)[0]


def _word(data: bytes) -> int:
    if len(data) != 4:
        raise WireFormatError("Expected a 4-byte little-endian integer")
    return struct.unpack("<I", data)[0]


def _vector(data: bytes, modulus: int) -> FieldVector:
    try:
        v, end = decode_vector(data, 0, modulus)
    except ValueError as err:
        raise WireFormatError(str(err)) from None
    if end != len(data):
        raise WireFormatError("Trailing bytes after vector")
    return v


def _chunks(data: bytes, size: int) -> list[bytes]:
    n = _prefix(data)
    body = data[4:]
    if len(body) != n * size:
        raise WireFormatError("Length prefix does not match the sequence size")
    return [body[i * size : (i + 1) * size] for i in range(n)]


def _sequence(items: list[bytes]) -> bytes:
    return struct.pack("<I", len(items)) + b"".join(items)


_PARAMS = struct.Struct("<IIQBBB")


def encode_packet(packet: BroadcastPacket) -> bytes:
    """Fields follow :class:`BroadcastPacket`, the obfuscated vectors last."""
    p = packet.params
    flags = int(p.broadcast_lo) | int(p.hash_full_vector) << 1
    w = _Writer()
    w.field(encode_vector(packet.l_c))
    w.field(
        _sequence([struct.pack("<I", s.index) + s.digest for s in packet.sigma_s])
    )
    w.field(_sequence([u.bytes for u in packet.priority_map.order]))
    w.field(_sequence(list(packet.commitments)))
    w.field(_PARAMS.pack(p.n_clients, p.dim, p.modulus, p.scale_bits, p.tau, flags))
    w.field(_sequence([encode_vector(o) for o in packet.obfuscated or ()]))
    return w.getvalue()


def decode_packet(data: bytes) -> BroadcastPacket:
    r = _Reader(data)
    raw_l_c = r.field()
    sigma_chunks = _chunks(r.field(), 4 + DIGEST_BYTES)
    order = tuple(UUID(bytes=c) for c in _chunks(r.field(), 16))
    commitments = tuple(_chunks(r.field(), DIGEST_BYTES))
    raw_params = r.field()
    if len(raw_params) != _PARAMS.size:
        raise WireFormatError("Protocol parameters have the wrong length")
    n, dim, modulus, scale_bits, tau, flags = _PARAMS.unpack(raw_params)
    params = ProtocolParams(
        n_clients=n,
        dim=dim,
        modulus=modulus,
        scale_bits=scale_bits,
        tau=tau,
        broadcast_lo=bool(flags & 1),
        hash_full_vector=bool(flags & 2),
    )
    obfuscated = tuple(
        _vector(c, modulus) for c in _chunks(r.field(), 4 + ELEMENT_BYTES * dim)
    )
    r.done()
    return BroadcastPacket(
        l_c=_vector(raw_l_c, modulus),
        sigma_s=tuple(
            StepChecksum(index=_prefix(c), digest=c[4:]) for c in sigma_chunks
        ),
        priority_map=PriorityMap(order),
        commitments=commitments,
        params=params,
        obfuscated=obfuscated or None,
    )


def encode_envelope(envelope: ClientEnvelope) -> bytes:
    w = _Writer()
    w.field(struct.pack("<I", envelope.priority))
    w.field(bytes([envelope.theta.code]))
    w.field(encode_vector(envelope.consensus_key.k))
    w.field(encode_element(envelope.obfuscation_key.lam))
    w.field(encode_vector(envelope.obfuscation_key.r))
    w.field(encode_vector(envelope.obfuscated))
    w.field(envelope.salt)
    w.field(
        _sequence(
            [
                struct.pack("<I", peer) + key
                for peer, key in sorted(envelope.channel_keys.items())
            ]
        )
    )
    return w.getvalue()


def decode_envelope(data: bytes, modulus: int) -> ClientEnvelope:
    r = _Reader(data)
    priority = _word(r.field())
    code = r.field()
    if len(code) != 1:
        raise WireFormatError("Operation code must be a single byte")
    theta = OpCode.from_code(code[0])
    k = _vector(r.field(), modulus)
    lam = element(int.from_bytes(r.field(), "little"), modulus)
    rvec = _vector(r.field(), modulus)
    obfuscated = _vector(r.field(), modulus)
    salt = r.field()
    keys = {_prefix(c): c[4:] for c in _chunks(r.field(), 4 + KEY_BYTES)}
    r.done()
    if len(salt) != SALT_BYTES:
        raise WireFormatError("Salt has the wrong length")
    return ClientEnvelope(
        priority=priority,
        theta=theta,
        consensus_key=ConsensusKey(k=k, bound_op=theta),
        obfuscation_key=ObfuscationKey(lam=lam, r=rvec),
        obfuscated=obfuscated,
        salt=salt,
        channel_keys=keys,
    )


class MessageKind(enum.IntEnum):
    SETUP_ENVELOPE = 0
    PACKET = 1
    RELAY_STATE = 2
    RETRY_REQUEST = 3
    ABORT = 4
    RELEASE = 5
    OPENING = 6


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    receiver: int
    seq: int
    round: int
    body: bytes

    def canonical(self) -> bytes:
        """Header and body, the bytes covered by the message tag."""
        return (
            _HEADER.pack(self.kind, self.sender, self.receiver, self.seq, self.round)
            + self.body
        )


def frame(message: Message, tag: bytes) -> bytes:
    return message.canonical() + tag


def parse_frame(data: bytes) -> tuple[Message, bytes]:
    if len(data) < FRAME_HEADER_BYTES + TAG_BYTES:
        raise WireFormatError("Frame shorter than header and tag")
    kind, sender, receiver, seq, rnd = _HEADER.unpack_from(data)
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise WireFormatError(f"Unknown message kind {kind}") from None
    body = data[FRAME_HEADER_BYTES:-TAG_BYTES]
    return Message(kind, sender, receiver, seq, rnd, body), data[-TAG_BYTES:]


def relay_body(position: int, values: FieldVector) -> bytes:
    return struct.pack("<I", position) + encode_vector(values)


def parse_relay_body(body: bytes, modulus: int) -> tuple[int, FieldVector]:
    return _prefix(body), _vector(body[4:], modulus)


def release_body(values: FieldVector) -> bytes:
    return encode_vector(values)


def parse_release_body(body: bytes, modulus: int) -> FieldVector:
    return _vector(body, modulus)


def retry_body(position: int) -> bytes:
    return struct.pack("<I", position)


def parse_retry_body(body: bytes) -> int:
    return _word(body)


def opening_body(priority: int, obfuscated: FieldVector, salt: bytes) -> bytes:
    return struct.pack("<I", priority) + salt + encode_vector(obfuscated)


def parse_opening_body(body: bytes, modulus: int) -> tuple[int, FieldVector, bytes]:
    priority = _prefix(body)
    salt = body[4 : 4 + SALT_BYTES]
    if len(salt) != SALT_BYTES:
        raise WireFormatError("Opening body too short for its salt")
    return priority, _vector(body[4 + SALT_BYTES :], modulus), salt


_ABORT = struct.Struct("<IIBI")
_NO_DIGEST = bytes(DIGEST_BYTES)


def abort_body(notice: AbortNotice) -> bytes:
    return (
        _ABORT.pack(
            notice.issuer,
            notice.step,
            list(AbortReason).index(notice.reason),
            notice.suspect or 0,
        )
        + (notice.expected or _NO_DIGEST)
        + (notice.recomputed or _NO_DIGEST)
    )


def parse_abort_body(body: bytes) -> AbortNotice:
    if len(body) != _ABORT.size + 2 * DIGEST_BYTES:
        raise WireFormatError("Abort body has the wrong length")
    issuer, step, reason, suspect = _ABORT.unpack_from(body)
    expected = body[_ABORT.size : _ABORT.size + DIGEST_BYTES]
    recomputed = body[_ABORT.size + DIGEST_BYTES :]
    return AbortNotice(
        issuer=issuer,
        step=step,
        reason=list(AbortReason)[reason],
        suspect=suspect or None,
        expected=None if expected == _NO_DIGEST else expected,
        recomputed=None if recomputed == _NO_DIGEST else recomputed,
    )


def relay_frame_size(dim: int) -> int:
    """Bytes of one RELAY_STATE frame, independent of the number of clients."""
    return FRAME_HEADER_BYTES + 4 + 4 + ELEMENT_BYTES * dim + TAG_BYTES
