# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Types shared by the coordinator and the clients, plus hashing and MACs."""

import hashlib
import hmac
import struct
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from uuid import UUID

import numpy as np

from .field import (
    MERSENNE_61,
    FieldElement,
    FieldVector,
    OpCode,
    encode_element,
    encode_vector,
    modulus_of,
    phase,
    uncounted,
    vec_apply,
    vec_scale,
    vec_sum,
    vec_total,
)

DIGEST_BYTES = 32
TAG_BYTES = 16
SALT_BYTES = 16
KEY_BYTES = 32

BOARD = 0
"""Node id of the bulletin board. Clients use their priority as node id."""

COORDINATOR = 0xFFFF_FFFF
"""Node id of the setup dealer."""


class AuthenticationError(RuntimeError):
    """A message tag did not verify or the message was replayed."""


def node_name(node: int) -> str:
    if node == BOARD:
        return "board"
    if node == COORDINATOR:
        return "coordinator"
    return f"client-{node}"


def channel_id(a: int, b: int) -> tuple[int, int]:
    """Unordered pair identifying the symmetric key of a channel."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ObfuscationKey:
    """Affine mask :math:`x \\mapsto \\lambda x + r`."""

    lam: FieldElement
    r: FieldVector

    def __post_init__(self) -> None:
        if int(self.lam) == 0:
            raise ValueError("The obfuscation scalar must be nonzero")

    def apply(self, payload: FieldVector) -> FieldVector:
        return vec_apply(vec_scale(payload, self.lam), self.r, OpCode.ADD)


@dataclass(frozen=True)
class ConsensusKey:
    """Layer key together with the operation it is bound to."""

    k: FieldVector
    bound_op: OpCode

    def __post_init__(self) -> None:
        if self.bound_op.is_multiplicative and np.count_nonzero(self.k) != self.k.size:
            raise ValueError(
                f"Key for operation {self.bound_op.value!r} must be nonzero everywhere"
            )


@dataclass(frozen=True)
class StepChecksum:
    index: int
    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != DIGEST_BYTES:
            raise ValueError(f"Digest must have {DIGEST_BYTES} bytes")


@dataclass(frozen=True)
class DataChecksum:
    """Per-dimension ratios of the opened sum to the released state."""

    ratios: FieldVector
    sum_check: FieldElement

    def is_exact(self) -> bool:
        dim = self.ratios.size
        return bool(np.all(self.ratios == 1)) and int(self.sum_check) == dim % int(
            modulus_of(self.ratios)
        )


@dataclass(frozen=True)
class CciRecord:
    uuid: UUID
    payload: FieldVector


@dataclass(frozen=True)
class CciMatrix:
    """Client UUIDs paired with their confidential, encoded payloads."""

    records: tuple[CciRecord, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("A CCI matrix needs at least one record")
        uuids = [r.uuid for r in self.records]
        if len(set(uuids)) != len(uuids):
            raise ValueError("CCI matrix contains duplicate client uuids")
        if len({r.payload.size for r in self.records}) != 1:
            raise ValueError("All payloads in a CCI matrix must have the same length")

    @property
    def n_clients(self) -> int:
        return len(self.records)

    @property
    def dim(self) -> int:
        return self.records[0].payload.size

    def payload_of(self, uuid: UUID) -> FieldVector:
        for record in self.records:
            if record.uuid == uuid:
                return record.payload
        raise KeyError(uuid)


@dataclass(frozen=True)
class PriorityMap:
    """Bijection from priority ``1..N`` to client uuid.

    ``order[i - 1]`` is the uuid of the client with priority ``i``.
    """

    order: tuple[UUID, ...]

    def __post_init__(self) -> None:
        if len(set(self.order)) != len(self.order):
            raise ValueError("Priority map assigns one uuid to several priorities")

    @classmethod
    def from_priorities(cls, priorities: Mapping[UUID, int]) -> "PriorityMap":
        """Build the map from client-defined priorities (a permutation of 1..N)."""
        n = len(priorities)
        if sorted(priorities.values()) != list(range(1, n + 1)):
            raise ValueError("Priorities must be a permutation of 1..N")
        return cls(tuple(sorted(priorities, key=priorities.__getitem__)))

    @property
    def n_clients(self) -> int:
        return len(self.order)

    def uuid_for(self, priority: int) -> UUID:
        if not 1 <= priority <= len(self.order):
            raise KeyError(priority)
        return self.order[priority - 1]

    def priority_of(self, uuid: UUID) -> int:
        return self.order.index(uuid) + 1


@dataclass(frozen=True)
class ProtocolParams:
    n_clients: int
    dim: int
    modulus: int = MERSENNE_61
    scale_bits: int = 20
    tau: int = 3
    broadcast_lo: bool = False
    hash_full_vector: bool = False


@dataclass(frozen=True)
class BroadcastPacket:
    """Public setup output.

    ``obfuscated`` is only set when ``params.broadcast_lo`` is true, in which
    case the per-client obfuscated vectors are public from the start.
    """

    l_c: FieldVector
    sigma_s: tuple[StepChecksum, ...]
    priority_map: PriorityMap
    commitments: tuple[bytes, ...]
    params: ProtocolParams
    obfuscated: tuple[FieldVector, ...] | None = None

    def __post_init__(self) -> None:
        n = self.params.n_clients
        if [s.index for s in self.sigma_s] != list(range(1, n + 1)):
            raise ValueError("Step checksums must be indexed 1..N")
        if len(self.commitments) != n or self.priority_map.n_clients != n:
            raise ValueError("Packet needs one commitment and one uuid per client")
        if self.l_c.size != self.params.dim:
            raise ValueError("L_C length differs from the protocol dimension")

    def sigma(self, position: int) -> bytes:
        return self.sigma_s[position - 1].digest


@dataclass(frozen=True)
class ClientEnvelope:
    """Private setup material for the client with the given priority."""

    priority: int
    theta: OpCode
    consensus_key: ConsensusKey
    obfuscation_key: ObfuscationKey
    obfuscated: FieldVector
    salt: bytes
    channel_keys: Mapping[int, bytes] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.consensus_key.bound_op is not self.theta:
            raise ValueError("Consensus key is bound to a different operation")
        if len(self.salt) != SALT_BYTES:
            raise ValueError(f"Salt must have {SALT_BYTES} bytes")
        object.__setattr__(
            self, "channel_keys", MappingProxyType(dict(self.channel_keys))
        )

    @classmethod
    def create(
        cls,
        *,
        priority: int,
        theta: OpCode,
        consensus_key: ConsensusKey,
        obfuscation_key: ObfuscationKey,
        obfuscated: FieldVector,
        salt: bytes,
        channel_keys: Mapping[int, bytes],
        payload: FieldVector,
    ) -> "ClientEnvelope":
        """Construct an envelope after checking ``O_i = lambda_i D_i + r_i``.

        The payload is only used for the check and is not stored.
        """
        with uncounted():
            expected = obfuscation_key.apply(payload)
        if not np.array_equal(expected, obfuscated):
            raise ValueError(
                f"Obfuscated vector of client {priority} does not match its payload"
            )
        return cls(
            priority=priority,
            theta=theta,
            consensus_key=consensus_key,
            obfuscation_key=obfuscation_key,
            obfuscated=obfuscated,
            salt=salt,
            channel_keys=channel_keys,
        )


@dataclass(frozen=True)
class ChainState:
    """Aggregate after ``position`` decryption layers."""

    values: FieldVector
    position: int
    producer: int
    round: int


def step_digest(values: FieldVector, full_vector: bool = False) -> bytes:
    """SHA3-256 digest of a chain state.

    By default the digest covers only the canonical encoding of the scalar
    :math:`\\sum_d L_d \\bmod p`, so states with equal sums collide.
    With ``full_vector`` the whole canonical vector is hashed.
    """
    with phase("checksum"):
        if full_vector:
            return hashlib.sha3_256(encode_vector(values)).digest()
        return hashlib.sha3_256(encode_element(vec_sum(values))).digest()


def _mac_input(sender: int, seq: int, message: bytes) -> bytes:
    return struct.pack("<IQ", sender, seq) + message


def mac_tag(key: bytes, sender: int, seq: int, message: bytes) -> bytes:
    """HMAC-SHA3-256 over ``sender || seq || message``, truncated to 16 bytes."""
    return hmac.new(key, _mac_input(sender, seq, message), hashlib.sha3_256).digest()[
        :TAG_BYTES
    ]


def mac_verify(key: bytes, sender: int, seq: int, message: bytes, tag: bytes) -> None:
    """Raise :class:`AuthenticationError` unless ``tag`` matches."""
    if not hmac.compare_digest(mac_tag(key, sender, seq, message), tag):
        raise AuthenticationError(
            f"Invalid tag on message {seq} from {node_name(sender)}"
        )


def commitment(obfuscated: FieldVector, salt: bytes) -> bytes:
    """Salted SHA3-256 commitment to an obfuscated vector."""
    return hashlib.sha3_256(b"cppdd-commit" + salt + encode_vector(obfuscated)).digest()


def verify_opening(digest: bytes, obfuscated: FieldVector, salt: bytes) -> bool:
    return hmac.compare_digest(commitment(obfuscated, salt), digest)


def data_checksum(o_sum: FieldVector, l_final: FieldVector) -> DataChecksum:
    """Ratios :math:`\\sigma_{D,d} = (\\sum_i O_{i,d}) / L^{(N)}_d`.

    Where ``l_final`` is zero the ratio is 1 if ``o_sum`` is zero too and 0
    otherwise.
    """
    if type(o_sum) is not type(l_final) or o_sum.shape != l_final.shape:
        raise ValueError("Opened sum and final state must have equal length and field")
    gf = type(o_sum)
    with phase("verification"):
        nonzero = l_final.view(np.ndarray) != 0
        denominators = gf(np.where(nonzero, l_final.view(np.ndarray), 1))
        quotients = vec_apply(o_sum, denominators, OpCode.DIV).view(np.ndarray)
        fallback = (o_sum.view(np.ndarray) == 0).astype(quotients.dtype)
        ratios = gf(np.where(nonzero, quotients, fallback))
        return DataChecksum(ratios=ratios, sum_check=vec_sum(ratios))


def opened_sum(openings: Sequence[FieldVector]) -> FieldVector:
    with phase("verification"):
        return vec_total(list(openings))
