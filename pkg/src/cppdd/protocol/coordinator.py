# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Offline setup: organize, generate keys, obfuscate, encrypt and form lists.

The coordinator runs once per protocol instance and keeps nothing afterwards.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from uuid import UUID

from .core import (
    BOARD,
    COORDINATOR,
    KEY_BYTES,
    SALT_BYTES,
    BroadcastPacket,
    CciMatrix,
    ClientEnvelope,
    ConsensusKey,
    ObfuscationKey,
    PriorityMap,
    ProtocolParams,
    StepChecksum,
    channel_id,
    commitment,
    step_digest,
)
from .field import (
    MERSENNE_61,
    FieldVector,
    FixedPointCodec,
    OpCode,
    SeededGenerator,
    phase,
    sample_element,
    sample_vector,
    vec_apply,
    vec_total,
)
from .types import (
    AuditMode,
    BroadcastLO,
    FixedOpCodes,
    HashFullVector,
    Modulus,
    ObfuscatedPayloads,
    OrderedPayloads,
    RequestedPriorities,
    RetryBound,
    ScaleBits,
    SetupSeed,
)

logger = logging.getLogger(__name__)


class SetupError(ValueError):
    """The setup inputs are inconsistent."""


@dataclass(frozen=True)
class KeyMaterial:
    """All keys of one instance, in priority order. Never leaves the coordinator."""

    obfuscation_keys: tuple[ObfuscationKey, ...]
    consensus_keys: tuple[ConsensusKey, ...]
    op_codes: tuple[OpCode, ...]


@dataclass(frozen=True)
class EncryptedChain:
    l_c: FieldVector
    sigma_s: tuple[StepChecksum, ...]
    states: tuple[FieldVector, ...]
    """Chain states in decryption order, ``states[j]`` after ``j`` layers."""


@dataclass(frozen=True)
class SetupOutput:
    """Everything the coordinator hands out before it retires.

    ``board_keys`` maps each peer to the key it shares with the bulletin
    board. ``audit`` holds the chain states ``L^(0)..L^(N)`` in decryption
    order and is only kept in audit mode.
    """

    packet: BroadcastPacket
    envelopes: tuple[ClientEnvelope, ...]
    board_keys: Mapping[int, bytes]
    audit: tuple[FieldVector, ...] | None = None

    def __post_init__(self) -> None:
        n = self.packet.params.n_clients
        if len(self.envelopes) != n or len(self.packet.sigma_s) != n:
            raise SetupError("Setup output needs one envelope and checksum per client")

    def envelope(self, priority: int) -> ClientEnvelope:
        return self.envelopes[priority - 1]


def organize(
    cci: CciMatrix, priorities: PriorityMap
) -> tuple[tuple[FieldVector, ...], PriorityMap]:
    """Sort payloads by priority.

    Returns
    -------
    :
        Payloads with index ``i - 1`` holding the priority-``i`` payload, and
        the unchanged priority map.
    """
    known = {r.uuid for r in cci.records}
    if set(priorities.order) != known or priorities.n_clients != cci.n_clients:
        unknown = sorted(str(u) for u in set(priorities.order) ^ known)
        raise SetupError(
            f"Priority map does not cover the CCI uuids exactly: {unknown}"
        )
    return tuple(cci.payload_of(u) for u in priorities.order), priorities


def keygen(
    n_clients: int,
    dim: int,
    rng: SeededGenerator,
    modulus: int = MERSENNE_61,
    op_codes: Sequence[OpCode] = (),
) -> KeyMaterial:
    """Draw obfuscation keys, consensus keys and operation codes.

    Every client draws from its own child generator, so the keys of client
    ``i`` depend only on the seed and ``i``. Operations are uniform over the
    four op codes unless ``op_codes`` fixes them.
    """
    if n_clients < 1 or dim < 1:
        raise SetupError(f"Need N >= 1 and D >= 1, got N={n_clients}, D={dim}")
    if op_codes and len(op_codes) != n_clients:
        raise SetupError(f"Expected {n_clients} op codes, got {len(op_codes)}")
    obfuscation, consensus, ops = [], [], []
    for i in range(1, n_clients + 1):
        child = rng.spawn(f"client-{i}")
        lam = sample_element(child, nonzero=True, modulus=modulus)
        r = sample_vector(child, dim, modulus=modulus)
        # top two bits of one draw select the op code
        theta = OpCode.from_code(child.next_u64() >> 62)
        if op_codes:
            theta = op_codes[i - 1]
        k = sample_vector(child, dim, nonzero=theta.is_multiplicative, modulus=modulus)
        obfuscation.append(ObfuscationKey(lam=lam, r=r))
        consensus.append(ConsensusKey(k=k, bound_op=theta))
        ops.append(theta)
    return KeyMaterial(tuple(obfuscation), tuple(consensus), tuple(ops))


def obfuscate(
    payloads: Sequence[FieldVector], keys: Sequence[ObfuscationKey]
) -> tuple[FieldVector, ...]:
    """``O_i = lambda_i D_i + r_i`` for every client."""
    if len(payloads) != len(keys):
        raise SetupError(f"{len(payloads)} payloads but {len(keys)} obfuscation keys")
    with phase("obfuscation"):
        return tuple(key.apply(d) for d, key in zip(payloads, keys, strict=True))


def encrypt(
    obfuscated: Sequence[FieldVector],
    keys: Sequence[ConsensusKey],
    ops: Sequence[OpCode],
    full_vector: bool = False,
) -> EncryptedChain:
    """Lock the aggregate behind N complementary layers in reverse priority.

    Starting from :math:`\\sum_i O_i`, for ``i = N..1`` the digest of the
    current state is recorded as the step checksum of client ``i`` before the
    complement of its operation is applied with its key.
    """
    if not len(obfuscated) == len(keys) == len(ops):
        raise SetupError("Obfuscated vectors, keys and op codes differ in count")
    with phase("aggregation"):
        state = vec_total(list(obfuscated))
    states = [state]
    digests = []
    with phase("encryption"):
        for key, op in zip(reversed(keys), reversed(ops), strict=True):
            digests.append(step_digest(state, full_vector))
            state = vec_apply(state, key.k, op.complement)
            states.append(state)
    n = len(keys)
    sigma_s = tuple(
        StepChecksum(index=i, digest=d)
        for i, d in zip(range(n, 0, -1), digests, strict=True)
    )[::-1]
    return EncryptedChain(l_c=state, sigma_s=sigma_s, states=tuple(states[::-1]))


def _channel_keys(n_clients: int, rng: SeededGenerator) -> dict[tuple[int, int], bytes]:
    pairs = [channel_id(COORDINATOR, BOARD)]
    for i in range(1, n_clients + 1):
        pairs.append(channel_id(i, BOARD))
        pairs.append(channel_id(i, COORDINATOR))
        if i < n_clients:
            pairs.append(channel_id(i, i + 1))
    return {pair: rng.random_bytes(KEY_BYTES) for pair in sorted(pairs)}


def form_lists(
    params: ProtocolParams,
    priorities: PriorityMap,
    payloads: Sequence[FieldVector],
    obfuscated: Sequence[FieldVector],
    keys: KeyMaterial,
    chain: EncryptedChain,
    rng: SeededGenerator,
    audit: bool = False,
) -> SetupOutput:
    """Assemble the broadcast packet and one private envelope per client."""
    salts = [rng.random_bytes(SALT_BYTES) for _ in obfuscated]
    pair_keys = _channel_keys(params.n_clients, rng.spawn("channels"))
    envelopes = []
    for i in range(1, params.n_clients + 1):
        envelopes.append(
            ClientEnvelope.create(
                priority=i,
                theta=keys.op_codes[i - 1],
                consensus_key=keys.consensus_keys[i - 1],
                obfuscation_key=keys.obfuscation_keys[i - 1],
                obfuscated=obfuscated[i - 1],
                salt=salts[i - 1],
                channel_keys={
                    (b if a == i else a): key
                    for (a, b), key in pair_keys.items()
                    if i in (a, b)
                },
                payload=payloads[i - 1],
            )
        )
    packet = BroadcastPacket(
        params=params,
        l_c=chain.l_c,
        sigma_s=chain.sigma_s,
        priority_map=priorities,
        commitments=tuple(
            commitment(o, s) for o, s in zip(obfuscated, salts, strict=True)
        ),
        obfuscated=tuple(obfuscated) if params.broadcast_lo else None,
    )
    board_keys = {
        (b if a == BOARD else a): key
        for (a, b), key in pair_keys.items()
        if BOARD in (a, b)
    }
    logger.info(
        "Setup complete for N=%d, D=%d%s",
        params.n_clients,
        params.dim,
        " (audit mode)" if audit else "",
    )
    return SetupOutput(
        packet=packet,
        envelopes=tuple(envelopes),
        board_keys=board_keys,
        audit=chain.states if audit else None,
    )


def protocol_params(
    cci: CciMatrix,
    modulus: Modulus,
    scale_bits: ScaleBits,
    tau: RetryBound,
    broadcast_lo: BroadcastLO,
    hash_full_vector: HashFullVector,
) -> ProtocolParams:
    if tau < 0:
        raise SetupError(f"Retry bound must be non-negative, got {tau}")
    return ProtocolParams(
        n_clients=cci.n_clients,
        dim=cci.dim,
        modulus=modulus,
        scale_bits=scale_bits,
        tau=tau,
        broadcast_lo=broadcast_lo,
        hash_full_vector=hash_full_vector,
    )


def fixed_point_codec(scale_bits: ScaleBits, modulus: Modulus) -> FixedPointCodec:
    return FixedPointCodec(scale_bits=scale_bits, modulus=modulus)


def priority_map(cci: CciMatrix, requested: RequestedPriorities) -> PriorityMap:
    """Priorities requested by the clients, record order if none were given."""
    uuids: list[UUID] = [r.uuid for r in cci.records]
    if not requested:
        return PriorityMap(tuple(uuids))
    if len(requested) != len(uuids):
        raise SetupError(
            f"{len(requested)} priorities requested for {len(uuids)} clients"
        )
    try:
        return PriorityMap.from_priorities(dict(zip(uuids, requested, strict=True)))
    except ValueError as err:
        raise SetupError(str(err)) from err


def organize_payloads(cci: CciMatrix, priorities: PriorityMap) -> OrderedPayloads:
    payloads, _ = organize(cci, priorities)
    return OrderedPayloads(payloads)


def generate_keys(
    params: ProtocolParams, seed: SetupSeed, op_codes: FixedOpCodes
) -> KeyMaterial:
    rng = SeededGenerator(seed).spawn("keygen")
    return keygen(params.n_clients, params.dim, rng, params.modulus, op_codes)


def obfuscate_payloads(
    payloads: OrderedPayloads, keys: KeyMaterial
) -> ObfuscatedPayloads:
    return ObfuscatedPayloads(obfuscate(payloads, keys.obfuscation_keys))


def encrypt_chain(
    obfuscated: ObfuscatedPayloads, keys: KeyMaterial, params: ProtocolParams
) -> EncryptedChain:
    return encrypt(
        obfuscated, keys.consensus_keys, keys.op_codes, params.hash_full_vector
    )


def assemble_setup(
    params: ProtocolParams,
    priorities: PriorityMap,
    payloads: OrderedPayloads,
    obfuscated: ObfuscatedPayloads,
    keys: KeyMaterial,
    chain: EncryptedChain,
    seed: SetupSeed,
    audit: AuditMode,
) -> SetupOutput:
    rng = SeededGenerator(seed).spawn("lists")
    return form_lists(
        params, priorities, payloads, obfuscated, keys, chain, rng, audit=audit
    )


providers = (
    protocol_params,
    fixed_point_codec,
    priority_map,
    organize_payloads,
    generate_keys,
    obfuscate_payloads,
    encrypt_chain,
    assemble_setup,
)
