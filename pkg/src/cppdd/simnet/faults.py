# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Fault plans and the adversary's view of a client's own emissions."""

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from ..protocol.client import Opening
from ..protocol.core import TAG_BYTES, ChainState, ClientEnvelope, ConsensusKey
from ..protocol.field import (
    FieldVector,
    OpCode,
    modulus_of,
    uncounted,
    vec_apply,
    vector,
)


@dataclass(frozen=True)
class Honest:
    pass


@dataclass(frozen=True)
class TamperState:
    """Add ``delta`` to the state the client emits.

    ``delta`` holds integer offsets, reduced modulo ``p``. ``target_step``
    defaults to the client's own priority.
    """

    delta: tuple[int, ...]
    target_step: int | None = None


@dataclass(frozen=True)
class WrongKey:
    """Apply a different key with the correct operation."""


@dataclass(frozen=True)
class WrongOp:
    """Apply the next operation in ``+ - * /`` order with the correct key."""


@dataclass(frozen=True)
class Withhold:
    """Never emit the relay state."""


@dataclass(frozen=True)
class TransientCorrupt:
    """Flip one wire byte in each of the first ``count`` transmissions."""

    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"TransientCorrupt count must be >= 0, got {self.count}")


@dataclass(frozen=True)
class WithholdOpening:
    """Never post the opening after the release."""


@dataclass(frozen=True)
class ForgeOpening:
    """Post ``O_i + delta`` instead of the committed vector."""

    delta: tuple[int, ...]


Behavior = (
    Honest
    | TamperState
    | WrongKey
    | WrongOp
    | Withhold
    | TransientCorrupt
    | WithholdOpening
    | ForgeOpening
)

_LINK_FAULTS = (Honest, TransientCorrupt)


@dataclass(frozen=True)
class FaultPlan:
    """Behavior of every client, keyed by priority. Missing clients are honest."""

    behaviors: Mapping[int, Behavior] = field(default_factory=dict)
    seed: int = 0
    """Seed of the random draws that produced the behaviors."""

    def __post_init__(self) -> None:
        for priority, behavior in self.behaviors.items():
            if priority < 1:
                raise ValueError(f"Fault plan references priority {priority}")
            if (
                isinstance(behavior, TamperState)
                and behavior.target_step not in (None, priority)
            ):
                raise ValueError(
                    f"Client {priority} can only tamper with its own step, "
                    f"not step {behavior.target_step}"
                )
        object.__setattr__(
            self, "behaviors", MappingProxyType(dict(self.behaviors))
        )

    @classmethod
    def honest(cls) -> "FaultPlan":
        return cls()

    @classmethod
    def random_tamper(
        cls, n_clients: int, dim: int, modulus: int, seed: int
    ) -> "FaultPlan":
        """One client at a uniform position adds a sum-changing offset.

        The offset is nonzero on a single random dimension, so the element
        sum of the emitted state changes and the next step checksum fails.
        """
        rng = np.random.default_rng(seed)
        position = int(rng.integers(1, n_clients + 1))
        delta = [0] * dim
        delta[int(rng.integers(0, dim))] = int(rng.integers(1, modulus))
        return cls({position: TamperState(tuple(delta))}, seed=seed)

    def behavior(self, priority: int) -> Behavior:
        return self.behaviors.get(priority, Honest())

    @property
    def corrupted(self) -> tuple[int, ...]:
        """Priorities controlled by the adversary. Link faults do not count."""
        return tuple(
            sorted(
                p
                for p, b in self.behaviors.items()
                if not isinstance(b, _LINK_FAULTS)
            )
        )

    def validate(self, n_clients: int) -> None:
        bad = [p for p in self.behaviors if p > n_clients]
        if bad:
            raise ValueError(f"Fault plan references unknown priorities {bad}")


def _offset(values: FieldVector, delta: tuple[int, ...]) -> FieldVector:
    if len(delta) != values.size:
        raise ValueError(
            f"Tamper delta has length {len(delta)}, state has {values.size}"
        )
    p = modulus_of(values)
    d = vector([x % p for x in delta], p)
    with uncounted():
        return vec_apply(values, d, OpCode.ADD)


def _wrong_key(envelope: ClientEnvelope) -> ClientEnvelope:
    key = envelope.consensus_key
    gf = type(key.k)
    if key.bound_op.is_multiplicative:
        k = key.k * gf(2)
    else:
        k = key.k + gf(1)
    return dataclasses.replace(
        envelope, consensus_key=ConsensusKey(k=k, bound_op=key.bound_op)
    )


def _wrong_op(envelope: ClientEnvelope) -> ClientEnvelope:
    theta = OpCode.from_code((envelope.theta.code + 1) % 4)
    k = envelope.consensus_key.k
    if theta.is_multiplicative:
        raw = k.view(np.ndarray)
        k = type(k)(np.where(raw == 0, 1, raw))
    return dataclasses.replace(
        envelope, theta=theta, consensus_key=ConsensusKey(k=k, bound_op=theta)
    )


def _flip(frame: bytes) -> bytes:
    corrupted = bytearray(frame)
    # last body byte, just before the tag
    corrupted[-TAG_BYTES - 1] ^= 0x01
    return bytes(corrupted)


def inject(
    behavior: Behavior,
    target: ChainState | ClientEnvelope | Opening | bytes,
    transmission: int = 0,
) -> ChainState | ClientEnvelope | Opening | bytes | None:
    """Apply a client's behavior to one of its emissions.

    Parameters
    ----------
    behavior:
        Behavior of the emitting client.
    target:
        The state it relays, its own envelope, its opening or a wire frame.
    transmission:
        Index of the frame among the client's transmissions, used by
        :class:`TransientCorrupt`.

    Returns
    -------
    :
        The possibly modified target, or ``None`` if the emission is suppressed.
    """
    match behavior, target:
        case TamperState(delta=delta), ChainState():
            return dataclasses.replace(target, values=_offset(target.values, delta))
        case Withhold(), ChainState():
            return None
        case WrongKey(), ClientEnvelope():
            return _wrong_key(target)
        case WrongOp(), ClientEnvelope():
            return _wrong_op(target)
        case TransientCorrupt(count=count), bytes() if transmission < count:
            return _flip(target)
        case WithholdOpening(), Opening():
            return None
        case ForgeOpening(delta=delta), Opening():
            return dataclasses.replace(
                target, obfuscated=_offset(target.obfuscated, delta)
            )
    return target
