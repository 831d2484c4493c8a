# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Client state machine for the relay chain.

Each client holds only its own envelope. It applies its layer to the state
received from its predecessor, checks the result against the public step
checksum and either relays it, asks for a re-send or aborts the run.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    BOARD,
    BroadcastPacket,
    ChainState,
    ClientEnvelope,
    node_name,
    step_digest,
)
from .field import FieldVector, OpCode, f_inv, phase, vec_apply, vec_scale

logger = logging.getLogger(__name__)


class ProtocolOrderError(RuntimeError):
    """A chain state arrived at the wrong position."""


class PhaseError(RuntimeError):
    """An operation is not allowed in the current client phase."""


class SuppressedByAbortError(RuntimeError):
    """The run was aborted, so no payload may leave the node."""


class Phase(enum.Enum):
    IDLE = "Idle"
    AWAIT_STATE = "AwaitState"
    APPLIED = "Applied"
    VALIDATED = "Validated"
    RELAYED = "Relayed"
    RELEASED = "Released"
    ABORTED = "Aborted"


class AbortReason(enum.Enum):
    CHECKSUM_MISMATCH = "ChecksumMismatch"
    AUTH_FAILURE = "AuthFailure"
    TIMEOUT = "Timeout"
    DATA_CHECKSUM_FAILURE = "DataChecksumFailure"
    COMMITMENT_MISMATCH = "CommitmentMismatch"


@dataclass(frozen=True)
class AbortNotice:
    """Evidence posted to the board when a run is aborted.

    ``issuer`` is a client priority or :data:`~cppdd.protocol.core.BOARD` for
    board verification. ``suspect`` is the priority the issuer holds
    responsible, if it can name one.
    """

    issuer: int
    step: int
    reason: AbortReason
    suspect: int | None = None
    expected: bytes | None = None
    recomputed: bytes | None = None

    @property
    def issuer_name(self) -> str:
        return node_name(self.issuer)


@dataclass(frozen=True)
class Validated:
    digest: bytes


@dataclass(frozen=True)
class RequestRetry:
    position: int
    attempt: int


@dataclass(frozen=True)
class Abort:
    notice: AbortNotice


StepOutcome = Validated | RequestRetry | Abort


@dataclass(frozen=True)
class Release:
    """Final chain state posted by the last client."""

    author: int
    values: FieldVector


@dataclass(frozen=True)
class Opening:
    """Obfuscated vector and salt revealed after the release."""

    priority: int
    obfuscated: FieldVector
    salt: bytes


def decrypt_step(state: ChainState, envelope: ClientEnvelope) -> ChainState:
    """Apply the layer of ``envelope`` to the predecessor's state.

    Parameters
    ----------
    state:
        State at position ``i - 1``, where ``i`` is the client's priority.
    envelope:
        Private setup material of client ``i``.

    Returns
    -------
    :
        State at position ``i``.
    """
    i = envelope.priority
    if state.position != i - 1:
        raise ProtocolOrderError(
            f"Client {i} expects a state at position {i - 1}, got {state.position}"
        )
    with phase("decryption"):
        values = vec_apply(state.values, envelope.consensus_key.k, envelope.theta)
    return ChainState(values=values, position=i, producer=i, round=state.round)


def validate_step(
    state: ChainState,
    packet: BroadcastPacket,
    retries_used: int,
) -> StepOutcome:
    """Compare the digest of ``state`` to the published step checksum.

    A mismatch asks the predecessor for a re-send while fewer than ``tau``
    retries have been used, and aborts otherwise.
    """
    i = state.position
    expected = packet.sigma(i)
    recomputed = step_digest(state.values, packet.params.hash_full_vector)
    if recomputed == expected:
        return Validated(recomputed)
    return _failed_attempt(
        i,
        retries_used,
        packet.params.tau,
        AbortReason.CHECKSUM_MISMATCH,
        expected=expected,
        recomputed=recomputed,
    )


def _failed_attempt(
    position: int,
    retries_used: int,
    tau: int,
    reason: AbortReason,
    expected: bytes | None = None,
    recomputed: bytes | None = None,
) -> StepOutcome:
    if retries_used < tau:
        return RequestRetry(position=position - 1, attempt=retries_used + 1)
    return Abort(
        AbortNotice(
            issuer=position,
            step=position,
            reason=reason,
            suspect=position - 1 if position > 1 else None,
            expected=expected,
            recomputed=recomputed,
        )
    )


def release_final(state: ChainState, packet: BroadcastPacket) -> Release:
    n = packet.params.n_clients
    if state.position != n:
        raise ProtocolOrderError(
            f"Only the state at position {n} can be released, got {state.position}"
        )
    return Release(author=n, values=state.values)


def deobfuscate(envelope: ClientEnvelope) -> FieldVector:
    """Recover ``D_i = (O_i - r_i) / lambda_i`` from the envelope."""
    key = envelope.obfuscation_key
    with phase("deobfuscation"):
        shifted = vec_apply(envelope.obfuscated, key.r, OpCode.SUB)
        return vec_scale(shifted, f_inv(key.lam))


class ClientNode:
    """Single-threaded state machine of the client with one priority.

    Parameters
    ----------
    envelope:
        The client's private setup material.
    packet:
        The public broadcast packet.
    validating:
        Whether the client checks its own step. Honest clients always do.
    """

    def __init__(
        self,
        envelope: ClientEnvelope,
        packet: BroadcastPacket,
        validating: bool = True,
    ) -> None:
        self.envelope = envelope
        self.packet = packet
        self.validating = validating
        self.phase = Phase.IDLE
        self.retries = 0
        self.notice: AbortNotice | None = None
        self._state: ChainState | None = None
        self._confirmed = False

    @property
    def priority(self) -> int:
        return self.envelope.priority

    @property
    def is_last(self) -> bool:
        return self.priority == self.packet.params.n_clients

    @property
    def state(self) -> ChainState | None:
        return self._state

    def _require(self, *phases: Phase) -> None:
        if self.phase not in phases:
            allowed = ", ".join(p.value for p in phases)
            raise PhaseError(
                f"Client {self.priority} is {self.phase.value}, needs {allowed}"
            )

    def start(self) -> None:
        self._require(Phase.IDLE)
        self.phase = Phase.AWAIT_STATE

    def on_state(self, state: ChainState) -> StepOutcome:
        """Apply the own layer to an incoming state and validate the result."""
        self._require(Phase.AWAIT_STATE)
        self._state = decrypt_step(state, self.envelope)
        self.phase = Phase.APPLIED
        if not self.validating:
            self.phase = Phase.VALIDATED
            return Validated(b"")
        outcome = validate_step(self._state, self.packet, self.retries)
        return self._settle(outcome)

    def on_rejected_delivery(self, reason: AbortReason) -> StepOutcome:
        """Count a delivery that failed before reaching the protocol logic."""
        self._require(Phase.AWAIT_STATE)
        outcome = _failed_attempt(
            self.priority, self.retries, self.packet.params.tau, reason
        )
        return self._settle(outcome)

    def _settle(self, outcome: StepOutcome) -> StepOutcome:
        match outcome:
            case Validated():
                self.phase = Phase.VALIDATED
            case RequestRetry(attempt=attempt):
                self.retries = attempt
                self._state = None
                self.phase = Phase.AWAIT_STATE
                logger.warning(
                    "Client %d requests retry %d of %d",
                    self.priority,
                    attempt,
                    self.packet.params.tau,
                )
            case Abort(notice=notice):
                self.abort(notice)
        return outcome

    def on_timeout(self) -> AbortNotice:
        """Abort because the predecessor never delivered."""
        self._require(Phase.AWAIT_STATE)
        notice = AbortNotice(
            issuer=self.priority,
            step=self.priority,
            reason=AbortReason.TIMEOUT,
            suspect=self.priority - 1 if self.priority > 1 else None,
        )
        self.abort(notice)
        return notice

    def relay(self) -> ChainState:
        """Hand the validated state to the successor."""
        self._require(Phase.VALIDATED)
        if self.is_last:
            raise PhaseError(f"Client {self.priority} is last and must release")
        self.phase = Phase.RELAYED
        return self._state

    def release(self) -> Release:
        self._require(Phase.VALIDATED)
        post = release_final(self._state, self.packet)
        self.phase = Phase.RELEASED
        return post

    def opening(self) -> Opening:
        self._require(Phase.RELAYED, Phase.RELEASED)
        return Opening(
            priority=self.priority,
            obfuscated=self.envelope.obfuscated,
            salt=self.envelope.salt,
        )

    def confirm_release(self) -> None:
        """Record that the board accepted the release."""
        self._require(Phase.RELAYED, Phase.RELEASED)
        self.phase = Phase.RELEASED
        self._confirmed = True

    def abort(self, notice: AbortNotice) -> None:
        if self.phase is Phase.ABORTED:
            return
        if self.notice is None and notice.issuer == self.priority:
            logger.warning(
                "Client %d aborts at step %d: %s",
                self.priority,
                notice.step,
                notice.reason.value,
            )
        self.notice = notice
        self.phase = Phase.ABORTED
        self._state = None
        self._confirmed = False

    def deobfuscate(self) -> FieldVector:
        if self.phase is Phase.ABORTED:
            raise SuppressedByAbortError(
                f"Client {self.priority} aborted, payload stays masked"
            )
        self._require(Phase.RELEASED)
        if not self._confirmed:
            raise PhaseError(f"Release not yet accepted by the {node_name(BOARD)}")
        return deobfuscate(self.envelope)

    def storage_bytes(self) -> int:
        """Bytes of protocol state retained by the node."""
        env = self.envelope
        arrays = (
            env.consensus_key.k,
            env.obfuscation_key.r,
            env.obfuscated,
            env.obfuscation_key.lam,
        )
        held = sum(np.asarray(a).nbytes for a in arrays)
        held += len(env.salt) + sum(len(k) for k in env.channel_keys.values())
        if self._state is not None:
            held += self._state.values.nbytes
        return held
