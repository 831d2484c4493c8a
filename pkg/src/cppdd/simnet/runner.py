# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Round scheduler executing one protocol instance over the simulated network.

Round 0 delivers the packet and the envelopes, rounds ``1..N`` are the relay
steps and round ``N + 1`` holds the release, the openings and the board
verification. Retries happen inside the round that owns the step.
"""

import contextlib
import dataclasses
import enum
import hashlib
import json
import logging
import time
from collections import Counter
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

from ..protocol import wire
from ..protocol.client import (
    Abort,
    AbortNotice,
    AbortReason,
    ClientNode,
    Opening,
    Release,
    RequestRetry,
    Validated,
)
from ..protocol.coordinator import SetupOutput
from ..protocol.core import (
    BOARD,
    COORDINATOR,
    AuthenticationError,
    BroadcastPacket,
    ChainState,
    DataChecksum,
    data_checksum,
    node_name,
    opened_sum,
    step_digest,
    verify_opening,
)
from ..protocol.field import FieldOpTally, FieldVector, counting, encode_vector
from ..protocol.wire import MessageKind
from .faults import FaultPlan, inject
from .network import BoardRecord, BulletinBoard, Endpoint

logger = logging.getLogger(__name__)


class Outcome(enum.Enum):
    SUCCESS = "Success"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class SimClock:
    """Deadlines in virtual ticks. Every transmission advances time by one tick."""

    round_ticks: int = 16
    opening_ticks: int = 16

    def __post_init__(self) -> None:
        if self.round_ticks < 1 or self.opening_ticks < 1:
            raise ValueError("Deadlines must be at least one tick")


@dataclass(frozen=True)
class Accept:
    """Board verdict of a verified release."""

    data_checksum: DataChecksum


@dataclass(frozen=True)
class LogRecord:
    round: int
    tick: int
    kind: str
    sender: int
    receiver: int
    seq: int
    size: int
    status: str
    detail: str = ""


@dataclass(frozen=True)
class OpCounters:
    """Field operations, bytes on the wire and wall-clock time of one run."""

    tally: FieldOpTally = field(default_factory=FieldOpTally)
    link_bytes: Mapping[tuple[int, int], int] = field(default_factory=dict)
    phase_seconds: Mapping[str, float] = field(default_factory=dict)
    client_seconds: Mapping[int, float] = field(default_factory=dict)

    @property
    def additions(self) -> int:
        return self.tally.kind_total("add")

    @property
    def multiplications(self) -> int:
        return self.tally.kind_total("mul") + self.tally.kind_total("div")

    @property
    def inversions(self) -> int:
        return self.tally.kind_total("inv")

    @property
    def total_bytes(self) -> int:
        return sum(self.link_bytes.values())

    @property
    def wall_seconds(self) -> float:
        """Wall-clock time of the run. Verification is nested in the release."""
        return sum(t for p, t in self.phase_seconds.items() if p != "verification")


@dataclass(frozen=True)
class RunTranscript:
    outcome: Outcome
    notice: AbortNotice | None
    rounds: int
    ticks: int
    log: tuple[LogRecord, ...]
    board: tuple[BoardRecord, ...]
    retries: Mapping[int, int]
    counters: OpCounters
    recovered: Mapping[int, FieldVector]
    storage: Mapping[int, int]

    @property
    def succeeded(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    @property
    def total_retries(self) -> int:
        return sum(self.retries.values())

    @property
    def released(self) -> FieldVector | None:
        """The masked aggregate posted on the board, if any."""
        for record in self.board:
            if isinstance(record.entry, Release):
                return record.entry.values
        return None

    def frame_sizes(self, kind: MessageKind) -> set[int]:
        return {
            r.size for r in self.log if r.kind == kind.name and r.status == "delivered"
        }

    def to_jsonl(self, include_timings: bool = False) -> str:
        """One JSON record per message and board entry, then a summary.

        Wall-clock timings vary between runs and are left out by default.
        """
        lines = [
            json.dumps({"type": "message", **dataclasses.asdict(r)}, sort_keys=True)
            for r in self.log
        ]
        lines += [
            json.dumps(
                {
                    "type": "board",
                    "round": r.round,
                    "author": node_name(r.author),
                    **_describe(r.entry),
                },
                sort_keys=True,
            )
            for r in self.board
        ]
        summary = {
            "type": "summary",
            "outcome": self.outcome.value,
            "rounds": self.rounds,
            "ticks": self.ticks,
            "retries": {node_name(k): v for k, v in sorted(self.retries.items())},
            "field_ops": {
                f"{p}/{k}": n for (p, k), n in sorted(self.counters.tally.counts.items())
            },
            "bytes_total": self.counters.total_bytes,
            "notice": None if self.notice is None else _describe(self.notice),
        }
        if include_timings:
            summary["phase_seconds"] = dict(self.counters.phase_seconds)
            summary["client_seconds"] = {
                str(k): v for k, v in self.counters.client_seconds.items()
            }
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"


def _digest_hex(values: FieldVector) -> str:
    return hashlib.sha3_256(encode_vector(values)).hexdigest()


def _describe(entry: object) -> dict:
    match entry:
        case BroadcastPacket():
            return {"entry": "packet", "l_c": _digest_hex(entry.l_c)}
        case Release():
            return {"entry": "release", "state": _digest_hex(entry.values)}
        case Opening():
            return {"entry": "opening", "priority": entry.priority}
        case Accept():
            return {"entry": "accept", "sum_check": int(entry.data_checksum.sum_check)}
        case AbortNotice():
            return {
                "entry": "abort",
                "issuer": entry.issuer_name,
                "step": entry.step,
                "reason": entry.reason.value,
                "suspect": entry.suspect,
                "expected": entry.expected.hex() if entry.expected else None,
                "recomputed": entry.recomputed.hex() if entry.recomputed else None,
            }
    return {"entry": type(entry).__name__}


def check_release(release: Release, packet: BroadcastPacket) -> AbortNotice | None:
    """Recompute the last step checksum on the posted state."""
    n = packet.params.n_clients
    recomputed = step_digest(release.values, packet.params.hash_full_vector)
    if recomputed == packet.sigma(n):
        return None
    return AbortNotice(
        issuer=BOARD,
        step=n,
        reason=AbortReason.CHECKSUM_MISMATCH,
        suspect=release.author,
        expected=packet.sigma(n),
        recomputed=recomputed,
    )


def _openings(board: BulletinBoard, packet: BroadcastPacket) -> dict[int, Opening]:
    if packet.obfuscated is not None:
        return {
            i: Opening(priority=i, obfuscated=o, salt=b"")
            for i, o in enumerate(packet.obfuscated, start=1)
        }
    found: dict[int, Opening] = {}
    for record in board:
        entry = record.entry
        if isinstance(entry, Opening) and record.author == entry.priority:
            found.setdefault(entry.priority, entry)
    return found


def board_verify(board: BulletinBoard, packet: BroadcastPacket) -> Accept | AbortNotice:
    """Verify the release against the step checksum, openings and data checksum.

    Any party can run this on the public board. Obfuscated vectors published in
    the packet need no opening.
    """
    n = packet.params.n_clients
    release = board.first(Release)
    if release is None:
        return AbortNotice(BOARD, n + 1, AbortReason.TIMEOUT, suspect=n)
    if (notice := check_release(release, packet)) is not None:
        return notice
    openings = _openings(board, packet)
    missing = [i for i in range(1, n + 1) if i not in openings]
    if missing:
        return AbortNotice(
            BOARD,
            n + 1,
            AbortReason.TIMEOUT,
            suspect=missing[0] if len(missing) == 1 else None,
        )
    if packet.obfuscated is None:
        for i in range(1, n + 1):
            o = openings[i]
            if not verify_opening(packet.commitments[i - 1], o.obfuscated, o.salt):
                return AbortNotice(
                    BOARD, n + 1, AbortReason.COMMITMENT_MISMATCH, suspect=i
                )
    sigma_d = data_checksum(
        opened_sum([openings[i].obfuscated for i in range(1, n + 1)]), release.values
    )
    if not sigma_d.is_exact():
        return AbortNotice(
            BOARD, n + 1, AbortReason.DATA_CHECKSUM_FAILURE, suspect=release.author
        )
    return Accept(sigma_d)


class _Simulation:
    def __init__(self, setup: SetupOutput, plan: FaultPlan, clock: SimClock) -> None:
        self.packet = setup.packet
        self.n = self.packet.params.n_clients
        plan.validate(self.n)
        self.setup = setup
        self.plan = plan
        self.clock = clock
        self.coordinator = Endpoint(
            COORDINATOR,
            {
                BOARD: setup.board_keys[COORDINATOR],
                **{e.priority: e.channel_keys[COORDINATOR] for e in setup.envelopes},
            },
        )
        self.endpoints = {BOARD: Endpoint(BOARD, setup.board_keys)} | {
            e.priority: Endpoint(e.priority, e.channel_keys) for e in setup.envelopes
        }
        self.nodes: dict[int, ClientNode] = {}
        self.board = BulletinBoard()
        self.log: list[LogRecord] = []
        self.round = 0
        self.tick = 0
        self.link_bytes: Counter = Counter()
        self.transmissions: Counter = Counter()
        self.retries = {node: 0 for node in self.endpoints}
        self.phase_seconds: Counter = Counter()
        self.client_seconds: dict[int, float] = {}

    @contextlib.contextmanager
    def _timed(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.phase_seconds[name] += time.perf_counter() - start

    def _event(self, kind: str, sender: int, receiver: int, detail: str) -> None:
        self.log.append(
            LogRecord(self.round, self.tick, kind, sender, receiver, 0, 0, "event", detail)
        )

    def _transmit(
        self, sender: int, receiver: int, kind: MessageKind, body: bytes
    ) -> wire.Message | None:
        """Seal, possibly corrupt, and open one frame. ``None`` if rejected."""
        source = self.coordinator if sender == COORDINATOR else self.endpoints[sender]
        data = source.seal(kind, receiver, self.round, body)
        if kind in (MessageKind.RELAY_STATE, MessageKind.RELEASE, MessageKind.OPENING):
            data = inject(self.plan.behavior(sender), data, self.transmissions[sender])
            self.transmissions[sender] += 1
        self.tick += 1
        self.link_bytes[sender, receiver] += len(data)
        record = dict(
            round=self.round,
            tick=self.tick,
            kind=kind.name,
            sender=sender,
            receiver=receiver,
            seq=source.last_seq,
            size=len(data),
        )
        try:
            message = self.endpoints[receiver].open(data)
        except AuthenticationError as err:
            logger.warning("Rejected %s: %s", kind.name, err)
            self.log.append(LogRecord(**record, status="rejected", detail=str(err)))
            return None
        logger.debug(
            "%s %s -> %s", kind.name, node_name(sender), node_name(receiver)
        )
        self.log.append(LogRecord(**record, status="delivered"))
        return message

    def _deliver_setup(self) -> None:
        modulus = self.packet.params.modulus
        message = self._transmit(
            COORDINATOR, BOARD, MessageKind.PACKET, wire.encode_packet(self.packet)
        )
        if message is None:
            raise RuntimeError("Setup channel to the board rejected the packet")
        packet = wire.decode_packet(message.body)
        self.board.post(self.round, COORDINATOR, packet)
        corrupted = set(self.plan.corrupted)
        for envelope in self.setup.envelopes:
            i = envelope.priority
            message = self._transmit(
                COORDINATOR, i, MessageKind.SETUP_ENVELOPE, wire.encode_envelope(envelope)
            )
            if message is None:
                raise RuntimeError(f"Setup channel to {node_name(i)} rejected")
            received = wire.decode_envelope(message.body, modulus)
            node = ClientNode(
                inject(self.plan.behavior(i), received),
                packet,
                validating=i not in corrupted,
            )
            node.start()
            self.nodes[i] = node

    def _request_retry(self, requester: int, position: int) -> None:
        target = position if position >= 1 else BOARD
        self.retries[requester] += 1
        self._transmit(
            requester, target, MessageKind.RETRY_REQUEST, wire.retry_body(position)
        )

    def _step(self, node: ClientNode, state: ChainState) -> AbortNotice | None:
        i = node.priority
        if i > 1:
            state = inject(self.plan.behavior(i - 1), state)
            if state is None:
                self.tick += self.clock.round_ticks
                self._event("TIMEOUT", i - 1, i, "relay state withheld")
                return node.on_timeout()
        modulus = self.packet.params.modulus
        while True:
            if i == 1:
                outcome = node.on_state(state)
            else:
                message = self._transmit(
                    i - 1,
                    i,
                    MessageKind.RELAY_STATE,
                    wire.relay_body(state.position, state.values),
                )
                if message is None:
                    outcome = node.on_rejected_delivery(AbortReason.AUTH_FAILURE)
                else:
                    position, values = wire.parse_relay_body(message.body, modulus)
                    outcome = node.on_state(
                        ChainState(values, position, message.sender, message.round)
                    )
            match outcome:
                case Validated():
                    return None
                case RequestRetry(position=position):
                    self._request_retry(i, position)
                case Abort(notice=notice):
                    return notice

    def _relay(self) -> Release | AbortNotice:
        state = ChainState(self.packet.l_c, position=0, producer=BOARD, round=1)
        for i in range(1, self.n + 1):
            self.round = i
            node = self.nodes[i]
            start = time.perf_counter()
            notice = self._step(node, state)
            self.client_seconds[i] = time.perf_counter() - start
            if notice is not None:
                return notice
            if i < self.n:
                state = node.relay()
        return self.nodes[self.n].release()

    def _to_board(self, sender: int, kind: MessageKind, body: bytes) -> wire.Message | None:
        """Deliver to the board, re-requesting up to ``tau`` times."""
        for attempt in range(self.packet.params.tau + 1):
            if attempt:
                self.retries[BOARD] += 1
                self._transmit(
                    BOARD, sender, MessageKind.RETRY_REQUEST, wire.retry_body(sender)
                )
            message = self._transmit(sender, BOARD, kind, body)
            if message is not None:
                return message
        return None

    def _release(self, release: Release) -> Accept | AbortNotice:
        n = self.n
        self.round = n + 1
        modulus = self.packet.params.modulus
        emitted = inject(
            self.plan.behavior(n), ChainState(release.values, n, n, self.round)
        )
        if emitted is None:
            self.tick += self.clock.round_ticks
            self._event("TIMEOUT", n, BOARD, "release withheld")
            return AbortNotice(BOARD, n + 1, AbortReason.TIMEOUT, suspect=n)
        message = self._to_board(
            n, MessageKind.RELEASE, wire.release_body(emitted.values)
        )
        if message is None:
            return AbortNotice(BOARD, n + 1, AbortReason.AUTH_FAILURE, suspect=n)
        posted = Release(
            author=n, values=wire.parse_release_body(message.body, modulus)
        )
        with self._timed("verification"):
            if (notice := check_release(posted, self.packet)) is not None:
                return notice
        self.board.post(self.round, n, posted)
        if self.packet.obfuscated is None:
            self._collect_openings()
        with self._timed("verification"):
            return board_verify(self.board, self.packet)

    def _collect_openings(self) -> None:
        modulus = self.packet.params.modulus
        deadline = self.tick + self.clock.opening_ticks
        withheld = False
        for i in range(1, self.n + 1):
            opening = inject(self.plan.behavior(i), self.nodes[i].opening())
            if opening is None:
                withheld = True
                continue
            message = self._to_board(
                i,
                MessageKind.OPENING,
                wire.opening_body(opening.priority, opening.obfuscated, opening.salt),
            )
            if message is None:
                continue
            priority, obfuscated, salt = wire.parse_opening_body(message.body, modulus)
            self.board.post(self.round, message.sender, Opening(priority, obfuscated, salt))
        if withheld or len(self.board.entries(Opening)) < self.n:
            self.tick = max(self.tick, deadline)
            self._event("TIMEOUT", BOARD, BOARD, "openings missing at deadline")

    def _abort(self, notice: AbortNotice) -> None:
        if notice.issuer in self.nodes:
            message = self._transmit(
                notice.issuer, BOARD, MessageKind.ABORT, wire.abort_body(notice)
            )
            if message is not None:
                notice = wire.parse_abort_body(message.body)
        self.board.post(self.round, notice.issuer, notice)
        for node in self.nodes.values():
            node.abort(notice)
        logger.warning(
            "Run aborted by %s at step %d: %s",
            notice.issuer_name,
            notice.step,
            notice.reason.value,
        )

    def _finish(self, accept: Accept) -> dict[int, FieldVector]:
        self.board.post(self.round, BOARD, accept)
        recovered = {}
        with self._timed("deobfuscation"):
            for i, node in self.nodes.items():
                node.confirm_release()
                recovered[i] = node.deobfuscate()
        logger.info("Release accepted after %d rounds", self.round + 1)
        return recovered

    def execute(self) -> RunTranscript:
        recovered: dict[int, FieldVector] = {}
        notice: AbortNotice | None = None
        with counting() as tally:
            with self._timed("delivery"):
                self._deliver_setup()
            with self._timed("relay"):
                result = self._relay()
            if isinstance(result, Release):
                with self._timed("release"):
                    result = self._release(result)
            if isinstance(result, Accept):
                recovered = self._finish(result)
            else:
                notice = result
                self._abort(notice)
            storage = {i: node.storage_bytes() for i, node in self.nodes.items()}
        return RunTranscript(
            outcome=Outcome.ABORTED if notice else Outcome.SUCCESS,
            notice=notice,
            rounds=self.round + 1,
            ticks=self.tick,
            log=tuple(self.log),
            board=self.board.records,
            retries=dict(self.retries),
            counters=OpCounters(
                tally=tally,
                link_bytes=dict(self.link_bytes),
                phase_seconds=dict(self.phase_seconds),
                client_seconds=dict(self.client_seconds),
            ),
            recovered=recovered,
            storage=storage,
        )


def run(
    setup: SetupOutput,
    plan: FaultPlan | None = None,
    clock: SimClock | None = None,
) -> RunTranscript:
    """Execute one protocol instance.

    Protocol failures are reported through the transcript outcome and never
    raised.

    Parameters
    ----------
    setup:
        Output of the coordinator.
    plan:
        Client behaviors, all honest by default.
    clock:
        Deadlines for withheld messages.
    """
    plan = plan or FaultPlan.honest()
    transcript = _Simulation(setup, plan, clock or SimClock()).execute()
    logger.info(
        "Run with N=%d finished: %s in %d rounds",
        setup.packet.params.n_clients,
        transcript.outcome.value,
        transcript.rounds,
    )
    return transcript
