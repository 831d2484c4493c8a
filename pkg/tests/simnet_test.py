# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
import json

import numpy as np
import pytest

from cppdd.protocol import (
    BroadcastLO,
    FixedOpCodes,
    HashFullVector,
    OpCode,
    RetryBound,
)
from cppdd.protocol.client import AbortReason, Opening, Release
from cppdd.protocol.core import BOARD, COORDINATOR, AuthenticationError, ChainState
from cppdd.protocol.field import MERSENNE_61, vec_total, vector
from cppdd.protocol.wire import MessageKind, relay_frame_size
from cppdd.simnet import (
    Accept,
    BulletinBoard,
    Endpoint,
    FaultPlan,
    ForgeOpening,
    Outcome,
    SimClock,
    TamperState,
    TransientCorrupt,
    Withhold,
    WithholdOpening,
    WrongKey,
    WrongOp,
    board_verify,
    inject,
    run,
)
from cppdd.simnet.faults import Honest


def bump(dim: int, index: int = 0) -> tuple[int, ...]:
    """Offset that changes the element sum of a state."""
    return tuple(1 if d == index else 0 for d in range(dim))


@pytest.mark.parametrize("n_clients", [1, 2, 5, 50])
def test_honest_run_succeeds_in_n_plus_two_rounds(make_setup, n_clients):
    setup = make_setup(n_clients, 4)
    transcript = run(setup)
    assert transcript.outcome is Outcome.SUCCESS
    assert transcript.rounds == n_clients + 2
    assert transcript.notice is None
    assert transcript.total_retries == 0


def test_honest_run_with_many_clients(make_setup):
    transcript = run(make_setup(500, 2))
    assert transcript.succeeded
    assert transcript.rounds == 502


def test_honest_run_recovers_every_payload(make_setup):
    setup = make_setup(4, 6)
    transcript = run(setup)
    o_sum = vec_total([e.obfuscated for e in setup.envelopes])
    assert np.array_equal(transcript.released, o_sum)
    for i, envelope in enumerate(setup.envelopes, start=1):
        key = envelope.obfuscation_key
        assert np.array_equal(
            key.apply(transcript.recovered[i]), envelope.obfuscated
        )


def test_board_holds_packet_release_openings_and_accept(make_setup):
    transcript = run(make_setup(3, 2))
    entries = [type(r.entry).__name__ for r in transcript.board]
    assert entries == [
        "BroadcastPacket",
        "Release",
        "Opening",
        "Opening",
        "Opening",
        "Accept",
    ]
    assert transcript.board[0].author == COORDINATOR
    assert transcript.board[-1].author == BOARD


def test_broadcast_obfuscated_vectors_skip_openings(make_setup):
    transcript = run(make_setup(3, 2, params={BroadcastLO: True}))
    assert transcript.succeeded
    assert not [r for r in transcript.board if isinstance(r.entry, Opening)]


def test_relay_frames_have_constant_size(make_setup):
    for n in (2, 7):
        transcript = run(make_setup(n, 16))
        assert transcript.frame_sizes(MessageKind.RELAY_STATE) == {
            relay_frame_size(16)
        }


@pytest.mark.parametrize("count", [0, 1, 2, 3])
def test_transient_corruption_heals_within_retry_bound(make_setup, count):
    setup = make_setup(4, 3)
    plan = FaultPlan({2: TransientCorrupt(count)})
    transcript = run(setup, plan)
    assert transcript.outcome is Outcome.SUCCESS
    assert transcript.total_retries == count
    assert transcript.retries[3] == count
    assert transcript.rounds == 6


def test_persistent_corruption_aborts_with_auth_failure(make_setup):
    transcript = run(make_setup(4, 3), FaultPlan({2: TransientCorrupt(4)}))
    assert transcript.outcome is Outcome.ABORTED
    assert transcript.notice.reason is AbortReason.AUTH_FAILURE
    assert transcript.notice.issuer == 3
    assert transcript.notice.suspect == 2
    assert transcript.total_retries == 3
    assert transcript.rounds == 4
    assert transcript.recovered == {}


def test_corrupted_release_is_retried_by_the_board(make_setup):
    transcript = run(make_setup(3, 2), FaultPlan({3: TransientCorrupt(2)}))
    assert transcript.succeeded
    assert transcript.retries[BOARD] == 2


def test_retry_bound_zero_aborts_on_first_corruption(make_setup):
    setup = make_setup(3, 2, params={RetryBound: 0})
    transcript = run(setup, FaultPlan({1: TransientCorrupt(1)}))
    assert transcript.notice.reason is AbortReason.AUTH_FAILURE
    assert transcript.total_retries == 0


@pytest.mark.parametrize("position", range(1, 11))
def test_tamper_is_caught_by_the_next_client_or_the_board(make_setup, position):
    setup = make_setup(10, 5)
    transcript = run(setup, FaultPlan({position: TamperState(bump(5, 2))}))
    assert transcript.outcome is Outcome.ABORTED
    notice = transcript.notice
    assert notice.reason is AbortReason.CHECKSUM_MISMATCH
    assert notice.suspect == position
    if position == 10:
        assert notice.issuer == BOARD
        assert notice.issuer_name == "board"
    else:
        assert notice.issuer == position + 1
        assert notice.issuer_name == f"client-{position + 1}"
    assert transcript.recovered == {}


def test_detector_retries_before_aborting(make_setup):
    transcript = run(make_setup(5, 2), FaultPlan({2: TamperState(bump(2))}))
    assert transcript.retries[3] == 3
    assert transcript.rounds == 4


def test_sum_preserving_tamper_is_caught_by_the_data_checksum(make_setup):
    ops = (OpCode.ADD,) * 4
    setup = make_setup(4, 3, params={FixedOpCodes: ops})
    delta = (1, -1, 0)
    transcript = run(setup, FaultPlan({2: TamperState(delta)}))
    assert transcript.notice.reason is AbortReason.DATA_CHECKSUM_FAILURE
    assert transcript.notice.issuer == BOARD
    assert transcript.notice.suspect == 4
    assert transcript.rounds == 6


def test_full_vector_digest_catches_sum_preserving_tamper(make_setup):
    ops = (OpCode.ADD,) * 4
    setup = make_setup(4, 3, params={FixedOpCodes: ops, HashFullVector: True})
    transcript = run(setup, FaultPlan({2: TamperState((1, -1, 0))}))
    assert transcript.notice.reason is AbortReason.CHECKSUM_MISMATCH
    assert transcript.notice.issuer == 3


@pytest.mark.parametrize("behavior", [WrongKey(), WrongOp()])
def test_wrong_layer_is_caught_downstream(make_setup, behavior):
    transcript = run(make_setup(4, 3), FaultPlan({2: behavior}))
    assert transcript.notice.reason is AbortReason.CHECKSUM_MISMATCH
    assert transcript.notice.issuer == 3
    assert transcript.notice.suspect == 2


def test_withheld_state_times_out(make_setup):
    clock = SimClock(round_ticks=50)
    transcript = run(make_setup(4, 2), FaultPlan({2: Withhold()}), clock)
    assert transcript.notice.reason is AbortReason.TIMEOUT
    assert transcript.notice.issuer == 3
    assert transcript.notice.suspect == 2
    assert transcript.ticks >= 50


def test_withheld_release_times_out_at_the_board(make_setup):
    transcript = run(make_setup(3, 2), FaultPlan({3: Withhold()}))
    assert transcript.notice.reason is AbortReason.TIMEOUT
    assert transcript.notice.issuer == BOARD
    assert transcript.notice.suspect == 3


def test_withheld_opening_times_out(make_setup):
    transcript = run(make_setup(3, 2), FaultPlan({2: WithholdOpening()}))
    assert transcript.notice.reason is AbortReason.TIMEOUT
    assert transcript.notice.suspect == 2
    assert transcript.rounds == 5
    assert transcript.recovered == {}


def test_forged_opening_breaks_the_commitment(make_setup):
    transcript = run(make_setup(3, 2), FaultPlan({1: ForgeOpening(bump(2))}))
    assert transcript.notice.reason is AbortReason.COMMITMENT_MISMATCH
    assert transcript.notice.suspect == 1


def test_abort_is_posted_and_reaches_every_client(make_setup):
    transcript = run(make_setup(4, 2), FaultPlan({1: TamperState(bump(2))}))
    notices = [r for r in transcript.board if r.entry == transcript.notice]
    assert len(notices) == 1
    assert notices[0].author == 2
    assert not any(isinstance(r.entry, Release) for r in transcript.board)
    abort_frames = [r for r in transcript.log if r.kind == "ABORT"]
    assert [r.status for r in abort_frames] == ["delivered"]


def test_fault_plan_validation():
    with pytest.raises(ValueError, match="own step"):
        FaultPlan({2: TamperState((1,), target_step=3)})
    with pytest.raises(ValueError, match="priority 0"):
        FaultPlan({0: Withhold()})
    with pytest.raises(ValueError, match=">= 0"):
        TransientCorrupt(-1)
    plan = FaultPlan({2: WrongKey(), 3: TransientCorrupt(1)})
    assert plan.corrupted == (2,)
    assert isinstance(plan.behavior(1), Honest)
    with pytest.raises(ValueError, match="unknown priorities"):
        plan.validate(2)


def test_plan_with_unknown_priority_is_rejected_by_run(make_setup):
    with pytest.raises(ValueError, match="unknown priorities"):
        run(make_setup(2, 2), FaultPlan({3: Withhold()}))


def test_tamper_delta_must_match_dimension(make_setup):
    with pytest.raises(ValueError, match="length 1"):
        run(make_setup(2, 3), FaultPlan({1: TamperState((1,))}))


def test_honest_behavior_leaves_every_emission_unchanged(make_setup):
    envelope = make_setup(2, 3).envelope(1)
    state = ChainState(vector([1, 2, 3]), position=1, producer=1, round=2)
    opening = Opening(1, envelope.obfuscated, envelope.salt)
    for emission in (state, envelope, opening, b"\x07" * 40):
        assert inject(Honest(), emission) is emission


def test_zero_tamper_leaves_the_run_successful(make_setup):
    transcript = run(make_setup(4, 3), FaultPlan({2: TamperState((0, 0, 0))}))
    assert transcript.outcome is Outcome.SUCCESS
    assert transcript.notice is None
    assert transcript.rounds == 6


def test_honest_plan_has_no_corrupted_clients(make_setup):
    plan = FaultPlan.honest()
    assert plan.corrupted == ()
    assert all(isinstance(plan.behavior(i), Honest) for i in range(1, 4))
    assert run(make_setup(3, 2), plan).succeeded


def test_random_tamper_is_drawn_from_the_plan_seed():
    plan = FaultPlan.random_tamper(20, 64, MERSENNE_61, seed=11)
    assert plan.seed == 11
    assert plan == FaultPlan.random_tamper(20, 64, MERSENNE_61, seed=11)
    ((position, behavior),) = plan.behaviors.items()
    assert 1 <= position <= 20
    assert isinstance(behavior, TamperState)
    assert len(behavior.delta) == 64
    assert sum(1 for x in behavior.delta if x != 0) == 1
    assert all(0 <= x < MERSENNE_61 for x in behavior.delta)
    others = [FaultPlan.random_tamper(20, 64, MERSENNE_61, seed=s) for s in range(20)]
    assert len({p.corrupted for p in others}) > 1


def test_random_tamper_is_detected(make_setup):
    plan = FaultPlan.random_tamper(6, 3, MERSENNE_61, seed=4)
    transcript = run(make_setup(6, 3), plan)
    assert transcript.notice.reason is AbortReason.CHECKSUM_MISMATCH
    assert transcript.notice.suspect == plan.corrupted[0]


def test_transient_corruption_flips_only_the_first_frames():
    frame = b"\x00" * 40
    behavior = TransientCorrupt(1)
    assert inject(behavior, frame, transmission=0) != frame
    assert inject(behavior, frame, transmission=1) == frame


def test_endpoint_rejects_replay_and_misdelivery():
    key = bytes(32)
    alice = Endpoint(1, {2: key, BOARD: key})
    bob = Endpoint(2, {1: key})
    frame = alice.seal(MessageKind.RELAY_STATE, 2, 1, b"body")
    assert bob.open(frame).body == b"body"
    with pytest.raises(AuthenticationError, match="Replayed"):
        bob.open(frame)
    stray = alice.seal(MessageKind.RELAY_STATE, BOARD, 1, b"body")
    with pytest.raises(AuthenticationError, match="delivered to client-2"):
        bob.open(stray)
    with pytest.raises(AuthenticationError, match="shares no key"):
        alice.seal(MessageKind.RELAY_STATE, 5, 1, b"")


def test_endpoint_rejects_flipped_frames():
    key = bytes(range(32))
    alice = Endpoint(1, {2: key})
    bob = Endpoint(2, {1: key})
    frame = bytearray(alice.seal(MessageKind.OPENING, 2, 4, b"payload"))
    frame[-20] ^= 0x01
    with pytest.raises(AuthenticationError, match="Invalid tag"):
        bob.open(bytes(frame))


def test_sequence_numbers_increase_per_sender():
    alice = Endpoint(1, {2: bytes(32)})
    alice.seal(MessageKind.RELAY_STATE, 2, 1, b"")
    alice.seal(MessageKind.RELAY_STATE, 2, 1, b"")
    assert alice.last_seq == 2


def test_bulletin_board_is_append_only_log():
    board = BulletinBoard()
    board.post(1, 3, "first")
    board.post(2, 4, "second")
    snapshot = board.records
    board.post(3, 5, "third")
    assert len(snapshot) == 2
    assert len(board) == 3
    assert board.first(str) == "first"
    assert [r.author for r in board] == [3, 4, 5]


def test_board_verify_can_be_rerun_by_anyone(make_setup):
    setup = make_setup(3, 2)
    transcript = run(setup)
    board = BulletinBoard()
    for record in transcript.board:
        if not isinstance(record.entry, Accept):
            board.post(record.round, record.author, record.entry)
    verdict = board_verify(board, setup.packet)
    assert isinstance(verdict, Accept)
    assert verdict.data_checksum.is_exact()


def test_board_verify_without_release_times_out(make_setup):
    setup = make_setup(2, 2)
    verdict = board_verify(BulletinBoard(), setup.packet)
    assert verdict.reason is AbortReason.TIMEOUT
    assert verdict.suspect == 2


def test_transcript_export_is_reproducible(make_setup):
    a = run(make_setup(3, 2, seed=4), FaultPlan({1: TransientCorrupt(1)}))
    b = run(make_setup(3, 2, seed=4), FaultPlan({1: TransientCorrupt(1)}))
    assert a.to_jsonl() == b.to_jsonl()
    lines = [json.loads(line) for line in a.to_jsonl().splitlines()]
    assert lines[-1]["type"] == "summary"
    assert lines[-1]["outcome"] == "Success"
    assert "phase_seconds" not in lines[-1]
    assert "phase_seconds" in json.loads(
        a.to_jsonl(include_timings=True).splitlines()[-1]
    )


def test_run_counts_only_protocol_work(make_setup):
    n, dim = 3, 4
    transcript = run(make_setup(n, dim))
    tally = transcript.counters.tally
    assert tally.phase_total("decryption") == n * dim
    assert tally.phase_total("deobfuscation") == 2 * n * dim + n
    assert tally.phase_total("other") == 0
    assert transcript.counters.inversions == n


def test_storage_is_reported_per_client(make_setup):
    transcript = run(make_setup(3, 8))
    assert set(transcript.storage) == {1, 2, 3}
    assert all(size > 3 * 8 * 8 for size in transcript.storage.values())


def test_clock_requires_positive_deadlines():
    with pytest.raises(ValueError, match="at least one tick"):
        SimClock(round_ticks=0)


def test_modulus_of_default_setup(make_setup):
    assert make_setup(1, 1).packet.params.modulus == MERSENNE_61
