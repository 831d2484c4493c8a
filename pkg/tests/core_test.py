# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
import uuid

import numpy as np
import pytest

from cppdd.protocol.core import (
    BOARD,
    COORDINATOR,
    AuthenticationError,
    CciMatrix,
    CciRecord,
    ClientEnvelope,
    ConsensusKey,
    ObfuscationKey,
    PriorityMap,
    StepChecksum,
    channel_id,
    commitment,
    data_checksum,
    mac_tag,
    mac_verify,
    node_name,
    opened_sum,
    step_digest,
    verify_opening,
)
from cppdd.protocol.field import OpCode, counting, element, vector

KEY = bytes(range(32))
SALT = bytes(16)


def test_node_names():
    assert node_name(BOARD) == "board"
    assert node_name(COORDINATOR) == "coordinator"
    assert node_name(3) == "client-3"


def test_channel_id_is_unordered():
    assert channel_id(2, 1) == channel_id(1, 2) == (1, 2)
    assert channel_id(COORDINATOR, BOARD) == (BOARD, COORDINATOR)


def test_obfuscation_key_applies_affine_mask():
    key = ObfuscationKey(lam=element(3, 97), r=vector([5], 97))
    assert key.apply(vector([10], 97)).tolist() == [35]


def test_obfuscation_scalar_must_be_nonzero():
    with pytest.raises(ValueError, match="nonzero"):
        ObfuscationKey(lam=element(0, 97), r=vector([5], 97))


def test_multiplicative_consensus_key_must_be_nonzero():
    with pytest.raises(ValueError, match="nonzero everywhere"):
        ConsensusKey(k=vector([1, 0], 97), bound_op=OpCode.DIV)
    # zeros are fine for additive layers
    ConsensusKey(k=vector([1, 0], 97), bound_op=OpCode.SUB)


def test_step_checksum_needs_full_digest():
    with pytest.raises(ValueError, match="32 bytes"):
        StepChecksum(index=1, digest=b"short")


def test_step_digest_is_deterministic():
    v = vector([1, 2, 3])
    assert step_digest(v) == step_digest(vector([1, 2, 3]))
    assert len(step_digest(v)) == 32


def test_sum_digest_collides_on_equal_sums_but_full_digest_does_not():
    a = vector([1, 2, 3])
    b = vector([3, 2, 1])
    assert step_digest(a) == step_digest(b)
    assert step_digest(a, full_vector=True) != step_digest(b, full_vector=True)


def test_step_digest_is_counted_as_checksum_work():
    with counting() as tally:
        step_digest(vector([1, 2, 3]))
    assert tally.phase_total("checksum") == 3
    assert tally.total(("encryption",)) == 0


def test_mac_verifies_and_rejects_tampering():
    tag = mac_tag(KEY, 1, 7, b"message")
    assert len(tag) == 16
    mac_verify(KEY, 1, 7, b"message", tag)
    with pytest.raises(AuthenticationError, match="message 7 from client-1"):
        mac_verify(KEY, 1, 7, b"messagf", tag)


@pytest.mark.parametrize(
    ("sender", "seq", "key"), [(2, 7, KEY), (1, 8, KEY), (1, 7, bytes(32))]
)
def test_mac_binds_sender_sequence_and_key(sender, seq, key):
    tag = mac_tag(KEY, 1, 7, b"message")
    with pytest.raises(AuthenticationError):
        mac_verify(key, sender, seq, b"message", tag)


def test_commitment_opens_only_with_committed_values():
    o = vector([4, 5, 6])
    digest = commitment(o, SALT)
    assert verify_opening(digest, o, SALT)
    assert not verify_opening(digest, vector([4, 5, 7]), SALT)
    assert not verify_opening(digest, o, b"\x01" * 16)


def test_data_checksum_is_exact_for_matching_sum():
    o = [vector([1, 2, 0], 97), vector([3, 4, 0], 97)]
    sigma = data_checksum(opened_sum(o), vector([4, 6, 0], 97))
    assert sigma.ratios.tolist() == [1, 1, 1]
    assert int(sigma.sum_check) == 3
    assert sigma.is_exact()


def test_data_checksum_detects_mismatch():
    sigma = data_checksum(vector([4, 6], 97), vector([4, 7], 97))
    assert sigma.ratios.tolist()[0] == 1
    assert sigma.ratios.tolist()[1] != 1
    assert not sigma.is_exact()


def test_data_checksum_of_zero_against_nonzero_sum_fails():
    sigma = data_checksum(vector([3], 97), vector([0], 97))
    assert sigma.ratios.tolist() == [0]
    assert not sigma.is_exact()


def test_data_checksum_requires_equal_fields():
    with pytest.raises(ValueError, match="equal length and field"):
        data_checksum(vector([1], 97), vector([1, 2], 97))


def test_cci_matrix_validation():
    u = uuid.uuid4()
    with pytest.raises(ValueError, match="at least one"):
        CciMatrix(())
    with pytest.raises(ValueError, match="duplicate"):
        CciMatrix((CciRecord(u, vector([1])), CciRecord(u, vector([2]))))
    with pytest.raises(ValueError, match="same length"):
        CciMatrix(
            (CciRecord(u, vector([1])), CciRecord(uuid.uuid4(), vector([1, 2])))
        )


def test_cci_matrix_lookup():
    records = tuple(CciRecord(uuid.uuid4(), vector([i, i])) for i in range(3))
    cci = CciMatrix(records)
    assert cci.n_clients == 3
    assert cci.dim == 2
    assert cci.payload_of(records[2].uuid).tolist() == [2, 2]
    with pytest.raises(KeyError):
        cci.payload_of(uuid.uuid4())


def test_priority_map_from_client_priorities():
    a, b, c = (uuid.uuid4() for _ in range(3))
    pm = PriorityMap.from_priorities({a: 2, b: 3, c: 1})
    assert pm.order == (c, a, b)
    assert pm.uuid_for(1) == c
    assert pm.priority_of(b) == 3
    with pytest.raises(KeyError):
        pm.uuid_for(4)


def test_priority_map_rejects_non_permutation():
    a, b = uuid.uuid4(), uuid.uuid4()
    with pytest.raises(ValueError, match="permutation"):
        PriorityMap.from_priorities({a: 1, b: 1})
    with pytest.raises(ValueError, match="several priorities"):
        PriorityMap((a, a))


def _envelope_args(obfuscated):
    return dict(
        priority=1,
        theta=OpCode.ADD,
        consensus_key=ConsensusKey(k=vector([7], 97), bound_op=OpCode.ADD),
        obfuscation_key=ObfuscationKey(lam=element(3, 97), r=vector([5], 97)),
        obfuscated=obfuscated,
        salt=SALT,
        channel_keys={BOARD: KEY},
        payload=vector([10], 97),
    )


def test_envelope_create_checks_obfuscation():
    env = ClientEnvelope.create(**_envelope_args(vector([35], 97)))
    assert env.obfuscated.tolist() == [35]
    assert dict(env.channel_keys) == {BOARD: KEY}
    with pytest.raises(ValueError, match="does not match its payload"):
        ClientEnvelope.create(**_envelope_args(vector([36], 97)))


def test_envelope_rejects_key_bound_to_other_operation():
    args = _envelope_args(vector([35], 97))
    del args["payload"]
    args["theta"] = OpCode.MUL
    with pytest.raises(ValueError, match="different operation"):
        ClientEnvelope(**args)


def test_envelope_channel_keys_are_read_only():
    env = ClientEnvelope.create(**_envelope_args(vector([35], 97)))
    with pytest.raises(TypeError):
        env.channel_keys[2] = KEY


def test_envelope_check_is_not_counted():
    with counting() as tally:
        ClientEnvelope.create(**_envelope_args(vector([35], 97)))
    assert tally.total() == 0


def test_opened_sum_adds_element_wise():
    assert np.array_equal(
        opened_sum([vector([1, 2], 97), vector([96, 3], 97)]), vector([0, 5], 97)
    )
