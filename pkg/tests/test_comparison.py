from math import comb

import pytest

from veilboost.comparison import (
    ComparisonError,
    NodePlan,
    PlanEntry,
    batch_compare,
    encrypt_pe,
    greater_than,
    is_equal,
)
from veilboost.encoding import (
    QueryLayout,
    codeword_length,
    cw_encode,
    pack_query_planes,
    pe_encode,
    re_encode,
)
from veilboost.fhe import FheParams, ReferenceBackend
from veilboost.rng import DeterministicRng


def make_backend(slot_count=64, depth_budget=32):
    return ReferenceBackend(FheParams.default(slot_count, depth_budget=depth_budget))


def enc_label(backend, key, word):
    return backend.encrypt(backend.encode(list(word.bits)), key)


def read_bit(backend, key, bit):
    return backend.decode(backend.decrypt(bit.ciphertext, key))[bit.slot_index]


# ---------------------------------------------------------------------------
# is_equal
# ---------------------------------------------------------------------------


def test_is_equal_exhaustive_weight3_codebook():
    backend = make_backend()
    key = backend.keygen(DeterministicRng(0))
    words = [cw_encode(v, 6, 3) for v in range(comb(6, 3))]
    for a in words:
        ct = enc_label(backend, key, a)
        for b in words:
            out = is_equal(backend, ct, b)
            got = backend.decode(backend.decrypt(out, key))[0]
            assert got == int(a == b), (str(a), str(b))


def test_is_equal_reflexive():
    backend = make_backend()
    key = backend.keygen(DeterministicRng(1))
    word = cw_encode(7, 8, 2)
    assert read_bit(
        backend, key,
        type("B", (), {"ciphertext": is_equal(backend, enc_label(backend, key, word), word), "slot_index": 0}),
    ) == 1


@pytest.mark.parametrize("weight", [2, 3, 4])
@pytest.mark.parametrize("bitwidth", [8, 16, 32])
def test_is_equal_depth_is_weight_bound_only(weight, bitwidth):
    # depth == ceil(log2 h) + 2 whatever the bitwidth: the codeword just
    # gets longer, never deeper
    length = codeword_length(1 << bitwidth, weight)
    slot_count = 2
    while slot_count // 2 < length:
        slot_count *= 2
    backend = ReferenceBackend(FheParams.default(slot_count))
    key = backend.keygen(DeterministicRng(2))
    word = cw_encode((1 << bitwidth) - 3, length, weight)
    ct = enc_label(backend, key, word)
    out = is_equal(backend, ct, word)
    expected_depth = (weight - 1).bit_length() + 2  # ceil(log2 h) + 2
    assert out.depth - ct.depth == expected_depth
    assert backend.decode(backend.decrypt(out, key))[0] == 1


def test_is_equal_label_too_long_rejected():
    backend = make_backend(16)
    key = backend.keygen(DeterministicRng(3))
    word = cw_encode(0, 12, 2)
    with pytest.raises(ComparisonError):
        is_equal(backend, enc_label(backend, key, word), word)


# ---------------------------------------------------------------------------
# greater_than
# ---------------------------------------------------------------------------


def test_paper_examples_three_vs_four_and_one():
    backend = make_backend()
    key = backend.keygen(DeterministicRng(4))
    pe3 = encrypt_pe(backend, pe_encode(3, 3, 6, 3), key)
    assert read_bit(backend, key, greater_than(backend, pe3, re_encode(4, 3, 6, 3))) == 0
    assert read_bit(backend, key, greater_than(backend, pe3, re_encode(1, 3, 6, 3))) == 1


def test_greater_than_exhaustive_depth4():
    backend = make_backend()
    key = backend.keygen(DeterministicRng(5))
    depth = 4
    length = codeword_length(1 << depth, 2)
    res = [re_encode(b, depth, length, 2) for b in range(16)]
    for alpha in range(16):
        pe = encrypt_pe(backend, pe_encode(alpha, depth, length, 2), key)
        for beta in range(16):
            got = read_bit(backend, key, greater_than(backend, pe, res[beta]))
            assert got == int(alpha > beta), (alpha, beta)


def test_greater_than_empty_range_is_zero():
    backend = make_backend()
    key = backend.keygen(DeterministicRng(6))
    pe = encrypt_pe(backend, pe_encode(7, 3, 6, 3), key)
    assert read_bit(backend, key, greater_than(backend, pe, re_encode(7, 3, 6, 3))) == 0


def test_greater_than_depth_mismatch():
    backend = make_backend()
    key = backend.keygen(DeterministicRng(7))
    pe = encrypt_pe(backend, pe_encode(3, 3, 6, 3), key)
    with pytest.raises(ComparisonError):
        greater_than(backend, pe, re_encode(3, 4, 7, 2))


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------


def test_plan_deduplicates_pairs():
    plan = NodePlan.from_pairs([("age", 5), ("age", 5), ("sleep", 2)])
    assert len(plan) == 2


def test_plan_rejects_explicit_duplicates():
    with pytest.raises(ComparisonError):
        NodePlan((PlanEntry("a", 1), PlanEntry("a", 1)))


def test_plan_slot_assignment_sorted_by_threshold():
    params = FheParams.default(64)
    layout = QueryLayout.build([("age", 0, 1), ("sleep", 0, 1)], 3, 4, params)
    plan = NodePlan.from_pairs(
        [("age", 9), ("age", 2), ("age", 5), ("sleep", 7)]
    ).with_slots(layout)
    slots = {(e.feature, e.threshold): e.slot for e in plan.entries}
    assert slots[("age", 2)] == 0
    assert slots[("age", 5)] == 1
    assert slots[("age", 9)] == 2
    assert slots[("sleep", 7)] == 32  # mirrored into the second half


# ---------------------------------------------------------------------------
# batch_compare
# ---------------------------------------------------------------------------


def setup_batch(values, pairs, bitwidth=4, slot_count=64, repetitions=None):
    params = FheParams.default(slot_count)
    backend = ReferenceBackend(params)
    key = backend.keygen(DeterministicRng(8))
    plan = NodePlan.from_pairs(pairs)
    reps = repetitions if repetitions is not None else plan.max_per_feature()
    layout = QueryLayout.build(
        [(name, 0, 1) for name in sorted(values)], reps, bitwidth, params
    )
    plan = plan.with_slots(layout)
    planes = [
        backend.encrypt(backend.encode(list(p)), key)
        for p in pack_query_planes(values, layout)
    ]
    return backend, key, layout, plan, planes


def test_batch_singleton_equals_greater_than():
    values = {"x": 9}
    backend, key, layout, plan, planes = setup_batch(values, [("x", 4)])
    bits = batch_compare(backend, planes, plan, layout)
    assert read_bit(backend, key, bits[("x", 4)]) == int(9 > 4)


def test_batch_random_plan_matches_integer_oracle(rng):
    for trial in range(10):
        values = {f"f{i}": rng.randint(16) for i in range(3)}
        pairs = {(f"f{rng.randint(3)}", rng.randint(16)) for _ in range(10)}
        backend, key, layout, plan, planes = setup_batch(values, sorted(pairs))
        bits = batch_compare(backend, planes, plan, layout)
        for (feature, threshold), bit in bits.items():
            expected = int(values[feature] > threshold)
            assert read_bit(backend, key, bit) == expected, (trial, feature, threshold)


def test_batch_alignment_rotations_equal_plan_size():
    # balanced mirrored layout: one rotation per plan entry, rows + columns
    values = {"a": 3, "b": 12}
    pairs = [("a", 1), ("a", 7), ("b", 4), ("b", 9)]
    backend, key, layout, plan, planes = setup_batch(values, pairs)
    before = backend.ledger.snapshot()
    batch_compare(backend, planes, plan, layout)
    assert backend.ledger.delta(before)["rotations"] == len(plan)


def test_batch_rotations_scale_with_plan_not_nodes(rng):
    # ten distinct pairs reached by clustering 100 nodes cost the same
    # rotations as a native ten-node forest
    pairs = sorted({(f"f{rng.randint(2)}", rng.randint(16)) for _ in range(40)})[:10]
    values = {"f0": 5, "f1": 11}

    backend, key, layout, plan, planes = setup_batch(values, pairs)
    before = backend.ledger.snapshot()
    batch_compare(backend, planes, plan, layout)
    native = backend.ledger.delta(before)["rotations"]

    # same plan fed 10x duplicated pairs (pre-clustering shape)
    duplicated = NodePlan.from_pairs(pairs * 10).with_slots(layout)
    backend2, key2, layout2, plan2, planes2 = setup_batch(values, pairs)
    before2 = backend2.ledger.snapshot()
    batch_compare(backend2, planes2, duplicated.with_slots(layout2), layout2)
    clustered = backend2.ledger.delta(before2)["rotations"]

    assert native == clustered == len(plan)


def test_batch_rejects_plan_without_slots():
    values = {"x": 9}
    backend, key, layout, plan, planes = setup_batch(values, [("x", 4)])
    with pytest.raises(ComparisonError):
        batch_compare(backend, planes, NodePlan.from_pairs([("x", 4)]), layout)


def test_batch_rejects_wrong_plane_count():
    values = {"x": 9}
    backend, key, layout, plan, planes = setup_batch(values, [("x", 4)])
    with pytest.raises(ComparisonError):
        batch_compare(backend, planes[:-1], plan, layout)


def test_greater_than_randomized_depth8(rng):
    backend = make_backend(128)
    key = backend.keygen(DeterministicRng(9))
    depth = 8
    length = codeword_length(1 << depth, 2)
    for _ in range(100):
        alpha, beta = rng.randint(256), rng.randint(256)
        pe = encrypt_pe(backend, pe_encode(alpha, depth, length, 2), key)
        got = read_bit(backend, key, greater_than(backend, pe, re_encode(beta, depth, length, 2)))
        assert got == int(alpha > beta), (alpha, beta)
