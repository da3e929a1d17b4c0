"""Acceptance suite: every primary criterion at its stated tolerance.

One test per criterion; each prints a single PASS/FAIL line (visible with
``pytest tests/test_acceptance.py -v -s``). No tolerance is deferred:
exact counts are asserted exactly, statistical checks carry their stated
p-values, and timing limits use wall-clock time of the reference backend.
"""

import time
from math import comb

import numpy as np
import pytest
import scipy.stats

from veilboost.bcc import (
    client_convert,
    compose_body_permutation,
    draw_shuffle_rounds,
    profile_for_counts,
    run_challenge,
)
from veilboost.clustering import (
    ClusterConfig,
    cluster_nodes,
    cluster_paths,
    plan_from_clusters,
)
from veilboost.comparison import NodePlan, batch_compare, encrypt_pe, greater_than
from veilboost.encoding import (
    QueryLayout,
    codeword_length,
    compress_query,
    cw_encode,
    decompress_query,
    pack_query_planes,
    pe_encode,
    quantize_to_grid,
    re_encode,
)
from veilboost.fhe import FheParams, ReferenceBackend
from veilboost.forest import (
    Forest,
    FeatureRange,
    LeafNode,
    Split,
    Tree,
    distinct_pairs,
    eval_scores,
    load_model,
    make_random_forest,
    multiply_path_oracle,
    plain_comparison_bits,
    predict_from_scores,
    quantize,
    sum_path,
)
from veilboost.protocol import Client, LoopbackChannel, ServerEngine, TcpChannel, TcpServer
from veilboost.rng import DeterministicRng


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}" + (f" | {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def signed(value: int, t: int) -> int:
    return value - t if value > t // 2 else value


def oracle_for(engine: ServerEngine, row: dict) -> tuple[int, list[int]]:
    q = engine.forest
    quantized = {
        f.name: quantize_to_grid(row[f.name], f.minimum, f.maximum, q.bitwidth)
        for f in q.features
    }
    scores = eval_scores(q, quantized)
    return predict_from_scores(scores), [int(s) for s in scores]


# ---------------------------------------------------------------------------
# 1. Comparison exhaustive
# ---------------------------------------------------------------------------


def test_comparison_exhaustive():
    started = time.perf_counter()

    # all 256 pairs at CBT depth 4, single-pair circuit
    backend = ReferenceBackend(FheParams.default(64))
    key = backend.keygen(DeterministicRng(0))
    depth, weight = 4, 2
    length = codeword_length(1 << depth, weight)
    res = [re_encode(b, depth, length, weight) for b in range(16)]
    exhaustive_bad = 0
    for alpha in range(16):
        pe_ct = encrypt_pe(backend, pe_encode(alpha, depth, length, weight), key)
        for beta in range(16):
            bit = greater_than(backend, pe_ct, res[beta])
            got = backend.decode(backend.decrypt(bit.ciphertext, key))[bit.slot_index]
            exhaustive_bad += got != int(alpha > beta)

    # 1,000 random pairs at 16-bit depth, batched circuit
    rng = DeterministicRng(16161)
    pairs = [(rng.randint(1 << 16), rng.randint(1 << 16)) for _ in range(1000)]
    params = FheParams.default(2048)
    batch_backend = ReferenceBackend(params)
    batch_key = batch_backend.keygen(DeterministicRng(1))
    layout = QueryLayout.build(
        [(f"p{i}", 0.0, 1.0) for i in range(len(pairs))], 1, 16, params
    )
    plan = NodePlan.from_pairs(
        [(f"p{i}", beta) for i, (_, beta) in enumerate(pairs)]
    ).with_slots(layout)
    values = {f"p{i}": alpha for i, (alpha, _) in enumerate(pairs)}
    planes = [
        batch_backend.encrypt(batch_backend.encode(list(p)), batch_key)
        for p in pack_query_planes(values, layout)
    ]
    bits = batch_compare(batch_backend, planes, plan, layout)
    random_bad = 0
    for i, (alpha, beta) in enumerate(pairs):
        bit = bits[(f"p{i}", beta)]
        got = batch_backend.decode(batch_backend.decrypt(bit.ciphertext, batch_key))[0]
        random_bad += got != int(alpha > beta)

    elapsed = time.perf_counter() - started
    report(
        "comparison exhaustive (256 depth-4 + 1000 random 16-bit, 100%, <10s)",
        exhaustive_bad == 0 and random_bad == 0 and elapsed < 10.0,
        f"mismatches {exhaustive_bad}+{random_bad}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 2. Depth invariance
# ---------------------------------------------------------------------------


def test_depth_invariance():
    from veilboost.comparison import is_equal

    failures = []
    for weight in (2, 3, 4):
        depths = set()
        for bitwidth in (8, 16, 32):
            length = codeword_length(1 << bitwidth, weight)
            slot_count = 2
            while slot_count // 2 < length:
                slot_count *= 2
            backend = ReferenceBackend(FheParams.default(slot_count))
            key = backend.keygen(DeterministicRng(2))
            word = cw_encode((1 << bitwidth) - 3, length, weight)
            ct = backend.encrypt(backend.encode(list(word.bits)), key)
            out = is_equal(backend, ct, word)
            expected = (weight - 1).bit_length() + 2  # ceil(log2 h) + 2
            depths.add(out.depth - ct.depth)
            if out.depth - ct.depth != expected:
                failures.append((weight, bitwidth, out.depth - ct.depth, expected))
            if backend.ledger.max_depth != out.depth:
                failures.append((weight, bitwidth, "ledger", backend.ledger.max_depth))
        if len(depths) != 1:
            failures.append((weight, "not constant across bitwidths", depths))
    report(
        "depth invariance (is_equal depth == ceil(log2 h) + 2 for h in {2,3,4}, bits in {8,16,32})",
        not failures,
        str(failures) if failures else "9/9 combinations exact",
    )


# ---------------------------------------------------------------------------
# 3 + 4. End-to-end oracle equivalence and SumPath structure
# ---------------------------------------------------------------------------

E2E_FORESTS = [  # (trees, depth, classes) all within <=20 trees, depth <=5
    (20, 3, 2), (5, 5, 3), (8, 4, 4), (12, 2, 2), (16, 5, 3),
    (6, 3, 4), (10, 4, 2), (18, 5, 2), (7, 2, 3), (9, 3, 4),
]


def run_white_box_query(engine, client_backend, key, row, rng):
    """Drive the real engine rounds with client-side visibility."""
    layout = engine.layout
    quantized = {
        f.name: quantize_to_grid(row[f.name], f.minimum, f.maximum, engine.forest.bitwidth)
        for f in engine.forest.features
    }
    planes = pack_query_planes(quantized, layout)
    compressed = compress_query(client_backend, planes, layout, key)
    pack, records, challenges = engine.eval_round1(compressed, rng)
    converted = [client_convert(client_backend, ch, key) for ch in challenges]
    result_ct = engine.eval_finalize(pack, records, converted)
    result_plain = client_backend.decrypt(result_ct, key)
    t = engine.params.plain_modulus
    multi = engine.forest.model_kind == "xgboost" and engine.forest.num_classes > 2
    width = engine.forest.num_classes if multi else 1
    scores = [signed(int(result_plain.slots[i]), t) for i in range(width)]
    return scores, pack, quantized


def test_end_to_end_oracle_equivalence_and_sumpath_structure():
    rng = DeterministicRng(33)
    params = FheParams.default(512, 1 << 24)
    t = params.plain_modulus

    total = matches = 0
    collisions = []
    untraced_mismatches = []
    zero_count_violations = []
    false_slot_total = 0

    for fi, (trees, depth, classes) in enumerate(E2E_FORESTS):
        forest = make_random_forest(
            rng.spawn(f"forest{fi}"), trees, depth, num_classes=classes, num_features=6
        )
        engine = ServerEngine(forest, params=params, bitwidth=8, seed=300 + fi)
        client_backend = ReferenceBackend(params)
        key = client_backend.keygen(DeterministicRng(400 + fi))
        q = engine.forest

        for qi in range(100):
            row = {f.name: rng.randint(10**6) / 10**6 for f in q.features}
            scores, pack, quantized = run_white_box_query(
                engine, client_backend, key, row, engine.rng.spawn(f"q{qi}")
            )
            expected_class, expected_scores = oracle_for(engine, row)
            predicted = predict_from_scores(scores)
            total += 1

            # structure: decrypt the pack, compare zero set against the oracle
            truth = multiply_path_oracle(q, plain_comparison_bits(q, quantized))
            slot_zero = {}
            for idx, ct in enumerate(pack.ciphertexts):
                slots = np.asarray(client_backend.decrypt(ct, key).slots)
                for cid, (ct_idx, slot) in pack.slot_map.items():
                    if ct_idx == idx:
                        slot_zero[cid] = slots[slot] == 0
            members = engine.table.cluster_members()
            query_collisions = 0
            for cid, is_zero in slot_zero.items():
                cluster_true = bool(truth[(members[cid][0].tree_index, members[cid][0].leaf_index)])
                if not cluster_true:
                    false_slot_total += 1
                if is_zero and not cluster_true:
                    query_collisions += 1
                    collisions.append((fi, qi, cid))
                if not is_zero and cluster_true:
                    zero_count_violations.append((fi, qi, cid, "true path nonzero"))

            expected_zeros = sum(b.zero_count for b in pack.buckets)
            actual_zeros = sum(1 for z in slot_zero.values() if z)
            if actual_zeros != expected_zeros + query_collisions:
                zero_count_violations.append((fi, qi, actual_zeros, expected_zeros))

            if predicted == expected_class and scores == expected_scores:
                matches += 1
            elif query_collisions == 0:
                untraced_mismatches.append((fi, qi, scores, expected_scores))

    expected_collisions = false_slot_total / t
    ok = (
        matches / total >= 0.99
        and not untraced_mismatches
        and not zero_count_violations
        and expected_collisions < 0.1
    )
    report(
        "end-to-end oracle equivalence (10 forests x 100 queries, >=99%, collisions traced)",
        ok,
        f"{matches}/{total} exact, {len(collisions)} collisions "
        f"(expected {expected_collisions:.4f}), {len(untraced_mismatches)} untraced, "
        f"{len(zero_count_violations)} structure violations",
    )


def test_sumpath_zero_cipher_mults():
    rng = DeterministicRng(44)
    params = FheParams.default(512, 1 << 24)
    violations = []
    for fi in range(3):
        forest = make_random_forest(rng.spawn(f"f{fi}"), 10, 4, num_features=5)
        engine = ServerEngine(forest, params=params, bitwidth=8, seed=500 + fi)
        client_backend = ReferenceBackend(params)
        key = client_backend.keygen(DeterministicRng(600 + fi))
        q = engine.forest
        row = {f.name: rng.randint(10**6) / 10**6 for f in q.features}
        quantized = {
            f.name: quantize_to_grid(row[f.name], f.minimum, f.maximum, 8)
            for f in q.features
        }
        planes = decompress_query(
            engine.backend,
            compress_query(
                client_backend, pack_query_planes(quantized, engine.layout),
                engine.layout, key,
            ),
        )
        bits = batch_compare(engine.backend, planes, engine.plan, engine.layout)
        before = engine.ledger.snapshot()
        sum_path(engine.backend, q, bits, engine.table, rng.spawn(f"e{fi}"))
        delta = engine.ledger.delta(before)
        if delta["cipher_mults"] != 0:
            violations.append((fi, delta["cipher_mults"]))
    report(
        "SumPath structure (zero cipher-cipher mults during sum_path)",
        not violations,
        str(violations) if violations else "3/3 forests clean",
    )


# ---------------------------------------------------------------------------
# 5. BCC frequency invariance
# ---------------------------------------------------------------------------


def test_bcc_frequency_invariance_across_models():
    rng = DeterministicRng(55)
    params = FheParams.default(512, 1 << 22)
    # full trees of equal shape: both models share path/tree counts, hence
    # one profile
    model_a = make_random_forest(rng.spawn("a"), 8, 3, num_features=4, leaf_prob=0.0)
    model_b = make_random_forest(rng.spawn("b"), 8, 3, num_features=4, leaf_prob=0.0)
    engine_a = ServerEngine(model_a, params=params, bitwidth=8, seed=700)
    engine_b = ServerEngine(model_b, params=params, bitwidth=8, seed=701)
    assert [p.to_dict() for p in engine_a.profiles] == [
        p.to_dict() for p in engine_b.profiles
    ]

    class MeteredLoopback(LoopbackChannel):
        def __init__(self, engine):
            super().__init__(engine)
            self.challenge_sizes = []

        def request(self, frame):
            from veilboost.protocol import MSG_BCC_CHALLENGE, decode_frame

            response = super().request(frame)
            if decode_frame(response).msg_type == MSG_BCC_CHALLENGE:
                self.challenge_sizes.append(len(response))
            return response

    multisets = set()
    frame_sizes = set()
    transcripts = 0
    for engine, seed in ((engine_a, 800), (engine_b, 801)):
        channel = MeteredLoopback(engine)
        client = Client(channel, seed=seed)
        for qi in range(50):
            row = {f.name: rng.randint(10**6) / 10**6 for f in engine.forest.features}
            client.infer(row)
            multisets.add(tuple(sorted(client.last_challenge_counts)))
            transcripts += 1
        frame_sizes.update(channel.challenge_sizes)
    n = params.slot_count
    ok = (
        transcripts == 100
        and len(multisets) == 1
        and multisets == {((n // 2, n // 2),)}
        and len(frame_sizes) == 1  # challenge bytes identical across models
    )
    report(
        "BCC frequency invariance (2 models x 50 queries, identical class-count multisets)",
        ok,
        f"{transcripts} transcripts, multisets {multisets}, "
        f"challenge frame sizes {frame_sizes}",
    )


# ---------------------------------------------------------------------------
# 6. Shuffle uniformity
# ---------------------------------------------------------------------------


def test_shuffle_uniformity_chi_square():
    n, trials = 8, 100_000
    rng = DeterministicRng(66)
    hits = np.zeros((n, n), dtype=np.int64)
    guard_violations = 0
    for trial in range(trials):
        rounds = draw_shuffle_rounds(n, rng)
        for s, (r1, r2) in enumerate(rounds):
            if (r1 + r2) % (1 << (s + 1)) != 0:
                guard_violations += 1
            if trial % 1000 == 0:  # explicit double-write simulation
                odd = {i for i in range(n) if (i >> s) & 1}
                one = {(i - r1) % n for i in odd}
                two = {(i - r2) % n for i in set(range(n)) - odd}
                if one & two or (one | two) != set(range(n)):
                    guard_violations += 1
        perm = compose_body_permutation(n, rounds)
        hits[np.arange(n), perm] += 1

    worst_p = 1.0
    for element in range(n):
        _, p_value = scipy.stats.chisquare(hits[element])
        worst_p = min(worst_p, p_value)
    ok = worst_p > 0.01 and guard_violations == 0
    report(
        "shuffle uniformity (n=8, 1e5 shuffles, chi-square p > 0.01, collision guard)",
        ok,
        f"worst p={worst_p:.4f}, guard violations {guard_violations}",
    )


def test_shuffle_homomorphic_matches_replay():
    # the statistical test samples permutations; this pins them to the
    # homomorphic path
    params = FheParams.default(64)
    backend = ReferenceBackend(params)
    key = backend.keygen(DeterministicRng(3))
    rng = DeterministicRng(67)
    bad = 0
    from veilboost.bcc import FrequencyProfile, replicate, blind_shuffle

    for trial in range(50):
        body = [rng.nonzero_mod(params.plain_modulus) for _ in range(8)]
        ct = replicate(backend, backend.encrypt(backend.encode(body), key), 8)
        profile = FrequencyProfile(8, 4, 4, 28, 28)
        shuffled, record = blind_shuffle(
            backend, ct, profile, rng.spawn(f"t{trial}"), 8, ()
        )
        slots = backend.decode(backend.decrypt(shuffled, key))
        bad += any(slots[record.position_of(i)] != body[i] for i in range(8))
    report(
        "shuffle uniformity companion (homomorphic shuffle == recorded permutation, 50 trials)",
        bad == 0,
        f"{bad} mismatches",
    )


# ---------------------------------------------------------------------------
# 7. Shuffle cost
# ---------------------------------------------------------------------------


def test_shuffle_rotation_cost_bound():
    rng = DeterministicRng(77)
    failures = []
    for slot_count, zeros, randoms in ((512, 10, 50), (1024, 30, 100), (512, 3, 3)):
        params = FheParams.default(slot_count, 1 << 22)
        backend = ReferenceBackend(params)
        key = backend.keygen(DeterministicRng(4))
        profile = profile_for_counts(zeros, randoms, slot_count)
        values = [0] * zeros + [rng.nonzero_mod(params.plain_modulus) for _ in range(randoms)]
        ct = backend.encrypt(backend.encode(values), key)
        before = backend.ledger.snapshot()
        run_challenge(backend, ct, zeros + randoms, zeros, profile, rng.spawn("c"))
        rotations = backend.ledger.delta(before)["rotations"]
        n = profile.body_length
        bound = 2 * (n.bit_length() - 1) + (slot_count // n).bit_length() - 1 + 4
        if rotations > bound:
            failures.append((slot_count, n, rotations, bound))
    report(
        "shuffle cost (rotations <= 2 log2(n) + log2(N/n) + 4)",
        not failures,
        str(failures) if failures else "3/3 configurations within bound",
    )


# ---------------------------------------------------------------------------
# 8. Compression
# ---------------------------------------------------------------------------


def test_compression_roundtrip_and_wire_ratio():
    params = FheParams.default(256, 1 << 20)
    backend = ReferenceBackend(params)
    key = backend.keygen(DeterministicRng(5))
    rng = DeterministicRng(88)
    layout = QueryLayout.build(
        [(f"f{i}", 0.0, 1.0) for i in range(4)], 3, 4, params
    )
    failures = 0
    compressed_bytes = uncompressed_bytes = 0
    for qi in range(1000):
        values = {f"f{i}": rng.randint(16) for i in range(4)}
        planes = pack_query_planes(values, layout)
        compressed = compress_query(backend, planes, layout, key)
        if qi == 0:
            uncompressed_bytes = sum(
                len(backend.serialize_ciphertext(backend.encrypt(
                    backend.encode(list(p)), key))) for p in planes
            )
            compressed_bytes = sum(
                len(backend.serialize_ciphertext(ct)) for ct in compressed.ciphertexts
            )
        restored = decompress_query(backend, compressed)
        for ct, plane in zip(restored, planes):
            if backend.decode(backend.decrypt(ct, key)) != list(plane):
                failures += 1
    ratio = compressed_bytes / uncompressed_bytes
    limit = 1 / layout.repetitions + 0.05
    ok = failures == 0 and ratio <= limit
    report(
        "compression (1000 round-trips exact; wire ratio <= 1/R + 5%)",
        ok,
        f"{failures} slot mismatches, ratio {ratio:.3f} vs limit {limit:.3f}",
    )


# ---------------------------------------------------------------------------
# 9. Clustering
# ---------------------------------------------------------------------------


# tight threshold groups, with centers > intensity apart per feature so a
# merge can only gather one group's members
_GROUP_CENTERS = [
    ("f0", 0.10), ("f0", 0.40), ("f0", 0.70), ("f0", 0.95),
    ("f1", 0.15), ("f1", 0.45), ("f1", 0.75),
    ("f2", 0.20), ("f2", 0.50), ("f2", 0.85),
]


def _near_duplicate_forest(per_group=10):
    """100 stumps whose thresholds form 10 tight, well-separated groups."""
    features = tuple(FeatureRange(f"f{i}", 0.0, 1.0) for i in range(3))
    trees = []
    for g, (feature, center) in enumerate(_GROUP_CENTERS):
        for k in range(per_group):
            threshold = center + (k - per_group / 2) * 0.0008
            trees.append(
                Tree(
                    (Split(feature, threshold, -1, -2),),
                    (LeafNode(-0.5 - 0.01 * g), LeafNode(0.5 + 0.01 * g)),
                )
            )
    return Forest("xgboost", 2, features, tuple(trees))


def test_clustering_gate_reduction_and_rotation_scaling():
    rng = DeterministicRng(99)
    forest = _near_duplicate_forest()

    # validation rows kept away from the group neighbourhoods so committed
    # merges cannot flip a label
    rows = []
    while len(rows) < 100:
        row = {f"f{i}": rng.randint(10**6) / 10**6 for i in range(3)}
        if all(
            abs(row[f] - c) > 0.02 for f, c in _GROUP_CENTERS
        ):
            rows.append(row)
    labels = [predict_from_scores(eval_scores(forest, row)) for row in rows]

    def validator(candidate) -> float:
        hits = sum(
            predict_from_scores(eval_scores(candidate, row)) == label
            for row, label in zip(rows, labels)
        )
        return hits / len(rows)

    plan_before = len(plan_from_clusters(forest))
    clustered, cluster_report = cluster_nodes(forest, ClusterConfig(0.2), validator)
    plan_after = len(plan_from_clusters(clustered))

    gate_ok = cluster_report.accuracy_after >= cluster_report.accuracy_before
    reduction_ok = plan_after < plan_before

    # (c) comparison rotations scale with plan size, not node count
    params = FheParams.default(256, 1 << 20)
    q_clustered = quantize(clustered, 8)
    native = Forest(
        "xgboost", 2, forest.features,
        tuple(
            Tree((Split(f, t, -1, -2),), (LeafNode(-0.5), LeafNode(0.5)))
            for f, t in distinct_pairs(q_clustered)
        ),
        bitwidth=8, score_scale=4096,
    )

    def comparison_rotations(target):
        backend = ReferenceBackend(params)
        key = backend.keygen(DeterministicRng(6))
        plan = plan_from_clusters(target)
        layout = QueryLayout.build(
            [(f.name, f.minimum, f.maximum) for f in target.features],
            plan.max_per_feature(), 8, params,
        )
        plan = plan.with_slots(layout)
        values = {f.name: 128 for f in target.features}
        planes = [
            backend.encrypt(backend.encode(list(p)), key)
            for p in pack_query_planes(values, layout)
        ]
        before = backend.ledger.snapshot()
        batch_compare(backend, planes, plan, layout)
        return backend.ledger.delta(before)["rotations"], len(plan)

    rot_clustered, plan_c = comparison_rotations(q_clustered)
    rot_native, plan_n = comparison_rotations(native)
    scaling_ok = plan_c == plan_n and rot_clustered == rot_native == plan_c

    report(
        "clustering (gate holds, plan strictly shrinks, rotations scale with plan)",
        gate_ok and reduction_ok and scaling_ok,
        f"accuracy {cluster_report.accuracy_before:.3f}->{cluster_report.accuracy_after:.3f}, "
        f"plan {plan_before}->{plan_after}, rotations {rot_clustered}=={rot_native} "
        f"for {plan_c} entries vs {len(forest.trees)}-node forest",
    )


# ---------------------------------------------------------------------------
# 10. Protocol
# ---------------------------------------------------------------------------


def test_protocol_exchanges_transports_and_server_blindness():
    rng = DeterministicRng(110)
    params = FheParams.default(512, 1 << 22)
    forest = make_random_forest(rng, 6, 3, num_classes=3, num_features=3)
    rows = [
        {f.name: rng.randint(10**6) / 10**6 for f in forest.features} for _ in range(5)
    ]

    loop_engine = ServerEngine(forest, params=params, bitwidth=8, seed=900)
    loop_client = Client(LoopbackChannel(loop_engine), seed=901)
    loop_results = [loop_client.infer(row) for row in rows]
    transcript_ok = loop_client.transcript == [
        ("send", "QUERY"), ("recv", "BCC_CHALLENGE"),
        ("send", "BCC_RESPONSE"), ("recv", "RESULT"),
    ]

    tcp_engine = ServerEngine(forest, params=params, bitwidth=8, seed=900)
    server = TcpServer(tcp_engine).start()
    try:
        channel = TcpChannel(*server.address)
        tcp_client = Client(channel, seed=901)
        tcp_results = [tcp_client.infer(row) for row in rows]
        channel.close()
    finally:
        server.stop()

    same = all(
        a.predicted_class == b.predicted_class and a.class_scores == b.class_scores
        for a, b in zip(loop_results, tcp_results)
    )
    blind = loop_engine.decrypt_count == 0 and tcp_engine.decrypt_count == 0
    report(
        "protocol (3 exchanges; TCP == in-process; zero server decrypts)",
        transcript_ok and same and blind,
        f"transcript_ok={transcript_ok}, transports_match={same}, "
        f"decrypts={loop_engine.decrypt_count}/{tcp_engine.decrypt_count}",
    )


# ---------------------------------------------------------------------------
# 11. AdaBoost mode
# ---------------------------------------------------------------------------


def test_adaboost_exact_weighted_scores():
    rng = DeterministicRng(120)
    params = FheParams.default(512, 1 << 24)
    failures = []
    for fi in range(5):
        forest = make_random_forest(
            rng.spawn(f"ada{fi}"), 7, 3, model_kind="adaboost", num_features=3
        )
        engine = ServerEngine(forest, params=params, bitwidth=8, seed=1000 + fi)
        client = Client(LoopbackChannel(engine), seed=1100 + fi)
        q = engine.forest
        for qi in range(20):
            row = {f.name: rng.randint(10**6) / 10**6 for f in q.features}
            result = client.infer(row)
            quantized = {
                f.name: quantize_to_grid(row[f.name], f.minimum, f.maximum, 8)
                for f in q.features
            }
            truth = multiply_path_oracle(q, plain_comparison_bits(q, quantized))
            expected = sum(
                int(q.trees[t].leaves[leaf].score)
                for (t, leaf), taken in truth.items()
                if taken
            )
            if result.class_scores[0] != expected:
                failures.append((fi, qi, result.class_scores[0], expected))
    report(
        "AdaBoost mode (score == sum of signed tree weights over true paths, exact)",
        not failures,
        str(failures[:3]) if failures else "5 forests x 20 queries exact",
    )
