"""Revocation tree: structure, incremental maintenance, parameters, formats."""

import random

import pytest

import oracles
from krev import keccak
from krev.errors import (
    BadBlockLength,
    DuplicateSerial,
    EmptyChildren,
    FormatError,
    Infeasible,
    UnknownSerial,
)
from krev.tree import (
    RevocationTree,
    choose_k,
    decode_delta,
    depth_for,
    deserialize_tree,
    empty_tree_digest,
    encode_delta,
    parent_digest,
    path_for_slot,
    serialize_tree,
    slot_for_path,
    tree_from_serials,
    tree_size_bits,
)


def serial(i: int) -> bytes:
    return i.to_bytes(4, "big") + bytes(24)


def build(k: int, count: int, expiry: int = 10**9) -> RevocationTree:
    tree = RevocationTree(k)
    for i in range(count):
        tree.insert(serial(i), expiry)
    return tree


def assert_invariants(tree: RevocationTree):
    k, depth, s = tree.k, tree.depth, tree.size
    assert s <= k**depth
    assert len(tree.index) == s
    for value, slot in tree.index.items():
        leaf = tree.leaves[slot]
        assert leaf.serial == value
        assert leaf.digest == keccak.hash_bytes(value)
    # left-to-right fill: walking the leaves through paths gives slots 0..s-1
    for slot in range(s):
        node = tree.root
        for digit in path_for_slot(slot, k, depth):
            assert digit < len(node.children)
            node = node.children[digit]
        assert node is tree.leaves[slot]
    # recomputing every internal digest from leaf digests reproduces the root
    expected_root = oracles.batch_root_digest(
        [leaf.serial for leaf in tree.leaves], k, depth, tree.l_bits
    )
    assert tree.root_digest == expected_root
    # child bookkeeping
    for _, node in tree.iter_nodes():
        if node.height > 0:
            assert len(node.child_blocks) == len(node.children)
            assert 0 <= len(node.children) <= k
            assert (node.chain is not None) == (node.leaf_count < k**node.height)


class TestPaths:
    @pytest.mark.parametrize("k,depth", [(2, 1), (2, 5), (3, 4), (5, 3), (64, 2)])
    def test_round_trip(self, k, depth):
        rng = random.Random(k * depth)
        for _ in range(50):
            slot = rng.randrange(k**depth)
            digits = path_for_slot(slot, k, depth)
            assert len(digits) == depth and all(0 <= d < k for d in digits)
            assert slot_for_path(digits, k) == slot

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            path_for_slot(8, 2, 3)
        with pytest.raises(ValueError):
            slot_for_path((2,), 2)


class TestParentDigest:
    def test_single_child_untruncated(self):
        block = bytes(range(28))
        assert parent_digest([block]) == block

    def test_five_children_bit_budget(self):
        # 224 = 45 + 45 + 45 + 45 + 44
        rng = random.Random(1)
        blocks = [rng.randbytes(28) for _ in range(5)]
        digest = parent_digest(blocks)
        bits = list(keccak.bytes_to_bits(digest))
        pos = 0
        for i, blk in enumerate(blocks):
            take = 45 if i < 4 else 44
            blk_bits = list(keccak.bytes_to_bits(blk))[:take]
            assert bits[pos : pos + take] == blk_bits
            pos += take
        assert pos == 224

    def test_two_children_even_split(self):
        b1, b2 = bytes([0xAB] * 28), bytes([0x5C] * 28)
        digest = parent_digest([b1, b2])
        assert digest[:14] == b1[:14]
        assert digest[14:] == b2[:14]

    def test_errors(self):
        with pytest.raises(EmptyChildren):
            parent_digest([])
        with pytest.raises(BadBlockLength):
            parent_digest([bytes(27)])
        with pytest.raises(ValueError):
            parent_digest([bytes(28)] * 3, k=2)


class TestInsert:
    def test_first_insert_shape(self):
        tree = RevocationTree(5)
        report = tree.insert(serial(0), 100)
        assert tree.depth == 1 and tree.size == 1
        assert len(tree.root.children) == 1
        # root digest = fold of the single duplex output over the leaf digest
        state = keccak.duplex_init()
        block = state.absorb_bytes(keccak.hash_bytes(serial(0)))
        assert tree.root_digest == keccak.fold_outputs([block], 224)
        assert report.version == 1
        assert_invariants(tree)

    def test_duplicate_rejected(self):
        tree = build(3, 4)
        with pytest.raises(DuplicateSerial):
            tree.insert(serial(2), 50)

    def test_depth_growth_at_capacity(self):
        tree = build(5, 5)
        assert tree.depth == 1 and tree.size == 5
        report = tree.insert(serial(5), 100)
        assert report.full_reconstruct
        assert tree.depth == 2 and tree.size == 6
        assert len(tree.root.children) == 2
        assert_invariants(tree)

    def test_changed_set_minimal_without_growth(self):
        tree = build(3, 10)
        depth = tree.depth
        report = tree.insert(serial(10), 100)
        assert not report.full_reconstruct
        assert len(report.changed) <= depth + 1
        digits = path_for_slot(10, 3, depth)
        expected_paths = {digits[:i] for i in range(depth + 1)}
        assert {path for path, _, _ in report.changed} == expected_paths

    @pytest.mark.parametrize("k", [2, 3, 5, 8])
    def test_incremental_matches_batch(self, k):
        rng = random.Random(k)
        for _ in range(8):
            count = rng.randrange(1, 120)
            values = [rng.randbytes(28) for _ in range(count)]
            tree = RevocationTree(k)
            for v in values:
                tree.insert(v, 10**9)
            assert tree.root_digest == oracles.batch_root_digest(values, k)
            assert_invariants(tree)

    def test_bulk_build_matches_incremental(self):
        values = [serial(i) for i in range(77)]
        inc = RevocationTree(4)
        for v in values:
            inc.insert(v, 123)
        bulk = tree_from_serials([(v, 123) for v in values], 4)
        assert bulk.root_digest == inc.root_digest
        assert bulk.version == inc.version
        assert bulk.depth == inc.depth
        assert serialize_tree(bulk) == serialize_tree(inc)


class TestSearch:
    def test_full_tree_bundle_shape(self):
        tree = build(5, 25)
        assert tree.depth == 2
        bundle = tree.search(serial(13))
        assert bundle is not None
        assert len(bundle.levels) == 2
        assert len(bundle.levels[0]) == 5 and len(bundle.levels[1]) == 5
        assert bundle.root_digest == tree.root_digest

    def test_absent_serial(self):
        tree = build(5, 25)
        assert tree.search(b"nope" + bytes(24)) is None

    def test_partial_tree_bundle_rebuilds_root(self):
        tree = build(3, 14)
        bundle = tree.search(serial(13))
        # fold each level with a fresh chain; must land on the root digest
        child = keccak.hash_bytes(serial(13))
        for lvl in range(tree.depth - 1, -1, -1):
            entries = bundle.levels[lvl]
            assert [i for i, _ in entries] == list(range(len(entries)))
            digests = [d for _, d in entries]
            assert digests[bundle.digits[lvl]] == child
            child = oracles.node_digest(digests)
        assert child == bundle.root_digest == tree.root_digest


class TestDelete:
    def test_delete_only_leaf_of_parent_removes_parent(self):
        tree = build(3, 10)  # depth 3; slot 9 sits alone under its parent
        internal_before = sum(1 for _, n in tree.iter_nodes() if n.height > 0)
        tree.delete(serial(9))
        internal_after = sum(1 for _, n in tree.iter_nodes() if n.height > 0)
        assert tree.size == 9
        assert internal_after < internal_before
        assert_invariants(tree)

    def test_delete_to_empty(self):
        tree = build(2, 1)
        tree.delete(serial(0))
        assert tree.size == 0 and tree.depth == 1
        assert tree.root_digest == empty_tree_digest()
        assert len(tree.root.children) == 0

    def test_unknown_serial(self):
        tree = build(2, 3)
        with pytest.raises(UnknownSerial):
            tree.delete(b"missing-missing-missing-miss")

    def test_randomized_delete_oracle(self):
        rng = random.Random(99)
        values = [rng.randbytes(28) for _ in range(60)]
        tree = RevocationTree(3)
        for v in values:
            tree.insert(v, 10**9)
        alive = list(values)
        for _ in range(25):
            victim = alive.pop(rng.randrange(len(alive)))
            tree.delete(victim)
            assert tree.search(victim) is None
            assert {leaf.serial for leaf in tree.leaves} == set(alive)
            assert tree.root_digest == oracles.batch_root_digest(
                [leaf.serial for leaf in tree.leaves], 3
            )
        assert_invariants(tree)


class TestReconstruct:
    def test_idempotent_on_compact_tree(self):
        tree = build(3, 14)
        root_before = tree.root_digest
        index_before = dict(tree.index)
        tree.reconstruct()
        assert tree.root_digest == root_before
        assert tree.index == index_before

    def test_depth_shrinks_after_delete(self):
        tree = RevocationTree(2)
        for name in (b"a", b"b", b"c"):
            tree.insert(name.ljust(28, b"\0"), 10)
        assert tree.depth == 2
        tree.delete(b"b".ljust(28, b"\0"))
        assert tree.depth == 1
        assert [leaf.serial[:1] for leaf in tree.leaves] == [b"a", b"c"]
        assert_invariants(tree)

    def test_random_trees_match_scratch_build(self):
        rng = random.Random(123)
        for _ in range(100):
            k = rng.choice([2, 3, 5, 8])
            values = [rng.randbytes(28) for _ in range(rng.randrange(1, 80))]
            tree = tree_from_serials([(v, 5) for v in values], k)
            tree.reconstruct()
            assert tree.root_digest == oracles.batch_root_digest(values, k)


class TestExpireSweep:
    def test_noop_when_nothing_expired(self):
        tree = build(3, 9, expiry=1000)
        version = tree.version
        report = tree.expire_sweep(now=500)
        assert report.version == version
        assert not report.tombstoned and not report.full_reconstruct

    def test_full_sibling_set_triggers_rebuild(self):
        tree = RevocationTree(3)
        for i in range(3):
            tree.insert(serial(i), expiry=10)  # one full parent
        for i in range(3, 7):
            tree.insert(serial(i), expiry=10_000)
        root_before = tree.root_digest
        report = tree.expire_sweep(now=100)
        assert report.full_reconstruct
        assert set(report.tombstoned) == {serial(i) for i in range(3)}
        assert tree.size == 4
        assert tree.root_digest != root_before
        for i in range(3):
            assert tree.search(serial(i)) is None
        assert_invariants(tree)

    def test_partial_expiry_tombstones_only(self):
        tree = RevocationTree(3)
        tree.insert(serial(0), expiry=10)
        tree.insert(serial(1), expiry=10_000)
        tree.insert(serial(2), expiry=10_000)
        root_before = tree.root_digest
        version_before = tree.version
        report = tree.expire_sweep(now=100)
        assert not report.full_reconstruct
        assert report.tombstoned == (serial(0),)
        assert tree.root_digest == root_before  # digests stable until rebuild
        assert tree.version == version_before + 1
        assert tree.search(serial(0)) is not None  # still present in the digest
        assert tree.leaf_for(serial(0)).tombstoned
        # second sweep with no new expiries is a no-op
        report2 = tree.expire_sweep(now=100)
        assert report2.version == tree.version and not report2.tombstoned


class TestParameters:
    def test_choose_k_example(self):
        assert choose_k(135, 10_000_000) == 3
        assert depth_for(135, 3) == 5

    def test_choose_k_tie_breaks_small(self):
        assert choose_k(1, 10**9) == 2

    def test_choose_k_infeasible(self):
        with pytest.raises(Infeasible):
            choose_k(135, 0)

    def test_choose_k_respects_memory(self):
        for s, mem in [(10, 10**6), (1000, 10**8), (50, 224 * 7)]:
            try:
                k = choose_k(s, mem)
            except Infeasible:
                continue
            assert tree_size_bits(k, depth_for(s, k)) <= mem
            assert k ** depth_for(s, k) >= s

    def test_choose_k_matches_brute_force(self):
        rng = random.Random(7)
        for _ in range(200):
            s = rng.randrange(1, 10**6)
            memory = rng.randrange(1, 10**9)
            expected = oracles.brute_force_choose_k(s, memory)
            if expected is None:
                with pytest.raises(Infeasible):
                    choose_k(s, memory)
            else:
                assert choose_k(s, memory) == expected

    def test_tree_size_examples(self):
        assert tree_size_bits(5, 2) == 224 * 31
        assert tree_size_bits(2, 1) == 224 * 3

    def test_tree_size_summation_oracle(self):
        for k in range(2, 11):
            for depth in range(1, 7):
                assert tree_size_bits(k, depth) == 224 * sum(k**i for i in range(depth + 1))


class TestSerialization:
    def test_round_trip(self):
        tree = build(5, 17)
        tree.expire_sweep(now=0)
        blob = serialize_tree(tree)
        copy = deserialize_tree(blob)
        assert copy.root_digest == tree.root_digest
        assert copy.version == tree.version
        assert copy.k == tree.k and copy.depth == tree.depth
        assert copy.index == tree.index
        assert serialize_tree(copy) == blob

    def test_empty_tree_round_trip(self):
        tree = RevocationTree(2)
        copy = deserialize_tree(serialize_tree(tree))
        assert copy.size == 0 and copy.root_digest == empty_tree_digest()

    def test_corrupt_leaf_detected(self):
        blob = bytearray(serialize_tree(build(3, 9)))
        blob[40] ^= 1  # inside the first leaf serial
        with pytest.raises(FormatError):
            deserialize_tree(bytes(blob))

    def test_truncation_detected(self):
        blob = serialize_tree(build(3, 9))
        with pytest.raises(FormatError):
            deserialize_tree(blob[:-1])
        with pytest.raises(FormatError):
            deserialize_tree(blob[:10])

    def test_bad_magic(self):
        blob = bytearray(serialize_tree(build(2, 2)))
        blob[0] ^= 0xFF
        with pytest.raises(FormatError):
            deserialize_tree(bytes(blob))


class TestDeltaFormat:
    def test_round_trip(self):
        tree = build(3, 5)
        report = tree.insert(serial(5), 77)
        blob = encode_delta(report.version, report.changed)
        version, changed = decode_delta(blob)
        assert version == report.version
        assert tuple(changed) == report.changed

    def test_truncation(self):
        tree = build(3, 5)
        report = tree.insert(serial(6), 77)
        blob = encode_delta(report.version, report.changed)
        with pytest.raises(FormatError):
            decode_delta(blob[:-3])
