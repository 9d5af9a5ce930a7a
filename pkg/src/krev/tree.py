"""Dynamic perfect k-ary revocation tree with incremental duplex hashing.

Leaves hold 224-bit digests of revoked serials in revocation order and fill
each level strictly left to right. Every internal node digests its children
through one chained duplex: child digests are absorbed one duplexing call
each, and the node's own digest is the truncate-and-concatenate fold of the
per-child output blocks. While a node's subtree is still filling, the node
retains the duplex state advanced past its finished children, so appending
the next child costs a single permutation.

Mutations (insert/delete/reconstruct/expire_sweep) follow a single-writer
contract; lookups may run concurrently against a snapshot identified by
``version``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import keccak
from ._backend import absorb_block_batch
from .errors import (
    DuplicateSerial,
    FormatError,
    Infeasible,
    UnknownSerial,
)

DEFAULT_RSU_MEMORY_BITS = 10_000_000
TREE_MAGIC = b"KREV"
TREE_FORMAT_VERSION = 1

LEAF = "leaf"
INTERNAL = "internal"


@dataclass(frozen=True)
class SerialNumber:
    """A revoked certificate/pseudonym serial and its expiry timestamp."""

    value: bytes
    expiry: int


@lru_cache(maxsize=1)
def empty_tree_digest() -> bytes:
    # Root digest of a 0-leaf tree; keeps every operation total.
    return keccak.hash_bytes(b"")


def path_for_slot(slot: int, k: int, depth: int) -> tuple[int, ...]:
    """Base-k digits of a leaf slot, most significant (root-side) first."""
    if not 0 <= slot < k**depth:
        raise ValueError(f"slot {slot} out of range for k={k}, depth={depth}")
    digits = []
    for _ in range(depth):
        digits.append(slot % k)
        slot //= k
    return tuple(reversed(digits))


def slot_for_path(digits, k: int) -> int:
    slot = 0
    for d in digits:
        if not 0 <= d < k:
            raise ValueError(f"digit {d} out of range for k={k}")
        slot = slot * k + d
    return slot


def parent_digest(child_outputs, *, l_bits: int = keccak.DEFAULT_L_BITS,
                  n_bits: int = keccak.N_BITS, k: int | None = None) -> bytes:
    """Digest of an internal node from its children's l-bit output blocks.

    Each of the m blocks is truncated to its first n//m bits (the first
    n%m children keep one extra bit) and the pieces are concatenated in
    child order, always totalling exactly n bits.
    """
    if k is not None and len(child_outputs) > k:
        raise ValueError(f"{len(child_outputs)} children exceed branching factor {k}")
    return keccak.fold_outputs(child_outputs, l_bits, n_bits)


def depth_for(s: int, k: int) -> int:
    """Smallest depth with k**depth >= s, never below 1."""
    depth, cap = 1, k
    while cap < s:
        cap *= k
        depth += 1
    return depth


def tree_size_bits(k: int, depth: int, n_bits: int = keccak.N_BITS) -> int:
    """Maximum total digest storage: n * (k**(depth+1) - 1) / (k - 1)."""
    if k < 2 or depth < 1:
        raise ValueError("need k >= 2 and depth >= 1")
    return n_bits * (k ** (depth + 1) - 1) // (k - 1)


def proof_path_bits(k: int, depth: int, n_bits: int = keccak.N_BITS) -> int:
    # Worst-case sibling payload plus the root digest: n * (k*depth + 1).
    return n_bits * (k * depth + 1)


def choose_k(s: int, memory_bound_bits: int, n_bits: int = keccak.N_BITS) -> int:
    """Branching factor in [2, 64] minimizing worst-case proof size.

    Minimizes n*(k*depth+1) with depth = ceil(log_k s), subject to the full
    tree fitting in ``memory_bound_bits``; ties break toward smaller k.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    best = None
    for k in range(2, 65):
        depth = depth_for(s, k)
        if tree_size_bits(k, depth, n_bits) > memory_bound_bits:
            continue
        cost = proof_path_bits(k, depth, n_bits)
        if best is None or cost < best[0]:
            best = (cost, k)
    if best is None:
        raise Infeasible(f"no k in [2, 64] fits s={s} within {memory_bound_bits} bits")
    return best[1]


class TreeNode:
    __slots__ = (
        "height", "digest", "children", "chain", "child_blocks",
        "leaf_count", "serial", "expiry", "tombstoned",
    )

    def __init__(self, height: int, digest: bytes = b""):
        self.height = height
        self.digest = digest
        self.children: list[TreeNode] = []
        self.chain: keccak.DuplexState | None = None
        self.child_blocks: list[bytes] = []
        self.leaf_count = 0
        self.serial: bytes | None = None
        self.expiry = 0
        self.tombstoned = False

    @property
    def kind(self) -> str:
        return LEAF if self.height == 0 else INTERNAL


@dataclass(frozen=True)
class MutationReport:
    """Which nodes changed, for delta broadcast."""

    version: int
    changed: tuple = ()  # (path digits, kind, digest) triples, root side first
    full_reconstruct: bool = False
    tombstoned: tuple = ()


@dataclass(frozen=True)
class PathBundle:
    """Search result: the root-to-leaf route with all present siblings."""

    k: int
    depth: int
    n_bits: int
    l_bits: int
    root_digest: bytes
    digits: tuple
    levels: tuple  # per level root->leaf: tuple of (child index, digest)


class RevocationTree:
    """Perfect k-ary hash tree over revoked serials, filled left to right."""

    def __init__(self, k: int, l_bits: int = keccak.DEFAULT_L_BITS):
        if k < 2:
            raise ValueError("k must be >= 2")
        if not keccak.N_BITS <= l_bits < keccak.R_BITS:
            raise ValueError(f"l_bits must be in [{keccak.N_BITS}, {keccak.R_BITS - 1}]")
        self.k = k
        self.l_bits = l_bits
        self.depth = 1
        self.version = 0
        self.leaves: list[TreeNode] = []
        self.index: dict[bytes, int] = {}
        self.root = self._fresh_internal(1)

    # -- basic accessors ---------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.leaves)

    @property
    def root_digest(self) -> bytes:
        return self.root.digest

    def contains(self, serial_value: bytes) -> bool:
        return bytes(serial_value) in self.index

    def leaf_for(self, serial_value: bytes) -> TreeNode | None:
        slot = self.index.get(bytes(serial_value))
        return None if slot is None else self.leaves[slot]

    def serials(self) -> list[SerialNumber]:
        return [SerialNumber(leaf.serial, leaf.expiry) for leaf in self.leaves]

    def _fresh_internal(self, height: int) -> TreeNode:
        node = TreeNode(height, empty_tree_digest())
        node.chain = keccak.duplex_init(self.l_bits)
        return node

    def _fold(self, blocks) -> bytes:
        return parent_digest(blocks, l_bits=self.l_bits, k=self.k)

    # -- mutations ---------------------------------------------------------

    def insert(self, serial_value: bytes, expiry: int) -> MutationReport:
        """Append one revoked serial as the next leaf.

        Advances the target parent's retained duplex by exactly one call;
        ancestors recompute their in-progress child block on a copy. Grows
        a depth level (with a full rebuild) only when the tree is full.
        """
        serial_value = bytes(serial_value)
        if not serial_value:
            raise ValueError("serial must be non-empty")
        if serial_value in self.index:
            raise DuplicateSerial(serial_value.hex())
        grew = False
        if self.size == self.k**self.depth:
            self._rebuild(self.leaves, self.depth + 1)
            grew = True

        slot = self.size
        digits = path_for_slot(slot, self.k, self.depth)
        leaf = TreeNode(0, keccak.hash_bytes(serial_value))
        leaf.serial = serial_value
        leaf.expiry = int(expiry)
        leaf.leaf_count = 1

        path_nodes = [self.root]
        cur = self.root
        for dg in digits[:-1]:
            if dg == len(cur.children):
                child = self._fresh_internal(cur.height - 1)
                cur.children.append(child)
            else:
                assert dg == len(cur.children) - 1, "insert path must be the right spine"
                child = cur.children[dg]
            path_nodes.append(child)
            cur = child
        cur.children.append(leaf)
        self.leaves.append(leaf)
        self.index[serial_value] = slot

        changed = [(digits, LEAF, leaf.digest)]
        child = leaf
        for node in reversed(path_nodes):
            node.leaf_count += 1
            complete = child.height == 0 or child.leaf_count == self.k**child.height
            if complete:
                block = node.chain.absorb_bytes(child.digest)
                if child.height > 0:
                    child.chain = None
            else:
                block = node.chain.copy().absorb_bytes(child.digest)
            if len(node.child_blocks) < len(node.children):
                node.child_blocks.append(block)
            else:
                node.child_blocks[-1] = block
            node.digest = self._fold(node.child_blocks)
            changed.append((digits[: self.depth - node.height], INTERNAL, node.digest))
            child = node
        if self.root.leaf_count == self.k**self.depth:
            self.root.chain = None

        self.version += 1
        return MutationReport(
            self.version, tuple(reversed(changed)), full_reconstruct=grew
        )

    def delete(self, serial_value: bytes) -> MutationReport:
        """Remove one serial; childless ancestors vanish in the rebuild."""
        serial_value = bytes(serial_value)
        slot = self.index.get(serial_value)
        if slot is None:
            raise UnknownSerial(serial_value.hex())
        survivors = self.leaves[:slot] + self.leaves[slot + 1 :]
        self._rebuild(survivors)
        self.version += 1
        return MutationReport(
            self.version, (((), INTERNAL, self.root.digest),), full_reconstruct=True
        )

    def reconstruct(self) -> MutationReport:
        """Compact leaves, re-derive the minimal depth, rebuild bottom-up."""
        self._rebuild(self.leaves)
        self.version += 1
        return MutationReport(
            self.version, (((), INTERNAL, self.root.digest),), full_reconstruct=True
        )

    def expire_sweep(self, now: int) -> MutationReport:
        """Tombstone expired leaves; rebuild only when a whole sibling set expired."""
        expired = [leaf for leaf in self.leaves if leaf.expiry < now]
        if not expired:
            return MutationReport(self.version)
        trigger = False
        for start in range(0, self.size, self.k):
            group = self.leaves[start : start + self.k]
            if group and all(leaf.expiry < now for leaf in group):
                trigger = True
                break
        if trigger:
            survivors = [leaf for leaf in self.leaves if leaf.expiry >= now]
            removed = [leaf.serial for leaf in self.leaves if leaf.expiry < now]
            self._rebuild(survivors)
            self.version += 1
            return MutationReport(
                self.version,
                (((), INTERNAL, self.root.digest),),
                full_reconstruct=True,
                tombstoned=tuple(removed),
            )
        fresh = [leaf.serial for leaf in expired if not leaf.tombstoned]
        if not fresh:
            return MutationReport(self.version)
        for leaf in expired:
            leaf.tombstoned = True
        self.version += 1
        return MutationReport(self.version, tombstoned=tuple(fresh))

    # -- lookups -----------------------------------------------------------

    def search(self, serial_value: bytes) -> PathBundle | None:
        """Route from root to the serial's leaf plus all present siblings.

        Resolves the leaf through the serial index, not tree traversal.
        Returns None when the serial was never inserted (or was deleted).
        """
        slot = self.index.get(bytes(serial_value))
        if slot is None:
            return None
        digits = path_for_slot(slot, self.k, self.depth)
        levels = []
        node = self.root
        for dg in digits:
            levels.append(tuple((i, ch.digest) for i, ch in enumerate(node.children)))
            node = node.children[dg]
        return PathBundle(
            k=self.k,
            depth=self.depth,
            n_bits=keccak.N_BITS,
            l_bits=self.l_bits,
            root_digest=self.root_digest,
            digits=digits,
            levels=tuple(levels),
        )

    def iter_nodes(self):
        """Yield (path digits, node) over the whole tree, root first."""
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))

    # -- bulk rebuild ------------------------------------------------------

    def _rebuild(self, leaves: list[TreeNode], depth: int | None = None) -> None:
        """Rebuild every internal level bottom-up with fresh duplex chains."""
        k = self.k
        if depth is None:
            depth = depth_for(len(leaves), k)
        new_leaves = list(leaves)
        self.depth = depth
        self.leaves = new_leaves
        self.index = {leaf.serial: i for i, leaf in enumerate(new_leaves)}

        if not new_leaves:
            self.root = self._fresh_internal(depth)
            return

        level = new_leaves
        for height in range(1, depth + 1):
            level = self._build_level(level, height)
        assert len(level) == 1
        self.root = level[0]

    def _build_level(self, children: list[TreeNode], height: int) -> list[TreeNode]:
        k = self.k
        groups = [children[i : i + k] for i in range(0, len(children), k)]
        count = len(groups)
        states = np.zeros((count, 25), dtype=np.uint32)
        blocks: list[list[bytes]] = [[] for _ in range(count)]
        last = groups[-1]
        last_child = last[-1]
        last_incomplete = last_child.height > 0 and last_child.leaf_count < k**last_child.height
        spine_chain_lanes = None

        for j in range(k):
            rows = count - 1 + (1 if len(last) > j else 0)
            if rows == 0:
                break
            raw = b"".join(groups[g][j].digest for g in range(rows))
            payload = np.zeros((rows, 44), dtype=np.uint8)
            payload[:, :28] = np.frombuffer(raw, dtype=np.uint8).reshape(rows, 28)
            payload[:, 28] = 1
            payload[:, 43] = 0x80
            if last_incomplete and j == len(last) - 1 and rows == count:
                spine_chain_lanes = states[count - 1].copy()
            absorb_block_batch(states[:rows], payload.view("<u4"))
            for g in range(rows):
                blocks[g].append(self._rate_prefix(states[g]))

        nodes = []
        for g, group in enumerate(groups):
            node = TreeNode(height)
            node.children = group
            node.child_blocks = blocks[g]
            node.leaf_count = sum(ch.leaf_count for ch in group)
            node.digest = self._fold(node.child_blocks)
            if node.leaf_count < k**height:
                is_last = g == count - 1
                if is_last and last_incomplete:
                    lanes, calls = spine_chain_lanes, len(group) - 1
                else:
                    lanes, calls = states[g].copy(), len(group)
                node.chain = keccak.DuplexState(lanes, self.l_bits, calls)
            nodes.append(node)
        return nodes

    def _rate_prefix(self, lanes: np.ndarray) -> bytes:
        if self.l_bits % 32 == 0:
            return lanes[: self.l_bits // 32].astype("<u4").tobytes()
        raw = lanes[:11].astype("<u4").tobytes()
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        return keccak.bits_to_bytes(bits[: self.l_bits])


def tree_from_serials(entries, k: int, l_bits: int = keccak.DEFAULT_L_BITS) -> RevocationTree:
    """Bulk-build a tree from (serial, expiry) pairs in revocation order.

    Produces the same tree (digests, retained states, version) as inserting
    the serials one by one, via the batched rebuild path.
    """
    tree = RevocationTree(k, l_bits)
    leaves = []
    seen = set()
    for value, expiry in entries:
        value = bytes(value)
        if not value:
            raise ValueError("serial must be non-empty")
        if value in seen:
            raise DuplicateSerial(value.hex())
        seen.add(value)
        leaf = TreeNode(0, keccak.hash_bytes(value))
        leaf.serial = value
        leaf.expiry = int(expiry)
        leaf.leaf_count = 1
        leaves.append(leaf)
    tree._rebuild(leaves)
    tree.version = len(leaves)
    return tree


# -- serialization -----------------------------------------------------------

_HEADER = struct.Struct(">4sBHHHHQQ")


def serialize_tree(tree: RevocationTree) -> bytes:
    """Byte-exact tree transfer format (big-endian header, leaf records,
    retained duplex states for the unfinished right spine, root digest)."""
    out = bytearray()
    out += _HEADER.pack(
        TREE_MAGIC, TREE_FORMAT_VERSION, tree.k, tree.depth,
        keccak.N_BITS, tree.l_bits, tree.size, tree.version,
    )
    for leaf in tree.leaves:
        out += struct.pack(">H", len(leaf.serial))
        out += leaf.serial
        out += struct.pack(">Q", leaf.expiry)
    for path, node in _spine_chains(tree):
        out += struct.pack(">B", len(path))
        out += bytes(path)
        out += keccak.state_to_bytes(node.chain.lanes)
    out += tree.root_digest
    return bytes(out)


def _spine_chains(tree: RevocationTree):
    node = tree.root
    path = ()
    while node.height > 0:
        if node.chain is not None:
            yield path, node
        if not node.children:
            break
        path = path + (len(node.children) - 1,)
        node = node.children[-1]


def deserialize_tree(data: bytes) -> RevocationTree:
    """Parse, rebuild all internal digests, and check the trailing root digest."""
    if len(data) < _HEADER.size + keccak.DIGEST_BYTES:
        raise FormatError("tree file truncated")
    magic, fmt, k, depth, n_bits, l_bits, size, version = _HEADER.unpack_from(data, 0)
    if magic != TREE_MAGIC or fmt != TREE_FORMAT_VERSION:
        raise FormatError("bad tree magic or format version")
    if n_bits != keccak.N_BITS:
        raise FormatError(f"unsupported digest width {n_bits}")
    pos = _HEADER.size
    try:
        tree = RevocationTree(k, l_bits)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if size > k**depth or depth < 1:
        raise FormatError("leaf count exceeds tree capacity")

    leaves = []
    seen = set()
    for _ in range(size):
        if pos + 2 > len(data):
            raise FormatError("tree file truncated in leaf records")
        (slen,) = struct.unpack_from(">H", data, pos)
        pos += 2
        if pos + slen + 8 > len(data):
            raise FormatError("tree file truncated in leaf records")
        serial = data[pos : pos + slen]
        pos += slen
        (expiry,) = struct.unpack_from(">Q", data, pos)
        pos += 8
        if not serial or serial in seen:
            raise FormatError("empty or duplicate serial in tree file")
        seen.add(serial)
        leaf = TreeNode(0, keccak.hash_bytes(serial))
        leaf.serial = bytes(serial)
        leaf.expiry = expiry
        leaf.leaf_count = 1
        leaves.append(leaf)

    stored_chains = []
    while len(data) - pos > keccak.DIGEST_BYTES:
        plen = data[pos]
        pos += 1
        if pos + plen + keccak.STATE_BYTES > len(data):
            raise FormatError("tree file truncated in duplex-state records")
        path = tuple(data[pos : pos + plen])
        pos += plen
        lanes = data[pos : pos + keccak.STATE_BYTES]
        pos += keccak.STATE_BYTES
        stored_chains.append((path, lanes))
    if len(data) - pos != keccak.DIGEST_BYTES:
        raise FormatError("tree file truncated before root digest")

    tree._rebuild(leaves, depth)
    tree.version = version
    if tree.root_digest != data[pos:]:
        raise FormatError("root digest mismatch after rebuild")
    rebuilt = [
        (path, keccak.state_to_bytes(node.chain.lanes)) for path, node in _spine_chains(tree)
    ]
    if rebuilt != stored_chains:
        raise FormatError("retained duplex states disagree with rebuilt tree")
    return tree


# -- delta records ------------------------------------------------------------

_KIND_CODE = {LEAF: 0, INTERNAL: 1}
_KIND_NAME = {0: LEAF, 1: INTERNAL}


def encode_delta(version: int, changed) -> bytes:
    """Changed-node record stream: version, count, then (path, kind, digest)."""
    out = bytearray(struct.pack(">QI", version, len(changed)))
    for path, kind, digest in changed:
        if len(digest) != keccak.DIGEST_BYTES:
            raise ValueError("digest must be 28 bytes")
        out += struct.pack(">B", len(path))
        out += bytes(path)
        out += struct.pack(">B", _KIND_CODE[kind])
        out += digest
    return bytes(out)


def decode_delta(data: bytes):
    if len(data) < 12:
        raise FormatError("delta truncated")
    version, count = struct.unpack_from(">QI", data, 0)
    pos = 12
    changed = []
    for _ in range(count):
        if pos >= len(data):
            raise FormatError("delta truncated")
        plen = data[pos]
        pos += 1
        if pos + plen + 1 + keccak.DIGEST_BYTES > len(data):
            raise FormatError("delta truncated")
        path = tuple(data[pos : pos + plen])
        pos += plen
        kind = data[pos]
        pos += 1
        if kind not in _KIND_NAME:
            raise FormatError("bad node kind in delta")
        digest = data[pos : pos + keccak.DIGEST_BYTES]
        pos += keccak.DIGEST_BYTES
        changed.append((path, _KIND_NAME[kind], digest))
    if pos != len(data):
        raise FormatError("trailing bytes after delta records")
    return version, changed
