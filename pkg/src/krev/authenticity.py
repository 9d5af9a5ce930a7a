"""Signed roots, revocation proofs, and verifier-side checking.

A proof carries the root-to-leaf path digits and, per level, the digests of
all present children of the path node's parent. The verifier re-runs each
level's duplex chain (one call per child, in child order), folds the output
blocks into the parent digest, and requires the chain to land on the signed
root. Signature algorithms are pluggable; the shipped scheme is a
deterministic keyed digest for test and simulation use.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import keccak
from .errors import FormatError, VersionMismatch
from .tree import RevocationTree, parent_digest

PROOF_MAGIC = b"KPRF"
OK_MAGIC = b"KOKR"
WIRE_VERSION = 1

MALFORMED = "MalformedProof"
BAD_LEAF = "BadLeafDigest"
BAD_FOLD = "BadPathFold"
BAD_SIG = "BadSignature"
STALE = "Stale"


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = VerifyResult(True)


def reject(reason: str) -> VerifyResult:
    return VerifyResult(False, reason)


# -- signature scheme ---------------------------------------------------------


@dataclass(frozen=True)
class SigningKey:
    secret: bytes
    key_id: int


@dataclass(frozen=True)
class VerifyKey:
    secret: bytes
    key_id: int


class KeyedDigestScheme:
    """Deterministic keyed-digest signatures for tests and simulation.

    sign(m) = H(tag || secret || m); verification recomputes with the same
    secret, which the verifying side holds under test-harness control. Any
    real signature algorithm can be swapped in by matching this interface.
    """

    signature_bytes = keccak.DIGEST_BYTES

    def generate_keypair(self, seed: bytes, key_id: int) -> tuple[SigningKey, VerifyKey]:
        secret = keccak.hash_bytes(b"KREV-KEY" + struct.pack(">H", key_id) + seed)
        return SigningKey(secret, key_id), VerifyKey(secret, key_id)

    def sign(self, key: SigningKey, message: bytes) -> bytes:
        return keccak.hash_bytes(b"KREV-SIG" + key.secret + message)

    def verify(self, key: VerifyKey, message: bytes, signature: bytes) -> bool:
        return signature == keccak.hash_bytes(b"KREV-SIG" + key.secret + message)


DEFAULT_SCHEME = KeyedDigestScheme()


# -- signed roots -------------------------------------------------------------


@dataclass(frozen=True)
class SignedRoot:
    root_digest: bytes
    tree_version: int
    issued_at: int
    signer_id: int
    signature: bytes


def root_message(root_digest: bytes, tree_version: int, issued_at: int,
                 signer_id: int, k: int, depth: int, l_bits: int) -> bytes:
    # The signature binds the tree geometry, so a proof cannot be replayed
    # under altered k/depth/l header fields.
    return b"ROOT" + root_digest + struct.pack(
        ">QQHHHHH", tree_version, issued_at, signer_id, k, depth, keccak.N_BITS, l_bits
    )


def sign_root(tree: RevocationTree, key: SigningKey, issued_at: int,
              scheme=DEFAULT_SCHEME) -> SignedRoot:
    msg = root_message(
        tree.root_digest, tree.version, issued_at, key.key_id, tree.k, tree.depth, tree.l_bits
    )
    return SignedRoot(tree.root_digest, tree.version, issued_at, key.key_id, scheme.sign(key, msg))


# -- proofs -------------------------------------------------------------------


@dataclass(frozen=True)
class RevocationProof:
    k: int
    depth: int
    n_bits: int
    l_bits: int
    serial: bytes
    digits: tuple
    levels: tuple  # root->leaf: tuple of (child index, child digest) pairs
    signed_root: SignedRoot


def build_proof(tree: RevocationTree, serial_value: bytes,
                signed_root: SignedRoot) -> RevocationProof | None:
    """Assemble a self-contained proof, or None when the serial is absent."""
    if signed_root.tree_version != tree.version:
        raise VersionMismatch(
            f"signed root is for version {signed_root.tree_version}, tree is {tree.version}"
        )
    bundle = tree.search(serial_value)
    if bundle is None:
        return None
    return RevocationProof(
        k=bundle.k,
        depth=bundle.depth,
        n_bits=bundle.n_bits,
        l_bits=bundle.l_bits,
        serial=bytes(serial_value),
        digits=bundle.digits,
        levels=bundle.levels,
        signed_root=signed_root,
    )


def _chain_fold(digests, l_bits: int, k: int) -> bytes:
    state = keccak.duplex_init(l_bits)
    blocks = [state.absorb_bytes(d) for d in digests]
    return parent_digest(blocks, l_bits=l_bits, k=k)


def _structurally_sound(proof: RevocationProof) -> bool:
    if proof.n_bits != keccak.N_BITS or not 2 <= proof.k <= 64:
        return False
    if not keccak.N_BITS <= proof.l_bits < keccak.R_BITS:
        return False
    if proof.depth < 1 or len(proof.digits) != proof.depth or len(proof.levels) != proof.depth:
        return False
    if not proof.serial:
        return False
    for digit, level in zip(proof.digits, proof.levels):
        if not 0 <= digit < proof.k or digit >= len(level):
            return False
        if len(level) > proof.k:
            return False
        for i, (idx, digest) in enumerate(level):
            if idx != i or len(digest) != keccak.DIGEST_BYTES:
                return False
    return True


def verify_proof(proof: RevocationProof, ttp_key: VerifyKey,
                 scheme=DEFAULT_SCHEME) -> VerifyResult:
    """Accept iff the leaf digest, every level fold, and the signature check.

    Uses only the proof contents and the verification key; no tree access.
    The first failed check names the rejection reason.
    """
    if not _structurally_sound(proof):
        return reject(MALFORMED)
    if keccak.hash_bytes(proof.serial) != proof.levels[-1][proof.digits[-1]][1]:
        return reject(BAD_LEAF)
    for lvl in range(proof.depth - 1, -1, -1):
        digests = [entry[1] for entry in proof.levels[lvl]]
        computed = _chain_fold(digests, proof.l_bits, proof.k)
        expected = (
            proof.signed_root.root_digest if lvl == 0 else proof.levels[lvl - 1][proof.digits[lvl - 1]][1]
        )
        if computed != expected:
            return reject(BAD_FOLD)
    sr = proof.signed_root
    msg = root_message(
        sr.root_digest, sr.tree_version, sr.issued_at, sr.signer_id,
        proof.k, proof.depth, proof.l_bits,
    )
    if sr.signer_id != ttp_key.key_id or not scheme.verify(ttp_key, msg, sr.signature):
        return reject(BAD_SIG)
    return ACCEPT


# -- OK answers ---------------------------------------------------------------


@dataclass(frozen=True)
class OkResponse:
    queried_serial: bytes
    tree_version: int
    issued_at: int
    rsu_id: int
    signature: bytes


def ok_message(serial: bytes, tree_version: int, issued_at: int, rsu_id: int) -> bytes:
    return (
        b"OKAY"
        + struct.pack(">H", len(serial))
        + serial
        + struct.pack(">QQI", tree_version, issued_at, rsu_id)
    )


def sign_ok(serial: bytes, tree_version: int, issued_at: int, rsu_id: int,
            key: SigningKey, scheme=DEFAULT_SCHEME) -> OkResponse:
    sig = scheme.sign(key, ok_message(serial, tree_version, issued_at, rsu_id))
    return OkResponse(bytes(serial), tree_version, issued_at, rsu_id, sig)


def verify_ok(ok: OkResponse, rsu_key: VerifyKey | None, max_age: int, now: int,
              scheme=DEFAULT_SCHEME) -> VerifyResult:
    """Provisional check of a not-revoked answer: RSU signature plus freshness."""
    if rsu_key is None:
        return reject(BAD_SIG)
    msg = ok_message(ok.queried_serial, ok.tree_version, ok.issued_at, ok.rsu_id)
    if not scheme.verify(rsu_key, msg, ok.signature):
        return reject(BAD_SIG)
    if abs(now - ok.issued_at) > max_age:
        return reject(STALE)
    return ACCEPT


# -- wire formats -------------------------------------------------------------


def serialize_proof(proof: RevocationProof) -> bytes:
    sr = proof.signed_root
    out = bytearray()
    out += PROOF_MAGIC
    out += struct.pack(
        ">BHHHHH",
        WIRE_VERSION, proof.k, proof.depth, proof.n_bits, proof.l_bits, len(proof.serial),
    )
    out += proof.serial
    out += struct.pack(">B", len(proof.digits))
    out += bytes(proof.digits)
    for level in proof.levels:
        out += struct.pack(">B", len(level))
        for idx, digest in level:
            out += struct.pack(">B", idx)
            out += digest
    out += sr.root_digest
    out += struct.pack(">QQHH", sr.tree_version, sr.issued_at, sr.signer_id, len(sr.signature))
    out += sr.signature
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated record")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


def deserialize_proof(data: bytes) -> RevocationProof:
    r = _Reader(data)
    if r.take(4) != PROOF_MAGIC:
        raise FormatError("bad proof magic")
    wire, k, depth, n_bits, l_bits, serial_len = r.unpack(">BHHHHH")
    if wire != WIRE_VERSION:
        raise FormatError("unsupported proof format version")
    serial = r.take(serial_len)
    (digit_count,) = r.unpack(">B")
    if digit_count != depth:
        raise FormatError("digit count disagrees with depth")
    digits = tuple(r.take(digit_count))
    levels = []
    for _ in range(depth):
        (count,) = r.unpack(">B")
        entries = []
        for _ in range(count):
            (idx,) = r.unpack(">B")
            entries.append((idx, r.take(keccak.DIGEST_BYTES)))
        levels.append(tuple(entries))
    root_digest = r.take(keccak.DIGEST_BYTES)
    tree_version, issued_at, signer_id, sig_len = r.unpack(">QQHH")
    signature = r.take(sig_len)
    if not r.done():
        raise FormatError("trailing bytes after proof")
    return RevocationProof(
        k=k, depth=depth, n_bits=n_bits, l_bits=l_bits, serial=serial,
        digits=digits, levels=tuple(levels),
        signed_root=SignedRoot(root_digest, tree_version, issued_at, signer_id, signature),
    )


def verify_proof_bytes(data: bytes, ttp_key: VerifyKey, scheme=DEFAULT_SCHEME) -> VerifyResult:
    try:
        proof = deserialize_proof(data)
    except FormatError:
        return reject(MALFORMED)
    return verify_proof(proof, ttp_key, scheme)


def serialize_ok(ok: OkResponse) -> bytes:
    return (
        OK_MAGIC
        + struct.pack(">BH", WIRE_VERSION, len(ok.queried_serial))
        + ok.queried_serial
        + struct.pack(">QQIH", ok.tree_version, ok.issued_at, ok.rsu_id, len(ok.signature))
        + ok.signature
    )


def deserialize_ok(data: bytes) -> OkResponse:
    r = _Reader(data)
    if r.take(4) != OK_MAGIC:
        raise FormatError("bad OK magic")
    wire, serial_len = r.unpack(">BH")
    if wire != WIRE_VERSION:
        raise FormatError("unsupported OK format version")
    serial = r.take(serial_len)
    tree_version, issued_at, rsu_id, sig_len = r.unpack(">QQIH")
    signature = r.take(sig_len)
    if not r.done():
        raise FormatError("trailing bytes after OK record")
    return OkResponse(serial, tree_version, issued_at, rsu_id, signature)
