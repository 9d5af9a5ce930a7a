"""Role state machines: tree owner (TTP), responders (RSUs), verifiers (OBUs).

Each role consumes one typed message at a time and returns the messages or
actions it produces; all delivery is done by the caller (the simulation
harness or a test). Nothing here touches sockets or clocks.

OBU trust model: a verified revocation proof always dominates OK answers.
Unrevoked serials become trusted only after ``trust_threshold`` OK answers
from distinct RSUs, and that trust is keyed to the tree version seen at
caching time. A proof contradicting earlier OK answers turns each of them
into an impeachment, delivered to the TTP through the RSU that supplied
the proof.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import keccak
from .authenticity import (
    DEFAULT_SCHEME,
    OkResponse,
    RevocationProof,
    SignedRoot,
    SigningKey,
    VerifyKey,
    build_proof,
    deserialize_ok,
    deserialize_proof,
    serialize_ok,
    serialize_proof,
    sign_ok,
    sign_root,
    verify_ok,
    verify_proof,
)
from .errors import FormatError, InvalidImpeachment, UnknownObu
from .tree import RevocationTree, SerialNumber, deserialize_tree, encode_delta, serialize_tree

MSG_QUERY = 1
MSG_PROOF = 2
MSG_OK = 3
MSG_DELTA = 4
MSG_RELOAD = 5
MSG_IMPEACH = 6
MSG_RSU_REVOKED = 7

PRECHECK_REVOKED = "revoked"
PRECHECK_RELIABLE = "reliable"
PRECHECK_UNKNOWN = "unknown"


@dataclass(frozen=True)
class PseudonymGroup:
    obu_id: int
    pseudonyms: tuple  # SerialNumber entries, pairwise distinct


@dataclass(frozen=True)
class TreeUpdate:
    """TTP-to-RSU state change: either incremental records or a full reload."""

    signed_root: SignedRoot
    inserted: tuple = ()       # SerialNumber entries, in insertion order
    tombstoned: tuple = ()     # serial byte strings
    records: tuple = ()        # (path, kind, digest) triples for verification
    full_tree: bytes | None = None
    sweep_time: int | None = None


@dataclass(frozen=True)
class Impeachment:
    accused_rsu_id: int
    ok: OkResponse
    proof: RevocationProof
    reporter_obu_id: int


@dataclass(frozen=True)
class RsuRevokedNotice:
    rsu_id: int
    tree_version: int


@dataclass
class PendingOk:
    serial: bytes
    rsu_ids: list = field(default_factory=list)
    oks: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.rsu_ids)


# -- TTP ----------------------------------------------------------------------


class TtpNode:
    """Owns the revocation tree, pseudonym groups, and the RSU roster."""

    def __init__(self, k: int, seed: bytes, l_bits: int = keccak.DEFAULT_L_BITS,
                 signer_id: int = 1, scheme=DEFAULT_SCHEME):
        self.scheme = scheme
        self.signer_id = signer_id
        self.signing_key, self.verify_key = scheme.generate_keypair(seed, signer_id)
        self.tree = RevocationTree(k, l_bits)
        self.rsus: dict[int, VerifyKey] = {}
        self.revoked_rsus: dict[int, int] = {}
        self.groups: dict[int, PseudonymGroup] = {}
        self.last_sweep_time = 0
        self.signed_root = sign_root(self.tree, self.signing_key, 0, scheme)

    def register_rsu(self, rsu_id: int, key: VerifyKey) -> None:
        self.rsus[rsu_id] = key

    def register_group(self, group: PseudonymGroup) -> None:
        values = [p.value for p in group.pseudonyms]
        if len(set(values)) != len(values):
            raise ValueError("pseudonyms within a group must be distinct")
        self.groups[group.obu_id] = group

    def _recipients(self):
        return [rid for rid in self.rsus if rid not in self.revoked_rsus]

    def _issue(self, now: int) -> SignedRoot:
        self.signed_root = sign_root(self.tree, self.signing_key, now, self.scheme)
        return self.signed_root

    def revoke_obu(self, obu_id: int, now: int):
        """Insert the OBU's whole pseudonym group; one update per live RSU."""
        group = self.groups.get(obu_id)
        if group is None:
            raise UnknownObu(str(obu_id))
        fresh = [p for p in group.pseudonyms if not self.tree.contains(p.value)]
        if not fresh:
            return []
        merged: dict = {}
        grew = False
        for p in fresh:
            report = self.tree.insert(p.value, p.expiry)
            grew = grew or report.full_reconstruct
            if p.expiry < self.last_sweep_time:
                self.tree.leaf_for(p.value).tombstoned = True
            for path, kind, digest in report.changed:
                merged[path] = (path, kind, digest)  # keep each node's final digest
        signed = self._issue(now)
        update = TreeUpdate(
            signed_root=signed,
            inserted=tuple(fresh),
            records=() if grew else tuple(merged.values()),
            full_tree=serialize_tree(self.tree) if grew else None,
            # tombstone marks are not in the transfer format; replicas
            # re-derive them from the sweep horizon
            sweep_time=self.last_sweep_time,
        )
        return [(rid, update) for rid in self._recipients()]

    def periodic_update(self, now: int):
        """Expire old serials; broadcast only when something changed."""
        report = self.tree.expire_sweep(now)
        self.last_sweep_time = max(self.last_sweep_time, now)
        if report.version == self.signed_root.tree_version:
            return []
        signed = self._issue(now)
        update = TreeUpdate(
            signed_root=signed,
            tombstoned=report.tombstoned,
            records=report.changed,
            full_tree=serialize_tree(self.tree) if report.full_reconstruct else None,
            sweep_time=now,
        )
        return [(rid, update) for rid in self._recipients()]

    def handle_impeachment(self, imp: Impeachment, now: int):
        """Validate and revoke the accused RSU; raises InvalidImpeachment."""
        accused_key = self.rsus.get(imp.accused_rsu_id)
        if accused_key is None:
            raise InvalidImpeachment("UnknownRsu")
        if imp.ok.rsu_id != imp.accused_rsu_id:
            raise InvalidImpeachment("AccusedMismatch")
        if not verify_ok(imp.ok, accused_key, max_age=2**63, now=imp.ok.issued_at,
                         scheme=self.scheme):
            raise InvalidImpeachment("BadOkSignature")
        if imp.proof.serial != imp.ok.queried_serial:
            raise InvalidImpeachment("SerialMismatch")
        if not verify_proof(imp.proof, self.verify_key, self.scheme):
            raise InvalidImpeachment("BadProof")
        if imp.proof.signed_root.tree_version < imp.ok.tree_version:
            raise InvalidImpeachment("VersionOrder")
        if imp.accused_rsu_id in self.revoked_rsus:
            return []
        self.revoked_rsus[imp.accused_rsu_id] = now
        return [RsuRevokedNotice(imp.accused_rsu_id, self.tree.version)]


# -- RSU ----------------------------------------------------------------------


class RsuNode:
    """Query responder holding a replica tree synced from TTP updates."""

    def __init__(self, rsu_id: int, k: int, seed: bytes, ttp_key: VerifyKey,
                 l_bits: int = keccak.DEFAULT_L_BITS, cheating: bool = False,
                 scheme=DEFAULT_SCHEME):
        self.rsu_id = rsu_id
        self.scheme = scheme
        self.signing_key, self.verify_key = scheme.generate_keypair(seed, 1000 + rsu_id)
        self.ttp_key = ttp_key
        self.tree = RevocationTree(k, l_bits)
        self.signed_root: SignedRoot | None = None
        self.cheating = cheating

    def apply_update(self, update: TreeUpdate) -> None:
        """Replay an update and require convergence with the signed root."""
        if update.full_tree is not None:
            self.tree = deserialize_tree(update.full_tree)
            if update.sweep_time is not None:
                # tombstone marks are not in the transfer format; re-derive
                for leaf in self.tree.leaves:
                    if leaf.expiry < update.sweep_time:
                        leaf.tombstoned = True
        else:
            for entry in update.inserted:
                self.tree.insert(entry.value, entry.expiry)
                if update.sweep_time is not None and entry.expiry < update.sweep_time:
                    self.tree.leaf_for(entry.value).tombstoned = True
            if update.tombstoned:
                if update.sweep_time is not None:
                    self.tree.expire_sweep(update.sweep_time)
                else:
                    for value in update.tombstoned:
                        leaf = self.tree.leaf_for(value)
                        if leaf is not None:
                            leaf.tombstoned = True
        signed = update.signed_root
        if self.tree.root_digest != signed.root_digest:
            raise FormatError("replica root digest diverged from signed root")
        if self.tree.version != signed.tree_version:
            raise FormatError("replica version diverged from signed root")
        for path, kind, digest in update.records:
            node = self.node_at(path)
            if node is None or node.kind != kind or node.digest != digest:
                raise FormatError(f"delta record mismatch at {path}")
        self.signed_root = signed

    def node_at(self, path):
        node = self.tree.root
        for digit in path:
            if digit >= len(node.children):
                return None
            node = node.children[digit]
        return node

    def answer_query(self, serial_value: bytes, now: int):
        """A proof for live revoked serials, a signed OK for everything else.

        A cheating responder answers OK unconditionally; the OK signature is
        genuine, only the statement is false.
        """
        if self.signed_root is None:
            raise FormatError("RSU has no synced tree")
        if not self.cheating:
            leaf = self.tree.leaf_for(serial_value)
            if leaf is not None and not leaf.tombstoned:
                return build_proof(self.tree, serial_value, self.signed_root)
        return sign_ok(
            serial_value, self.signed_root.tree_version, now, self.rsu_id,
            self.signing_key, self.scheme,
        )


# -- OBU ----------------------------------------------------------------------


class ObuNode:
    """Querier with complementary unreliable/reliable caches and a trust threshold."""

    def __init__(self, obu_id: int, ttp_key: VerifyKey, rsu_keys: dict,
                 trust_threshold: int = 3, ok_max_age: int = 60, scheme=DEFAULT_SCHEME):
        self.obu_id = obu_id
        self.ttp_key = ttp_key
        self.rsu_keys = dict(rsu_keys)
        self.trust_threshold = trust_threshold
        self.ok_max_age = ok_max_age
        self.scheme = scheme
        self.unreliable: dict[bytes, RevocationProof] = {}
        self.reliable: dict[bytes, tuple] = {}  # serial -> (tree_version, cached_at)
        self.pending: dict[bytes, PendingOk] = {}
        self.latest_version = 0
        self.dropped = 0

    def note_version(self, version: int) -> None:
        self.latest_version = max(self.latest_version, version)

    def precheck(self, serial_value: bytes) -> str:
        """Cache consultation before any network query."""
        serial_value = bytes(serial_value)
        if serial_value in self.unreliable:
            return PRECHECK_REVOKED
        entry = self.reliable.get(serial_value)
        if entry is not None:
            if entry[0] == self.latest_version:
                return PRECHECK_RELIABLE
            del self.reliable[serial_value]  # version bump: trust expired
        return PRECHECK_UNKNOWN

    def asked_before(self, serial_value: bytes, rsu_id: int) -> bool:
        pend = self.pending.get(bytes(serial_value))
        return pend is not None and rsu_id in pend.rsu_ids

    def handle_revoked_rsu(self, notice: RsuRevokedNotice) -> None:
        self.rsu_keys.pop(notice.rsu_id, None)

    def handle_answer(self, answer, rsu_id: int, now: int) -> list:
        """Consume one verified answer; returns (kind, payload) action pairs."""
        if isinstance(answer, RevocationProof):
            return self._handle_proof(answer, rsu_id)
        if isinstance(answer, OkResponse):
            return self._handle_ok(answer, rsu_id, now)
        raise TypeError(f"unexpected answer type {type(answer).__name__}")

    def _handle_proof(self, proof: RevocationProof, rsu_id: int) -> list:
        if not verify_proof(proof, self.ttp_key, self.scheme):
            self.dropped += 1
            return [("drop", proof.serial)]
        self.note_version(proof.signed_root.tree_version)
        actions = []
        pend = self.pending.pop(proof.serial, None)
        if pend is not None:
            for ok in pend.oks:
                if proof.signed_root.tree_version >= ok.tree_version:
                    imp = Impeachment(ok.rsu_id, ok, proof, self.obu_id)
                    actions.append(("impeach", imp))
        self.reliable.pop(proof.serial, None)
        self.unreliable[proof.serial] = proof
        actions.append(("cache-revoked", proof.serial))
        return actions

    def _handle_ok(self, ok: OkResponse, rsu_id: int, now: int) -> list:
        key = self.rsu_keys.get(rsu_id)
        if ok.rsu_id != rsu_id or not verify_ok(ok, key, self.ok_max_age, now, self.scheme):
            self.dropped += 1
            return [("drop", ok.queried_serial)]
        self.note_version(ok.tree_version)
        serial = ok.queried_serial
        if serial in self.unreliable:
            # A verified proof dominates any OK; nothing to update.
            return [("none", serial)]
        pend = self.pending.setdefault(serial, PendingOk(serial))
        if rsu_id not in pend.rsu_ids:
            pend.rsu_ids.append(rsu_id)
            pend.oks.append(ok)
        if pend.count >= self.trust_threshold:
            del self.pending[serial]
            self.reliable[serial] = (ok.tree_version, now)
            return [("cache-reliable", serial)]
        return [("ask-again", serial)]


# -- message envelopes (replay logs) -------------------------------------------


_ENVELOPE = struct.Struct(">BIIQ")


def encode_envelope(msg_type: int, sender: int, receiver: int, sim_time: int,
                    payload: bytes) -> bytes:
    body = _ENVELOPE.pack(msg_type, sender, receiver, sim_time) + payload
    return struct.pack(">I", len(body)) + body


def decode_envelopes(data: bytes):
    """Parse a length-prefixed envelope stream into (type, sender, receiver, time, payload)."""
    out = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise FormatError("truncated envelope length")
        (length,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + length > len(data) or length < _ENVELOPE.size:
            raise FormatError("truncated envelope body")
        msg_type, sender, receiver, sim_time = _ENVELOPE.unpack_from(data, pos)
        payload = data[pos + _ENVELOPE.size : pos + length]
        out.append((msg_type, sender, receiver, sim_time, payload))
        pos += length
    return out


def encode_update_payload(update: TreeUpdate) -> bytes:
    """Byte encoding of a TreeUpdate for logs and traffic accounting."""
    sr = update.signed_root
    out = bytearray()
    out += sr.root_digest
    out += struct.pack(">QQHH", sr.tree_version, sr.issued_at, sr.signer_id, len(sr.signature))
    out += sr.signature
    out += struct.pack(">I", len(update.inserted))
    for entry in update.inserted:
        out += struct.pack(">H", len(entry.value))
        out += entry.value
        out += struct.pack(">Q", entry.expiry)
    out += struct.pack(">I", len(update.tombstoned))
    for value in update.tombstoned:
        out += struct.pack(">H", len(value))
        out += value
    out += encode_delta(sr.tree_version, update.records)
    if update.full_tree is None:
        out += struct.pack(">I", 0)
    else:
        out += struct.pack(">I", len(update.full_tree))
        out += update.full_tree
    return bytes(out)


def encode_impeachment_payload(imp: Impeachment) -> bytes:
    ok_bytes = serialize_ok(imp.ok)
    proof_bytes = serialize_proof(imp.proof)
    return (
        struct.pack(">II", imp.accused_rsu_id, imp.reporter_obu_id)
        + struct.pack(">I", len(ok_bytes))
        + ok_bytes
        + struct.pack(">I", len(proof_bytes))
        + proof_bytes
    )


def decode_impeachment_payload(data: bytes) -> Impeachment:
    r_accused, r_reporter = struct.unpack_from(">II", data, 0)
    pos = 8
    (ok_len,) = struct.unpack_from(">I", data, pos)
    pos += 4
    ok = deserialize_ok(data[pos : pos + ok_len])
    pos += ok_len
    (proof_len,) = struct.unpack_from(">I", data, pos)
    pos += 4
    proof = deserialize_proof(data[pos : pos + proof_len])
    if pos + proof_len != len(data):
        raise FormatError("trailing bytes after impeachment")
    return Impeachment(r_accused, ok, proof, r_reporter)
