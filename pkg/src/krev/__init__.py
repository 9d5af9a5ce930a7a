"""Authenticated k-ary revocation tree over a duplex Keccak-f[800] hash.

Layers: ``keccak`` (permutation, duplex construction, 224-bit digest),
``tree`` (dynamic k-ary revocation tree with incremental updates),
``authenticity`` (signed roots, proofs, verification), ``protocol``
(TTP/RSU/OBU state machines), ``sim`` (seeded traffic simulation), and
``cli`` (the ``krev`` command).
"""

from .authenticity import (
    KeyedDigestScheme,
    OkResponse,
    RevocationProof,
    SignedRoot,
    SigningKey,
    VerifyKey,
    VerifyResult,
    build_proof,
    deserialize_proof,
    serialize_proof,
    sign_ok,
    sign_root,
    verify_ok,
    verify_proof,
)
from .keccak import (
    DuplexState,
    backend_name,
    duplex_init,
    duplexing,
    hash_bytes,
    keccak_f800,
)
from .protocol import Impeachment, ObuNode, PseudonymGroup, RsuNode, TreeUpdate, TtpNode
from .sim import Metrics, ScenarioConfig, emit_report, run_simulation
from .tree import (
    MutationReport,
    RevocationTree,
    SerialNumber,
    choose_k,
    deserialize_tree,
    parent_digest,
    serialize_tree,
    tree_from_serials,
    tree_size_bits,
)

__version__ = "0.1.0"

__all__ = [
    "DuplexState",
    "Impeachment",
    "KeyedDigestScheme",
    "Metrics",
    "MutationReport",
    "ObuNode",
    "OkResponse",
    "PseudonymGroup",
    "RevocationProof",
    "RevocationTree",
    "RsuNode",
    "ScenarioConfig",
    "SerialNumber",
    "SignedRoot",
    "SigningKey",
    "TreeUpdate",
    "TtpNode",
    "VerifyKey",
    "VerifyResult",
    "backend_name",
    "build_proof",
    "choose_k",
    "deserialize_proof",
    "deserialize_tree",
    "duplex_init",
    "duplexing",
    "emit_report",
    "hash_bytes",
    "keccak_f800",
    "parent_digest",
    "run_simulation",
    "serialize_proof",
    "serialize_tree",
    "sign_ok",
    "sign_root",
    "tree_from_serials",
    "tree_size_bits",
    "verify_ok",
    "verify_proof",
    "__version__",
]
