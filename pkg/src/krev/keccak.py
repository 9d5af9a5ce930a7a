"""Duplex construction over the 800-bit Keccak permutation with 32-bit lanes.

State geometry: b = 800 bits (25 lanes of 32), rate r = 352 (the first 11
lanes), capacity c = 448 = 2n. Digests are n = 224 bits. The permutation
runs 22 rounds (12 + 2*log2(32)); published f[800] vectors therefore apply.

Every duplexing call pads its input into a single r-bit block (multi-rate
pad10*1), XORs it into the rate lanes, permutes, and emits the first
``l_bits`` of the rate as the output block. The capacity lanes are never
touched by caller input.

The message digest chains duplexing calls over byte-aligned chunks of
(r-2)//8*8 = 344 bits and builds the 224-bit result from the per-chunk
output blocks with the same truncate-and-concatenate rule the tree uses
for child digests.

All public operations treat states as values: inputs are never mutated.
``DuplexState`` objects may be freely copied between threads.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from ._tables import ROUNDS
from .errors import BadBlockLength, EmptyChildren, InputTooLong

B_BITS = 800
R_BITS = 352
C_BITS = 448
N_BITS = 224
DIGEST_BYTES = N_BITS // 8
DEFAULT_L_BITS = 224
RATE_LANES = R_BITS // 32
RATE_BYTES = R_BITS // 8
MAX_INPUT_BITS = R_BITS - 2
CHUNK_BYTES = MAX_INPUT_BITS // 8  # 43: largest byte-aligned single-block input
STATE_BYTES = B_BITS // 8

backend_name = _backend.backend_name


def zero_state() -> np.ndarray:
    """Fresh all-zero 25-lane state."""
    return np.zeros(25, dtype=np.uint32)


def state_from_bytes(data: bytes) -> np.ndarray:
    if len(data) != STATE_BYTES:
        raise ValueError(f"state must be {STATE_BYTES} bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<u4").astype(np.uint32)


def state_to_bytes(state: np.ndarray) -> bytes:
    return state.astype("<u4").tobytes()


def keccak_f800(state: np.ndarray) -> np.ndarray:
    """Permute an 800-bit state; returns a new state, input left untouched.

    ``state`` is the flat 25-lane form; ``state.reshape(5, 5)[y][x]`` is the
    lane at matrix position (x, y).
    """
    out = np.array(state, dtype=np.uint32, copy=True)
    _backend.permute(out)
    return out


def f800_round_trace(state: np.ndarray) -> list[np.ndarray]:
    """States after each of the 22 rounds (diagnostics; numpy round function)."""
    from . import _kernels_numpy

    cur = np.array(state, dtype=np.uint32, copy=True).reshape(1, 25)
    trace = []
    for rnd in range(ROUNDS):
        _kernels_numpy.round_step(cur, rnd)
        trace.append(cur[0].copy())
    return trace


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")


def bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(bits, bitorder="little").tobytes()


def _as_bits(message) -> np.ndarray:
    if isinstance(message, (bytes, bytearray, memoryview)):
        return bytes_to_bits(bytes(message))
    bits = np.asarray(message, dtype=np.uint8)
    if bits.ndim != 1 or (bits.size and bits.max() > 1):
        raise ValueError("bit string must be a flat array of 0/1")
    return bits


def pad_bits(message, rate_bits: int = R_BITS) -> np.ndarray:
    """Multi-rate pad10*1. Returns the padded blocks, shape (nblocks, rate).

    At least two bits are appended, so the output length is the smallest
    multiple of the rate that is strictly greater than the message length.
    """
    bits = _as_bits(message)
    total = -(-(bits.size + 2) // rate_bits) * rate_bits
    padded = np.zeros(total, dtype=np.uint8)
    padded[: bits.size] = bits
    padded[bits.size] = 1
    padded[-1] ^= 1
    return padded.reshape(-1, rate_bits)


def unpad_bits(padded) -> np.ndarray:
    """Strip pad10*1 from a flat padded bit string."""
    bits = np.asarray(padded, dtype=np.uint8).ravel()
    if bits.size < 2 or bits[-1] != 1:
        raise ValueError("not a pad10*1 string")
    body = bits[:-1]
    ones = np.nonzero(body)[0]
    if ones.size == 0:
        raise ValueError("not a pad10*1 string")
    return body[: ones[-1]]


def _block_lanes_from_bits(bits: np.ndarray) -> np.ndarray:
    blocks = pad_bits(bits, R_BITS)
    raw = np.packbits(blocks[0], bitorder="little").tobytes()
    return np.frombuffer(raw, dtype="<u4").astype(np.uint32)


_PAD_TAIL = [bytes([0x01]) + b"\x00" * (RATE_BYTES - n - 2) + b"\x80" for n in range(CHUNK_BYTES)]
_PAD_TAIL.append(b"\x81")  # 43-byte input: single shared pad byte


def _block_lanes_from_bytes(data: bytes) -> np.ndarray:
    # Byte-aligned fast path for the tree: one padded 44-byte block.
    return np.frombuffer(data + _PAD_TAIL[len(data)], dtype="<u4").astype(np.uint32)


class DuplexState:
    """Duplex-mode state: 25 lanes plus the output width and a call counter."""

    __slots__ = ("lanes", "l_bits", "call_count")

    def __init__(self, lanes=None, l_bits: int = DEFAULT_L_BITS, call_count: int = 0):
        if not 0 < l_bits < R_BITS:
            raise ValueError(f"l_bits must be in [1, {R_BITS - 1}], got {l_bits}")
        self.lanes = zero_state() if lanes is None else lanes
        self.l_bits = l_bits
        self.call_count = call_count

    def copy(self) -> "DuplexState":
        return DuplexState(self.lanes.copy(), self.l_bits, self.call_count)

    def __eq__(self, other):
        return (
            isinstance(other, DuplexState)
            and self.l_bits == other.l_bits
            and self.call_count == other.call_count
            and bool(np.array_equal(self.lanes, other.lanes))
        )

    def _rate_prefix_bits(self) -> np.ndarray:
        raw = self.lanes[:RATE_LANES].astype("<u4").tobytes()
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[: self.l_bits]

    def _rate_prefix_bytes(self) -> bytes:
        if self.l_bits % 32 == 0:
            return self.lanes[: self.l_bits // 32].astype("<u4").tobytes()
        return bits_to_bytes(self._rate_prefix_bits())

    def absorb_bytes(self, data: bytes) -> bytes:
        """Advance this state in place with one byte-aligned input block.

        Internal hot path for tree maintenance; the value-semantics entry
        point is :func:`duplexing`. Returns the output block as bytes
        (``ceil(l_bits / 8)``, unused trailing bits zero).
        """
        if len(data) > CHUNK_BYTES:
            raise InputTooLong(f"input is {len(data) * 8} bits; limit {MAX_INPUT_BITS}")
        _backend.absorb_block(self.lanes, _block_lanes_from_bytes(data))
        self.call_count += 1
        return self._rate_prefix_bytes()


def duplex_init(l_bits: int = DEFAULT_L_BITS) -> DuplexState:
    """All-zero duplex state with call_count 0."""
    return DuplexState(l_bits=l_bits)


def duplexing(state: DuplexState, message) -> tuple[DuplexState, np.ndarray]:
    """One duplexing call: pad, XOR into the rate, permute, emit l_bits.

    ``message`` is a bit array (0/1 values) or bytes; it must fit a single
    padded block, i.e. at most r-2 = 350 bits. Returns the advanced state
    and the output bits; the input state is not modified.
    """
    bits = _as_bits(message)
    if bits.size > MAX_INPUT_BITS:
        raise InputTooLong(f"input is {bits.size} bits; limit {MAX_INPUT_BITS}")
    out = state.copy()
    _backend.absorb_block(out.lanes, _block_lanes_from_bits(bits))
    out.call_count += 1
    return out, out._rate_prefix_bits()


def fold_outputs(blocks, l_bits: int, n_bits: int = N_BITS) -> bytes:
    """Truncate-and-concatenate m output blocks into one n-bit digest.

    Each block keeps its first n//m bits; the first n%m blocks keep one bit
    more, so the pieces always total exactly n. Blocks are bytes carrying
    ``l_bits`` significant bits each (low-order bit first within bytes).
    """
    m = len(blocks)
    if m == 0:
        raise EmptyChildren("cannot fold zero blocks")
    block_bytes = -(-l_bits // 8)
    for blk in blocks:
        if len(blk) != block_bytes:
            raise BadBlockLength(f"expected {block_bytes}-byte blocks, got {len(blk)}")
    base, extra = divmod(n_bits, m)
    if base + (1 if extra else 0) > l_bits:
        raise BadBlockLength(f"blocks of {l_bits} bits are too short to fold {m} -> {n_bits}")
    if m == 1 and n_bits % 8 == 0:
        return blocks[0][: n_bits // 8]
    acc = 0
    pos = 0
    for i, blk in enumerate(blocks):
        take = base + (1 if i < extra else 0)
        if take:
            acc |= (int.from_bytes(blk, "little") & ((1 << take) - 1)) << pos
            pos += take
    return acc.to_bytes(-(-n_bits // 8), "little")


def hash_bytes(message: bytes) -> bytes:
    """The 224-bit tree digest: chained duplexing over 43-byte chunks."""
    state = DuplexState(l_bits=DEFAULT_L_BITS)
    if len(message) <= CHUNK_BYTES:
        return state.absorb_bytes(bytes(message))
    chunks = [message[i : i + CHUNK_BYTES] for i in range(0, len(message), CHUNK_BYTES)]
    outputs = [state.absorb_bytes(chunk) for chunk in chunks]
    return fold_outputs(outputs, DEFAULT_L_BITS, N_BITS)


__all__ = [
    "B_BITS",
    "R_BITS",
    "C_BITS",
    "N_BITS",
    "DIGEST_BYTES",
    "DEFAULT_L_BITS",
    "CHUNK_BYTES",
    "ROUNDS",
    "DuplexState",
    "backend_name",
    "bits_to_bytes",
    "bytes_to_bits",
    "duplex_init",
    "duplexing",
    "fold_outputs",
    "hash_bytes",
    "keccak_f800",
    "pad_bits",
    "state_from_bytes",
    "state_to_bytes",
    "unpad_bits",
    "zero_state",
]
