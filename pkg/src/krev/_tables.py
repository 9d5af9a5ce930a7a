"""Constant tables for the 800-bit Keccak permutation (32-bit lanes, 22 rounds).

Lane layout is flat: index i = x + 5*y, matching the byte order of the
800-bit state (lane i occupies bytes 4*i .. 4*i+3, little-endian).
"""

import numpy as np

ROUNDS = 22

# Round constants for 32-bit lanes: low words of the standard 64-bit
# constants (the LFSR bit positions 2^j-1 for j=0..5 all fall below bit 32).
ROUND_CONSTANTS = np.array(
    [
        0x00000001, 0x00008082, 0x0000808A, 0x80008000,
        0x0000808B, 0x80000001, 0x80008081, 0x00008009,
        0x0000008A, 0x00000088, 0x80008009, 0x8000000A,
        0x8000808B, 0x0000008B, 0x00008089, 0x00008003,
        0x00008002, 0x00000080, 0x0000800A, 0x8000000A,
        0x80008081, 0x00008080,
    ],
    dtype=np.uint32,
)

# Rotation offsets r[x,y] mod 32, flat order x + 5*y.
RHO_OFFSETS = np.array(
    [
        0, 1, 30, 28, 27,
        4, 12, 6, 23, 20,
        3, 10, 11, 25, 7,
        9, 13, 15, 21, 8,
        18, 2, 29, 24, 14,
    ],
    dtype=np.uint32,
)


def _build_pi_tables():
    # rho+pi move lane (x,y) to (y, 2x+3y); precompute the inverse map so a
    # kernel can write B[d] = rotl(A[src[d]], rot[d]) in one pass.
    src = np.zeros(25, dtype=np.int64)
    rot = np.zeros(25, dtype=np.uint32)
    for x in range(5):
        for y in range(5):
            dest = y + 5 * ((2 * x + 3 * y) % 5)
            src[dest] = x + 5 * y
            rot[dest] = RHO_OFFSETS[x + 5 * y]
    return src, rot


PI_SOURCE, PI_ROTATION = _build_pi_tables()

# chi combines each lane with the two lanes to its right in the same row.
CHI_PLUS1 = np.array([((x + 1) % 5) + 5 * y for y in range(5) for x in range(5)], dtype=np.int64)
CHI_PLUS2 = np.array([((x + 2) % 5) + 5 * y for y in range(5) for x in range(5)], dtype=np.int64)
