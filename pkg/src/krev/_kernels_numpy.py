"""Pure-numpy permutation kernels, vectorized over a leading batch axis.

Fallback backend; slower than the numba kernels for one state at a time but
competitive when many states are permuted together (tree rebuilds).
"""

import numpy as np

from ._tables import CHI_PLUS1, CHI_PLUS2, PI_ROTATION, PI_SOURCE, ROUND_CONSTANTS, ROUNDS

_U1 = np.uint32(1)
_U31 = np.uint32(31)


def _rotl(v, s):
    # s may be an array; the &31 keeps the complementary shift in range.
    return (v << s) | (v >> ((np.uint32(32) - s) & _U31))


def round_step(states, rnd: int):
    """Apply one permutation round in place to ``states`` of shape (N, 25)."""
    a = states
    # theta
    cols = a.reshape(-1, 5, 5)
    c = cols[:, 0] ^ cols[:, 1] ^ cols[:, 2] ^ cols[:, 3] ^ cols[:, 4]
    d = np.roll(c, 1, axis=1) ^ _rotl(np.roll(c, -1, axis=1), _U1)
    a ^= np.tile(d, 5)
    # rho + pi
    b = _rotl(a[:, PI_SOURCE], PI_ROTATION)
    # chi
    a[:] = b ^ (~b[:, CHI_PLUS1] & b[:, CHI_PLUS2])
    # iota
    a[:, 0] ^= ROUND_CONSTANTS[rnd]


def permute_batch(states):
    """Apply the full 22-round permutation in place to states of shape (N, 25)."""
    for rnd in range(ROUNDS):
        round_step(states, rnd)


def permute(state):
    """Apply the permutation in place to one flat 25-lane state."""
    permute_batch(state.reshape(1, 25))


def absorb_block(state, block):
    """XOR an 11-lane padded block into the rate lanes, then permute."""
    state[:11] ^= block
    permute(state)


def absorb_block_batch(states, blocks):
    states[:, :11] ^= blocks
    permute_batch(states)
