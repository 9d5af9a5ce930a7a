"""JIT-compiled permutation kernels (hot path for incremental tree updates)."""

import numpy as np
from numba import njit, uint32

from ._tables import CHI_PLUS1, CHI_PLUS2, PI_ROTATION, PI_SOURCE, ROUND_CONSTANTS, ROUNDS

_RC = ROUND_CONSTANTS
_PI_SRC = PI_SOURCE
_PI_ROT = PI_ROTATION
_CHI1 = CHI_PLUS1
_CHI2 = CHI_PLUS2


@njit(cache=True)
def _permute_one(a):
    b = np.empty(25, dtype=uint32)
    c = np.empty(5, dtype=uint32)
    d = np.empty(5, dtype=uint32)
    for rnd in range(ROUNDS):
        for x in range(5):
            c[x] = a[x] ^ a[x + 5] ^ a[x + 10] ^ a[x + 15] ^ a[x + 20]
        for x in range(5):
            t = c[(x + 1) % 5]
            d[x] = c[(x - 1) % 5] ^ ((t << uint32(1)) | (t >> uint32(31)))
        for i in range(25):
            a[i] ^= d[i % 5]
        for i in range(25):
            v = a[_PI_SRC[i]]
            s = _PI_ROT[i]
            b[i] = (v << s) | (v >> ((uint32(32) - s) & uint32(31)))
        for i in range(25):
            a[i] = b[i] ^ ((~b[_CHI1[i]]) & b[_CHI2[i]])
        a[0] ^= _RC[rnd]


@njit(cache=True)
def permute(state):
    _permute_one(state)


@njit(cache=True)
def permute_batch(states):
    for i in range(states.shape[0]):
        _permute_one(states[i])


@njit(cache=True)
def absorb_block(state, block):
    for i in range(11):
        state[i] ^= block[i]
    _permute_one(state)


@njit(cache=True)
def absorb_block_batch(states, blocks):
    for i in range(states.shape[0]):
        for j in range(11):
            states[i, j] ^= blocks[i, j]
        _permute_one(states[i])
