"""Independent reference Keccak, used only as a test oracle.

Everything is derived from first principles: round constants from the
degree-8 LFSR, rotation offsets from the triangular-number recurrence, and
the permutation written over (x, y) dictionaries of w-bit integers. Nothing
here is shared with the production kernels. The generic engine is anchored
to FIPS 202 by reproducing hashlib's sha3_224 at w = 64 (see test_keccak),
then instantiated at w = 32 to check the production f[800].
"""

from fractions import Fraction


def lfsr_bit(t):
    # rc(t) from the Keccak reference: x^8 + x^6 + x^5 + x^4 + 1 over GF(2)
    r = 1
    for _ in range(t % 255):
        r <<= 1
        if r & 0x100:
            r ^= 0x171
    return r & 1


def round_constants(w, rounds):
    ell = w.bit_length() - 1
    out = []
    for ir in range(rounds):
        rc = 0
        for j in range(ell + 1):
            rc |= lfsr_bit(j + 7 * ir) << (2**j - 1)
        out.append(rc)
    return out


def rotation_offsets(w):
    offs = {(0, 0): 0}
    x, y = 1, 0
    for t in range(24):
        offs[(x, y)] = int(Fraction((t + 1) * (t + 2), 2)) % w
        x, y = y, (2 * x + 3 * y) % 5
    return offs


def rotl(v, s, w):
    s %= w
    mask = (1 << w) - 1
    return ((v << s) | (v >> (w - s))) & mask


def num_rounds(w):
    return 12 + 2 * (w.bit_length() - 1)


def keccak_p(lanes, w, rounds=None, trace=None):
    """Permute {(x,y): int} lanes; optionally append each round's state to trace."""
    a = dict(lanes)
    offs = rotation_offsets(w)
    rcs = round_constants(w, rounds or num_rounds(w))
    mask = (1 << w) - 1
    for rc in rcs:
        c = {x: a[(x, 0)] ^ a[(x, 1)] ^ a[(x, 2)] ^ a[(x, 3)] ^ a[(x, 4)] for x in range(5)}
        d = {x: c[(x - 1) % 5] ^ rotl(c[(x + 1) % 5], 1, w) for x in range(5)}
        a = {(x, y): a[(x, y)] ^ d[x] for x in range(5) for y in range(5)}
        b = {}
        for x in range(5):
            for y in range(5):
                b[(y, (2 * x + 3 * y) % 5)] = rotl(a[(x, y)], offs[(x, y)], w)
        a = {
            (x, y): b[(x, y)] ^ ((b[((x + 1) % 5, y)] ^ mask) & b[((x + 2) % 5, y)])
            for x in range(5)
            for y in range(5)
        }
        a[(0, 0)] ^= rc
        if trace is not None:
            trace.append(dict(a))
    return a


def lanes_from_bytes(data, w):
    lane_bytes = w // 8
    lanes = {}
    for y in range(5):
        for x in range(5):
            i = (5 * y + x) * lane_bytes
            lanes[(x, y)] = int.from_bytes(data[i : i + lane_bytes], "little")
    return lanes


def lanes_to_bytes(lanes, w):
    lane_bytes = w // 8
    out = bytearray()
    for y in range(5):
        for x in range(5):
            out += lanes[(x, y)].to_bytes(lane_bytes, "little")
    return bytes(out)


def sponge(message, rate_bytes, domain, out_len, w=64):
    """Plain sponge with byte-aligned pad10*1 (``domain`` carries the suffix bits)."""
    state_bytes = 25 * (w // 8)
    lanes = lanes_from_bytes(b"\x00" * state_bytes, w)
    padded = bytearray(message)
    padded.append(domain)
    padded += b"\x00" * (-len(padded) % rate_bytes)
    padded[-1] ^= 0x80
    for i in range(0, len(padded), rate_bytes):
        block = bytes(padded[i : i + rate_bytes]) + b"\x00" * (state_bytes - rate_bytes)
        cur = lanes_from_bytes(block, w)
        lanes = keccak_p({k: lanes[k] ^ cur[k] for k in lanes}, w)
    out = bytearray()
    while len(out) < out_len:
        out += lanes_to_bytes(lanes, w)[:rate_bytes]
        if len(out) < out_len:
            lanes = keccak_p(lanes, w)
    return bytes(out[:out_len])


def f800(data100):
    return lanes_to_bytes(keccak_p(lanes_from_bytes(data100, 32), 32), 32)


def f800_round_trace(data100):
    trace = []
    keccak_p(lanes_from_bytes(data100, 32), 32, trace=trace)
    return [lanes_to_bytes(t, 32) for t in trace]


def duplex_call(state100, message_bits, l_bits=224):
    """One duplexing call on a 100-byte state; returns (state, output bits)."""
    rate = 352
    padded = list(message_bits) + [1] + [0] * (rate - len(message_bits) - 2) + [1]
    state_bits = bytes_to_bitlist(state100)
    mixed = [state_bits[i] ^ padded[i] for i in range(rate)] + state_bits[rate:]
    lanes = lanes_from_bytes(bitlist_to_bytes(mixed), 32)
    out_bits = bytes_to_bitlist(lanes_to_bytes(keccak_p(lanes, 32), 32))
    return bitlist_to_bytes(out_bits), out_bits[:l_bits]


def bytes_to_bitlist(data):
    return [(byte >> i) & 1 for byte in data for i in range(8)]


def bitlist_to_bytes(bits):
    assert len(bits) % 8 == 0
    return bytes(
        sum(bits[i + j] << j for j in range(8)) for i in range(0, len(bits), 8)
    )


def fold(blocks_bits, n_bits=224):
    m = len(blocks_bits)
    base, extra = divmod(n_bits, m)
    out = []
    for i, blk in enumerate(blocks_bits):
        take = base + (1 if i < extra else 0)
        out += list(blk[:take])
    return out


def duplex_hash(message, n_bits=224, l_bits=224, chunk_bytes=43):
    """Reference for the production digest: chained duplex over 43-byte chunks."""
    chunks = [message[i : i + chunk_bytes] for i in range(0, len(message), chunk_bytes)] or [b""]
    state = b"\x00" * 100
    outputs = []
    for chunk in chunks:
        state, out_bits = duplex_call(state, bytes_to_bitlist(chunk), l_bits)
        outputs.append(out_bits)
    return bitlist_to_bytes(fold(outputs, n_bits))
