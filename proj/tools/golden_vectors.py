#!/usr/bin/env python3
"""Independent SipHash-2-4 edge deviates, used to produce tests/data/golden_vectors.csv."""
import struct
import sys

MASK = (1 << 64) - 1


def rotl(x, b):
    return ((x << b) | (x >> (64 - b))) & MASK


def siphash24(k0, k1, msg):
    v0 = k0 ^ 0x736F6D6570736575
    v1 = k1 ^ 0x646F72616E646F6D
    v2 = k0 ^ 0x6C7967656E657261
    v3 = k1 ^ 0x7465646279746573

    def rounds(n):
        nonlocal v0, v1, v2, v3
        for _ in range(n):
            v0 = (v0 + v1) & MASK; v1 = rotl(v1, 13); v1 ^= v0; v0 = rotl(v0, 32)
            v2 = (v2 + v3) & MASK; v3 = rotl(v3, 16); v3 ^= v2
            v0 = (v0 + v3) & MASK; v3 = rotl(v3, 21); v3 ^= v0
            v2 = (v2 + v1) & MASK; v1 = rotl(v1, 17); v1 ^= v2; v2 = rotl(v2, 32)

    n = len(msg)
    tail = n - n % 8
    for i in range(0, tail, 8):
        m = struct.unpack_from("<Q", msg, i)[0]
        v3 ^= m
        rounds(2)
        v0 ^= m
    last = (n & 0xFF) << 56
    for i, byte in enumerate(msg[tail:]):
        last |= byte << (8 * i)
    v3 ^= last
    rounds(2)
    v0 ^= last
    v2 ^= 0xFF
    rounds(4)
    return v0 ^ v1 ^ v2 ^ v3


def encode(a, b):
    a, b = (a, b) if a < b else (b, a)
    words = [len(a)] + list(a) + list(b)
    return b"".join(struct.pack("<q" if w < 0 else "<Q", w) for w in words)


def deviate(seed, sample_index, enc):
    return (siphash24(seed, sample_index, enc) >> 11) * 2.0**-53


CASES = [
    (0, 0, (0,), (1,)),
    (42, 7, (0, 0), (0, 1)),
    (20240501, 123456789, (-3, 5, 2, 0, 0, 0, 1), (-3, 5, 2, 0, 0, 1, 1)),
]


def main():
    out = sys.stdout
    out.write("seed,sample_index,edge_encoding_hex,u_as_hex_double\n")
    for seed, k, a, b in CASES:
        enc = encode(a, b)
        out.write(f"{seed},{k},{enc.hex()},{float.hex(deviate(seed, k, enc))}\n")


if __name__ == "__main__":
    # published SipHash-2-4 test vectors, key 00..0f, message 00..(n-1)
    k0 = int.from_bytes(bytes(range(8)), "little")
    k1 = int.from_bytes(bytes(range(8, 16)), "little")
    assert siphash24(k0, k1, b"") == 0x726FDB47DD0E0E31
    assert siphash24(k0, k1, bytes(range(15))) == 0xA129CA6149BE45E5
    main()
