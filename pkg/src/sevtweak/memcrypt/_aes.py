"""AES-128 vectorized over many (block, key) pairs at once.

``cryptography`` only batches blocks under a single key. The mitigated engine
derives a fresh key for every block address, so filling a 16 MiB guest needs
about a million independent keys; this module runs them as numpy arrays
using the usual 32-bit T-table formulation.
"""

import numpy as np

_U32 = np.dtype("<u4")


def _rotl8(x, s):
    return ((x << s) | (x >> (8 - s))) & 0xFF


def _build_sbox():
    sbox = np.zeros(256, dtype=np.uint8)
    p = q = 1
    # walk the multiplicative group with generator 3, tracking its inverse
    while True:
        p = p ^ ((p << 1) & 0xFF) ^ (0x1B if p & 0x80 else 0)
        q ^= q << 1
        q ^= q << 2
        q ^= q << 4
        q &= 0xFF
        if q & 0x80:
            q ^= 0x09
        sbox[p] = q ^ _rotl8(q, 1) ^ _rotl8(q, 2) ^ _rotl8(q, 3) ^ _rotl8(q, 4) ^ 0x63
        if p == 1:
            break
    sbox[0] = 0x63
    return sbox


def _gmul(a, b):
    r = 0
    while b:
        if b & 1:
            r ^= a
        a = ((a << 1) ^ (0x1B if a & 0x80 else 0)) & 0xFF
        b >>= 1
    return r


def _tables(sub, coef):
    # out[r][x]: column word contributed by substituted byte x entering at row r
    out = np.zeros((4, 256), dtype=np.uint32)
    for r in range(4):
        for x in range(256):
            y = int(sub[x])
            word = 0
            for rr in range(4):
                word |= _gmul(y, coef[(r - rr) % 4]) << (8 * rr)
            out[r, x] = word
    return out


SBOX = _build_sbox()
INV_SBOX = np.argsort(SBOX).astype(np.uint8)
TE = _tables(SBOX, (2, 3, 1, 1))
TD = _tables(INV_SBOX, (14, 11, 13, 9))
_IMC = _tables(np.arange(256, dtype=np.uint8), (14, 11, 13, 9))
_SBOX32 = SBOX.astype(np.uint32)
_INV_SBOX32 = INV_SBOX.astype(np.uint32)
RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


def _byte(words, k):
    # byte k of each contiguous little-endian word, as a strided uint8 view
    return words.view(np.uint8)[k::4]


def _sub_word_rot(t, sub):
    return (
        np.take(sub, _byte(t, 1))
        | (np.take(sub, _byte(t, 2)) << np.uint32(8))
        | (np.take(sub, _byte(t, 3)) << np.uint32(16))
        | (np.take(sub, _byte(t, 0)) << np.uint32(24))
    )


def expand_keys(keys: np.ndarray) -> np.ndarray:
    """(N, 16) uint8 keys -> (11, 4, N) little-endian column words."""
    keys = np.ascontiguousarray(keys, dtype=np.uint8)
    n = keys.shape[0]
    kw = keys.view(_U32).reshape(n, 4)
    w = [np.ascontiguousarray(kw[:, c]) for c in range(4)]
    for i in range(4, 44):
        t = w[i - 1]
        if i % 4 == 0:
            t = _sub_word_rot(t, _SBOX32) ^ np.uint32(RCON[i // 4 - 1])
        w.append(w[i - 4] ^ t)
    return np.stack(w).reshape(11, 4, n)


def _columns(blocks):
    words = np.ascontiguousarray(blocks, dtype=np.uint8).view(_U32).reshape(-1, 4)
    return [np.ascontiguousarray(words[:, c]) for c in range(4)]


def _to_bytes(cols):
    return np.stack(cols, axis=1).astype(_U32, copy=False).view(np.uint8).reshape(-1, 16)


def _round(cols, tables, shifts, key):
    return [
        np.take(tables[0], _byte(cols[c], 0))
        ^ np.take(tables[1], _byte(cols[(c + shifts[1]) % 4], 1))
        ^ np.take(tables[2], _byte(cols[(c + shifts[2]) % 4], 2))
        ^ np.take(tables[3], _byte(cols[(c + shifts[3]) % 4], 3))
        ^ key[c]
        for c in range(4)
    ]


def _final(cols, sub, shifts, key):
    return [
        (
            np.take(sub, _byte(cols[c], 0))
            | (np.take(sub, _byte(cols[(c + shifts[1]) % 4], 1)) << np.uint32(8))
            | (np.take(sub, _byte(cols[(c + shifts[2]) % 4], 2)) << np.uint32(16))
            | (np.take(sub, _byte(cols[(c + shifts[3]) % 4], 3)) << np.uint32(24))
        )
        ^ key[c]
        for c in range(4)
    ]


_ENC_SHIFTS = (0, 1, 2, 3)
_DEC_SHIFTS = (0, 3, 2, 1)


def encrypt(blocks: np.ndarray, round_keys: np.ndarray) -> np.ndarray:
    cols = [c ^ k for c, k in zip(_columns(blocks), round_keys[0])]
    for r in range(1, 10):
        cols = _round(cols, TE, _ENC_SHIFTS, round_keys[r])
    return _to_bytes(_final(cols, _SBOX32, _ENC_SHIFTS, round_keys[10]))


def _inv_mix_word(w):
    return (
        np.take(_IMC[0], _byte(w, 0))
        ^ np.take(_IMC[1], _byte(w, 1))
        ^ np.take(_IMC[2], _byte(w, 2))
        ^ np.take(_IMC[3], _byte(w, 3))
    )


def decrypt(blocks: np.ndarray, round_keys: np.ndarray) -> np.ndarray:
    # equivalent inverse cipher: middle round keys pass through InvMixColumns
    cols = [c ^ k for c, k in zip(_columns(blocks), round_keys[10])]
    for r in range(9, 0, -1):
        key = [_inv_mix_word(np.ascontiguousarray(round_keys[r, c])) for c in range(4)]
        cols = _round(cols, TD, _DEC_SHIFTS, key)
    return _to_bytes(_final(cols, _INV_SBOX32, _DEC_SHIFTS, round_keys[0]))
