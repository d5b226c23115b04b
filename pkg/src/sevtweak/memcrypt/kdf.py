"""Counter-mode key derivation (NIST SP 800-108) with AES-CMAC as the PRF.

Fixed input per derived key::

    [1]_32 || label || 0x00 || block_address_64 || [128]_32

One PRF call yields the whole 128-bit key. ``derive_key`` goes through
``cryptography``'s CMAC; ``derive_keys`` is the same computation batched
over many addresses, with CMAC's CBC chain written out so every step is a
single bulk ECB call under the VEK.
"""

import struct

import numpy as np
from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

OUT_BITS = 128


def fixed_input(label: bytes, addr: int) -> bytes:
    return struct.pack(">I", 1) + label + b"\x00" + struct.pack(">Q", addr) + struct.pack(">I", OUT_BITS)


def derive_key(vek: bytes, label: bytes, addr: int) -> bytes:
    mac = cmac.CMAC(algorithms.AES(vek))
    mac.update(fixed_input(label, addr))
    return mac.finalize()


def _dbl(block: bytes) -> bytes:
    v = int.from_bytes(block, "big") << 1
    if v >> 128:
        v ^= (1 << 128) | 0x87
    return v.to_bytes(16, "big")


def _subkeys(ecb) -> tuple[bytes, bytes]:
    k1 = _dbl(ecb.update(bytes(16)))
    return k1, _dbl(k1)


def derive_keys(vek: bytes, label: bytes, addrs) -> np.ndarray:
    """Batched :func:`derive_key`; returns an (N, 16) uint8 array."""
    addrs = np.asarray(addrs, dtype=np.uint64)
    n = addrs.size
    prefix = struct.pack(">I", 1) + label + b"\x00"
    msg_len = len(prefix) + 8 + 4
    msgs = np.empty((n, msg_len), dtype=np.uint8)
    msgs[:, : len(prefix)] = np.frombuffer(prefix, dtype=np.uint8)
    msgs[:, len(prefix) : len(prefix) + 8] = addrs.astype(">u8").view(np.uint8).reshape(n, 8)
    msgs[:, len(prefix) + 8 :] = np.frombuffer(struct.pack(">I", OUT_BITS), dtype=np.uint8)

    ecb = Cipher(algorithms.AES(vek), modes.ECB()).encryptor()
    k1, k2 = _subkeys(ecb)
    nblocks = -(-msg_len // 16)
    pad = nblocks * 16 - msg_len
    if pad:
        tail = np.zeros((n, pad), dtype=np.uint8)
        tail[:, 0] = 0x80
        msgs = np.concatenate([msgs, tail], axis=1)
        last_key = k2
    else:
        last_key = k1
    blocks = msgs.reshape(n, nblocks, 16)

    state = np.zeros((n, 16), dtype=np.uint8)
    for j in range(nblocks):
        x = state ^ blocks[:, j]
        if j == nblocks - 1:
            x ^= np.frombuffer(last_key, dtype=np.uint8)
        state = np.frombuffer(ecb.update(x.tobytes()), dtype=np.uint8).reshape(n, 16)
    return state
