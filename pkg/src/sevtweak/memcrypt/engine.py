"""Block encryption as seen by the memory controller.

Vulnerable mode mirrors the measured hardware: the block's tweak is XORed
into the plaintext, then the result goes through AES-128-ECB under the VEK.
Mitigated mode drops the tweak and instead encrypts under a per-address key
derived from the VEK.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ..errors import UnalignedAccess
from ..tweak import BLOCK, TweakTable, check_addr
from . import _aes, kdf

DEFAULT_KDF_LABEL = b"sevtweak address-keyed memory encryption"


class Mode(enum.Enum):
    VULNERABLE = "vulnerable"
    MITIGATED = "mitigated"


@dataclass(frozen=True)
class EngineConfig:
    mode: Mode
    vek: bytes
    table: TweakTable | None = None
    kdf_label: bytes = DEFAULT_KDF_LABEL

    def __post_init__(self):
        if len(self.vek) != 16:
            raise ValueError("VEK must be 16 bytes")
        if self.mode is Mode.VULNERABLE and self.table is None:
            raise ValueError("vulnerable engine needs a tweak table")

    @classmethod
    def vulnerable(cls, vek: bytes, table: TweakTable | None = None) -> EngineConfig:
        return cls(Mode.VULNERABLE, vek, table if table is not None else TweakTable.default())

    @classmethod
    def mitigated(cls, vek: bytes, label: bytes = DEFAULT_KDF_LABEL) -> EngineConfig:
        return cls(Mode.MITIGATED, vek, None, label)

    def _ecb(self):
        return Cipher(algorithms.AES(self.vek), modes.ECB())


def _check_block_addr(p: int) -> int:
    check_addr(p)
    if p % BLOCK:
        raise UnalignedAccess(f"address {p:#x} is not 16-byte aligned")
    return p


def _as_blocks(data) -> np.ndarray:
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else data
    return np.asarray(arr, dtype=np.uint8).reshape(-1, BLOCK)


def encrypt_blocks(engine: EngineConfig, blocks, addrs) -> np.ndarray:
    """Encrypt an (N, 16) array, block i at block address ``addrs[i]``."""
    blocks = _as_blocks(blocks)
    addrs = np.asarray(addrs, dtype=np.uint64)
    if engine.mode is Mode.VULNERABLE:
        x = blocks ^ engine.table.tweak_many(addrs)
        out = engine._ecb().encryptor().update(x.tobytes())
        return np.frombuffer(out, dtype=np.uint8).reshape(-1, BLOCK)
    keys = kdf.derive_keys(engine.vek, engine.kdf_label, addrs)
    return _aes.encrypt(blocks, _aes.expand_keys(keys))


def decrypt_blocks(engine: EngineConfig, blocks, addrs) -> np.ndarray:
    blocks = _as_blocks(blocks)
    addrs = np.asarray(addrs, dtype=np.uint64)
    if engine.mode is Mode.VULNERABLE:
        x = engine._ecb().decryptor().update(blocks.tobytes())
        return np.frombuffer(x, dtype=np.uint8).reshape(-1, BLOCK) ^ engine.table.tweak_many(addrs)
    keys = kdf.derive_keys(engine.vek, engine.kdf_label, addrs)
    return _aes.decrypt(blocks, _aes.expand_keys(keys))


def encrypt_block(engine: EngineConfig, m: bytes, p: int) -> bytes:
    _check_block_addr(p)
    if len(m) != BLOCK:
        raise ValueError("a block is 16 bytes")
    if engine.mode is Mode.VULNERABLE:
        t = engine.table.tweak(p).to_bytes()
        x = bytes(a ^ b for a, b in zip(m, t))
        return engine._ecb().encryptor().update(x)
    key = kdf.derive_key(engine.vek, engine.kdf_label, p)
    return Cipher(algorithms.AES(key), modes.ECB()).encryptor().update(bytes(m))


def decrypt_block(engine: EngineConfig, c: bytes, p: int) -> bytes:
    _check_block_addr(p)
    if len(c) != BLOCK:
        raise ValueError("a block is 16 bytes")
    if engine.mode is Mode.VULNERABLE:
        x = engine._ecb().decryptor().update(bytes(c))
        t = engine.table.tweak(p).to_bytes()
        return bytes(a ^ b for a, b in zip(x, t))
    key = kdf.derive_key(engine.vek, engine.kdf_label, p)
    return Cipher(algorithms.AES(key), modes.ECB()).decryptor().update(bytes(c))
