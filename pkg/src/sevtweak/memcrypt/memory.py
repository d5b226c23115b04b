"""Physical memory holding ciphertext, with the two C-bit views.

``write_plain``/``read_plain`` are what a mapping with the C-bit set sees:
data is encrypted on store and decrypted on load at its own block address.
``write_cipher``/``read_cipher`` are the C-bit-clear view: raw ciphertext.

Storage is sparse by 4 KiB page. Never-written bytes hold zero ciphertext.
"""

from __future__ import annotations

import numpy as np

from ..errors import AddressOutOfRange, UnalignedAccess
from ..tweak import ADDR_LIMIT, BLOCK
from .engine import EngineConfig, decrypt_blocks, encrypt_blocks

PAGE_SIZE = 4096
_PAGE_SHIFT = 12


class EncryptedMemory:
    """Single-writer store; callers serialize mutation themselves."""

    def __init__(self, engine: EngineConfig, size_bytes: int = ADDR_LIMIT):
        if not 0 < size_bytes <= ADDR_LIMIT or size_bytes % PAGE_SIZE:
            raise ValueError("size must be a positive multiple of 4 KiB within 2**34")
        self.engine = engine
        self.size_bytes = size_bytes
        self._pages: dict[int, np.ndarray] = {}

    def _check(self, p: int, n: int) -> None:
        if p % BLOCK or n % BLOCK:
            raise UnalignedAccess(f"access at {p:#x}+{n} is not 16-byte aligned")
        if p < 0 or n < 0 or p + n > self.size_bytes:
            raise AddressOutOfRange(f"access at {p:#x}+{n} outside {self.size_bytes:#x} bytes")

    def _addrs(self, p: int, n: int) -> np.ndarray:
        return np.arange(p, p + n, BLOCK, dtype=np.uint64)

    def read_cipher_array(self, p: int, n: int) -> np.ndarray:
        self._check(p, n)
        out = np.zeros(n, dtype=np.uint8)
        pos = p
        while pos < p + n:
            page = pos >> _PAGE_SHIFT
            lo = pos - (page << _PAGE_SHIFT)
            take = min(PAGE_SIZE - lo, p + n - pos)
            stored = self._pages.get(page)
            if stored is not None:
                out[pos - p : pos - p + take] = stored[lo : lo + take]
            pos += take
        return out

    def write_cipher_array(self, p: int, data: np.ndarray) -> None:
        data = np.asarray(data, dtype=np.uint8).reshape(-1)
        self._check(p, data.size)
        pos = p
        end = p + data.size
        while pos < end:
            page = pos >> _PAGE_SHIFT
            lo = pos - (page << _PAGE_SHIFT)
            take = min(PAGE_SIZE - lo, end - pos)
            stored = self._pages.get(page)
            if stored is None:
                stored = self._pages[page] = np.zeros(PAGE_SIZE, dtype=np.uint8)
            stored[lo : lo + take] = data[pos - p : pos - p + take]
            pos += take

    def read_cipher(self, p: int, n: int) -> bytes:
        return self.read_cipher_array(p, n).tobytes()

    def write_cipher(self, p: int, data: bytes) -> None:
        self.write_cipher_array(p, np.frombuffer(bytes(data), dtype=np.uint8))

    def write_plain(self, p: int, data: bytes) -> None:
        arr = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) else data
        arr = np.asarray(arr, dtype=np.uint8).reshape(-1)
        self._check(p, arr.size)
        if arr.size:
            self.write_cipher_array(p, encrypt_blocks(self.engine, arr, self._addrs(p, arr.size)))

    def read_plain(self, p: int, n: int) -> bytes:
        c = self.read_cipher_array(p, n)
        if not n:
            return b""
        return decrypt_blocks(self.engine, c, self._addrs(p, n)).tobytes()

    def hexdump(self, p: int, n: int, view: str = "cipher") -> str:
        """``address: 16 bytes`` per line, in either view."""
        if view == "cipher":
            data = self.read_cipher(p, n)
        elif view == "plain":
            data = self.read_plain(p, n)
        else:
            raise ValueError("view is 'cipher' or 'plain'")
        return hexdump(data, p)


def hexdump(data: bytes, base: int = 0) -> str:
    lines = []
    for off in range(0, len(data), BLOCK):
        chunk = data[off : off + BLOCK]
        lines.append(f"{base + off:09x}: " + " ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines) + ("\n" if lines else "")
