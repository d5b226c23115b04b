"""The physical-address tweak ``T(x) = XOR of t_i over set bits i of x``.

Only address bits 4..33 take part: bits 0..3 select a byte inside a 16-byte
block and the measured table stops at bit 33.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import AddressOutOfRange
from .gf2 import BitVec128, NUM_UNKNOWNS

ADDR_BITS = 34
ADDR_LIMIT = 1 << ADDR_BITS
FIRST_BIT = 4
BLOCK = 16

_LINE = re.compile(r"^t(\d+):\s*([0-9a-fA-F]{32})$")


def check_addr(addr: int) -> int:
    if not 0 <= addr < ADDR_LIMIT:
        raise AddressOutOfRange(f"address {addr:#x} outside the 34-bit physical space")
    return addr


@dataclass(frozen=True)
class TweakTable:
    rows: tuple[BitVec128, ...]

    def __post_init__(self):
        if len(self.rows) != NUM_UNKNOWNS:
            raise ValueError(f"a tweak table has {NUM_UNKNOWNS} rows, got {len(self.rows)}")
        object.__setattr__(self, "rows", tuple(self.rows))

    def __getitem__(self, bit: int) -> BitVec128:
        """Row for address bit ``bit`` (4..33)."""
        if not FIRST_BIT <= bit < ADDR_BITS:
            raise IndexError(bit)
        return self.rows[bit - FIRST_BIT]

    def tweak(self, addr: int) -> BitVec128:
        return tweak_of(self, addr)

    def as_array(self) -> np.ndarray:
        return np.frombuffer(b"".join(r.to_bytes() for r in self.rows), dtype=np.uint8).reshape(
            NUM_UNKNOWNS, BLOCK
        )

    def tweak_many(self, addrs) -> np.ndarray:
        """Vectorized tweak for an array of addresses; returns an (N, 16) uint8 array."""
        addrs = np.asarray(addrs, dtype=np.uint64)
        if addrs.size and int(addrs.max()) >= ADDR_LIMIT:
            raise AddressOutOfRange("address outside the 34-bit physical space")
        luts = self._luts
        idx = addrs >> np.uint64(FIRST_BIT)
        out = np.zeros((addrs.size, BLOCK), dtype=np.uint8)
        for k, lut in enumerate(luts):
            chunk = ((idx >> np.uint64(8 * k)) & np.uint64(0xFF)).astype(np.intp)
            out ^= lut[chunk]
        return out

    @cached_property
    def _luts(self) -> list[np.ndarray]:
        # 30 index bits split into four byte-wide lookup tables
        rows = self.as_array()
        luts = []
        for k in range(4):
            lut = np.zeros((256, BLOCK), dtype=np.uint8)
            for b in range(8):
                j = 8 * k + b
                if j < NUM_UNKNOWNS:
                    lut[(np.arange(256) >> b) & 1 == 1] ^= rows[j]
            luts.append(lut)
        return luts

    def dumps(self) -> str:
        return "".join(f"t{i + FIRST_BIT}: {row.hex()}\n" for i, row in enumerate(self.rows))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> TweakTable:
        found: dict[int, BitVec128] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            m = _LINE.match(line)
            if m is None:
                raise ValueError(f"line {lineno}: expected 't<index>: <32 hex chars>'")
            bit = int(m.group(1))
            if not FIRST_BIT <= bit < ADDR_BITS or bit in found:
                raise ValueError(f"line {lineno}: bad or duplicate index t{bit}")
            found[bit] = BitVec128.from_hex(m.group(2))
        missing = [b for b in range(FIRST_BIT, ADDR_BITS) if b not in found]
        if missing:
            raise ValueError(f"missing rows: {missing}")
        return cls(tuple(found[b] for b in range(FIRST_BIT, ADDR_BITS)))

    @classmethod
    def load(cls, path) -> TweakTable:
        return cls.loads(Path(path).read_text())

    @classmethod
    def default(cls) -> TweakTable:
        """The measured hardware table bundled with the package."""
        return cls.loads(resources.files("sevtweak").joinpath("data/table1.txt").read_text())


def tweak_of(table: TweakTable, addr: int) -> BitVec128:
    check_addr(addr)
    acc = 0
    bits = addr >> FIRST_BIT
    j = 0
    while bits:
        if bits & 1:
            acc ^= table.rows[j].value
        bits >>= 1
        j += 1
    return BitVec128(acc)


def random_table(seed: int) -> TweakTable:
    """Thirty pseudorandom nonzero rows, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    rows = []
    while len(rows) < NUM_UNKNOWNS:
        v = BitVec128.from_bytes(rng.bytes(BLOCK))
        if v:
            rows.append(v)
    return TweakTable(tuple(rows))
