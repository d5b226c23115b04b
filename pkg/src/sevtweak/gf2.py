"""Bit-vector and bit-matrix arithmetic over GF(2).

Only the shape needed for tweak recovery is supported: 30 unknowns, each a
128-bit vector. Coefficient rows are plain ints (bit j = unknown j); the
right-hand sides are :class:`BitVec128` values.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import Inconsistent, Underdetermined

NUM_UNKNOWNS = 30
_MASK128 = (1 << 128) - 1


@dataclass(frozen=True, slots=True)
class BitVec128:
    """A 128-bit vector over GF(2).

    ``value`` holds the bits big-endian, so byte 0 of :meth:`to_bytes` is the
    lowest-addressed byte of the memory block, matching hex dumps.
    """

    value: int = 0

    def __post_init__(self):
        if not 0 <= self.value <= _MASK128:
            raise ValueError("BitVec128 value out of range")

    @classmethod
    def from_bytes(cls, data: bytes) -> BitVec128:
        if len(data) != 16:
            raise ValueError(f"expected 16 bytes, got {len(data)}")
        return cls(int.from_bytes(data, "big"))

    @classmethod
    def from_hex(cls, text: str) -> BitVec128:
        return cls.from_bytes(bytes.fromhex(text))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(16, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def dump(self) -> str:
        """Space-separated lowercase bytes, e.g. ``82 25 38 38 ...``."""
        return " ".join(f"{b:02x}" for b in self.to_bytes())

    def __xor__(self, other: BitVec128) -> BitVec128:
        return BitVec128(self.value ^ other.value)

    def __bool__(self):
        return self.value != 0

    def __repr__(self):
        return f"BitVec128({self.hex()})"


ZERO = BitVec128(0)


def xor(a: BitVec128, b: BitVec128) -> BitVec128:
    return a ^ b


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    n = len(a)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(n, "big")


class Gf2System:
    """Incrementally row-reduced system ``sum_j c_j * t_j = rhs``.

    Each stored row is keyed by its pivot, the lowest set coefficient bit.
    Incoming rows are reduced against every stored pivot, so a row that
    reduces to zero coefficients is either redundant or a contradiction.
    """

    def __init__(self):
        self._rows: dict[int, tuple[int, int]] = {}
        self.row_count = 0

    @property
    def rank(self) -> int:
        return len(self._rows)

    def add_row(self, coeffs: int, rhs: BitVec128) -> bool:
        """Add one equation; return True if it raised the rank.

        Raises :class:`Inconsistent` when the row reduces to ``0 = nonzero``.
        The system is left unchanged in that case.
        """
        if not 0 <= coeffs < (1 << NUM_UNKNOWNS):
            raise ValueError("coeffs must fit in 30 bits")
        r = rhs.value
        c = coeffs
        while c:
            pivot = (c & -c).bit_length() - 1
            row = self._rows.get(pivot)
            if row is None:
                break
            c ^= row[0]
            r ^= row[1]
        self.row_count += 1
        if c == 0:
            if r != 0:
                self.row_count -= 1
                raise Inconsistent("row reduces to 0 = nonzero")
            return False
        pivot = (c & -c).bit_length() - 1
        self._rows[pivot] = (c, r)
        return True

    def free_unknowns(self) -> list[int]:
        return [j for j in range(NUM_UNKNOWNS) if j not in self._rows]

    def solve(self) -> list[BitVec128]:
        """Back-substitute and return the 30 unknowns in index order."""
        if self.rank < NUM_UNKNOWNS:
            raise Underdetermined(self.rank, self.free_unknowns())
        values = [0] * NUM_UNKNOWNS
        # every non-pivot bit of a row sits above its pivot
        for pivot in sorted(self._rows, reverse=True):
            c, r = self._rows[pivot]
            rest = c & ~(1 << pivot)
            while rest:
                j = (rest & -rest).bit_length() - 1
                r ^= values[j]
                rest &= rest - 1
            values[pivot] = r
        return [BitVec128(v) for v in values]
