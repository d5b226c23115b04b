"""Three tests from the NIST SP 800-22 battery: frequency, block frequency, runs."""

from __future__ import annotations

from dataclasses import dataclass
from math import erfc, sqrt

import numpy as np
from scipy.special import gammaincc

ALPHA = 0.01


@dataclass(frozen=True)
class RandomnessResult:
    name: str
    p_value: float
    alpha: float = ALPHA

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha


def to_bits(data) -> np.ndarray:
    if isinstance(data, (list, tuple)):
        data = b"".join(data)
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def monobit(bits: np.ndarray) -> float:
    n = bits.size
    s = 2 * int(np.count_nonzero(bits)) - n
    return erfc(abs(s) / sqrt(2 * n))


def block_frequency(bits: np.ndarray, block_size: int = 128) -> float:
    nblocks = bits.size // block_size
    if nblocks == 0:
        raise ValueError("sequence shorter than one block")
    pi = bits[: nblocks * block_size].reshape(nblocks, block_size).mean(axis=1)
    chi2 = 4.0 * block_size * float(np.sum((pi - 0.5) ** 2))
    return float(gammaincc(nblocks / 2.0, chi2 / 2.0))


def runs(bits: np.ndarray) -> float:
    n = bits.size
    pi = np.count_nonzero(bits) / n
    # frequency prerequisite; the test is not applicable when it fails
    if abs(pi - 0.5) >= 2 / sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(np.diff(bits.astype(np.int8))))
    return erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * sqrt(2 * n) * pi * (1 - pi)))


def battery(data, alpha: float = ALPHA) -> list[RandomnessResult]:
    bits = to_bits(data)
    return [
        RandomnessResult("monobit", monobit(bits), alpha),
        RandomnessResult("block_frequency", block_frequency(bits), alpha),
        RandomnessResult("runs", runs(bits), alpha),
    ]
