"""Recovering the tweak table from a memory engine through its two views.

First, a counter sequence written to one address shows the cipher is
deterministic per address (ECB-like, not a counter mode) and statistically
random. Then one fixed ciphertext is planted at many addresses and the
plaintexts read back: each pair differs by exactly ``T(a_i ^ a_j)``, which
is one linear equation per sample in the 30 unknown table rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Inconsistent, Underdetermined
from .gf2 import BitVec128, Gf2System
from .randomness import ALPHA, RandomnessResult, battery
from .tweak import ADDR_LIMIT, BLOCK, FIRST_BIT, TweakTable

DEFAULT_SAMPLES = 64
PROBE_CIPHERTEXT = bytes(BLOCK)


def probe_same_address(mem, p: int, count: int = 1024, start: int = 0) -> list[bytes]:
    """Write counters ``start, start+1, ...`` at ``p``; return each resulting ciphertext."""
    out = []
    for i in range(count):
        mem.write_plain(p, (start + i).to_bytes(BLOCK, "big"))
        out.append(mem.read_cipher(p, BLOCK))
    return out


def is_deterministic(mem, p: int, plaintext: bytes = bytes(BLOCK)) -> bool:
    """True when rewriting the same plaintext at ``p`` reproduces the ciphertext.

    A counter or nonce based mode would give a fresh ciphertext per write.
    """
    mem.write_plain(p, plaintext)
    first = mem.read_cipher(p, BLOCK)
    mem.write_plain(p, plaintext)
    return mem.read_cipher(p, BLOCK) == first


def classify_mode(mem, p: int) -> str:
    return "ecb" if is_deterministic(mem, p) else "ctr"


@dataclass
class SampleSet:
    reference: tuple[int, bytes]
    samples: list[tuple[int, bytes]] = field(default_factory=list)
    ciphertext: bytes = PROBE_CIPHERTEXT

    def __len__(self):
        return 1 + len(self.samples)

    def differences(self):
        """Yield ``(addr ^ addr_0, plaintext ^ plaintext_0)`` for every non-reference sample."""
        a0, m0 = self.reference
        v0 = int.from_bytes(m0, "big")
        for a, m in self.samples:
            yield a ^ a0, BitVec128(int.from_bytes(m, "big") ^ v0)


def random_addresses(seed: int, count: int, limit: int = ADDR_LIMIT, base: int = 0) -> list[int]:
    """``count`` distinct block addresses drawn uniformly from ``[base, base + limit)``."""
    nblocks = limit // BLOCK
    if count > nblocks:
        raise ValueError("more addresses requested than blocks available")
    rng = np.random.default_rng(seed)
    picked: dict[int, None] = {}
    while len(picked) < count:
        for b in rng.integers(0, nblocks, size=count - len(picked)):
            picked.setdefault(base + int(b) * BLOCK)
    return list(picked)


def collect_equal_cipher_samples(mem, addrs: list[int], c: bytes = PROBE_CIPHERTEXT) -> SampleSet:
    if not addrs:
        raise ValueError("need at least one address")
    if len(set(addrs)) != len(addrs):
        raise ValueError("addresses must be distinct")
    for a in addrs:
        mem.write_cipher(a, c)
    pts = []
    for a in addrs:
        if mem.read_cipher(a, BLOCK) != c:
            raise RuntimeError(f"ciphertext at {a:#x} did not stick")
        pts.append((a, mem.read_plain(a, BLOCK)))
    return SampleSet(pts[0], pts[1:], c)


def build_system(samples: SampleSet) -> Gf2System:
    system = Gf2System()
    for da, dm in samples.differences():
        system.add_row(da >> FIRST_BIT, dm)
    return system


def recover_tweak(samples: SampleSet) -> TweakTable:
    """Solve for the table; raises :class:`Inconsistent` or :class:`Underdetermined`."""
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    return TweakTable(tuple(build_system(samples).solve()))


def linearity_holds(samples: SampleSet, table: TweakTable) -> bool:
    """Check every pair, not just pairs against the reference."""
    pts = [samples.reference, *samples.samples]
    vals = [(a, BitVec128.from_bytes(m)) for a, m in pts]
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            (ai, mi), (aj, mj) = vals[i], vals[j]
            if mi ^ mj != table.tweak(ai ^ aj):
                return False
    return True


@dataclass
class RecoveryReport:
    sample_count: int
    rank: int
    verdict: str
    table: TweakTable | None = None
    tests: list[RandomnessResult] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"sample_count={self.sample_count}",
            f"rank={self.rank}",
            f"verdict={self.verdict}",
        ]
        for t in self.tests:
            lines.append(f"test.{t.name}.p_value={t.p_value:.6f}")
            lines.append(f"test.{t.name}.passed={t.passed}")
        if self.table is not None:
            lines += [f"t{i + FIRST_BIT}={row.hex()}" for i, row in enumerate(self.table.rows)]
        return "\n".join(lines) + "\n"


def run_recovery(mem, addrs: list[int], probe_addr: int | None = None, probe_count: int = 1024,
                 alpha: float = ALPHA) -> RecoveryReport:
    """Full pipeline: randomness probe (optional), sample collection, elimination."""
    tests = []
    if probe_addr is not None:
        tests = battery(probe_same_address(mem, probe_addr, probe_count), alpha)
    samples = collect_equal_cipher_samples(mem, addrs)
    system = Gf2System()
    try:
        for da, dm in samples.differences():
            system.add_row(da >> FIRST_BIT, dm)
        table = TweakTable(tuple(system.solve()))
    except Inconsistent:
        return RecoveryReport(len(samples), system.rank, "Inconsistent", None, tests)
    except Underdetermined as exc:
        return RecoveryReport(len(samples), exc.rank, "Underdetermined", None, tests)
    return RecoveryReport(len(samples), system.rank, "Recovered", table, tests)
