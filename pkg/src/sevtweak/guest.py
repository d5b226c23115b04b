"""A simulated encrypted guest and the two channels an attacker gets into it.

* ``inject`` stands in for an HTTP server inside the guest that keeps the
  last request body resident in one page: the data goes through the guest's
  plaintext view, so it is encrypted under the guest's key.
* ``hv_read_cipher`` / ``hv_write_cipher`` are the hypervisor's raw
  ciphertext mapping of guest memory.

``victim_check`` reports what the guest would now execute at the victim
code location. Positions of the bridge and victim stay private; tests reach
them through :func:`whitebox`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import PageCountTooSmall, PayloadTooLarge, UnalignedLength
from .memcrypt import PAGE_SIZE, EncryptedMemory, EngineConfig, Mode
from .tweak import BLOCK, TweakTable

BRIDGE_GROUPS = 62
BRIDGE_BYTES = BRIDGE_GROUPS * BLOCK
SHELLCODE_LEN = 48
MIN_PAGES = 8

DEFAULT_BRIDGE_OFFSET = 0x150
# in-page offset of the authentication code in the sshd dump (0xDE90)
DEFAULT_CC_OFFSET = 0xE90

# first 48 bytes of the sshd authentication routine
VICTIM_CODE = bytes.fromhex(
    "80 00 00 00 42 8B 3C B8 E8 C3 D4 FF"
    "FF 85 C0 89 C5 0F 88 F4 01 00 00 89"
    "C7 E3 D2 C3 04 00 83 C0 01 0F 84 43"
    "02 00 00 44 8B 35 3A BF 2B 00 45 39"
)

# inert placeholder: nop sled, a marker string, int3 padding
DEFAULT_SHELLCODE = b"\x90" * 8 + b"SEV-INJECTED-SHELLCODE-PLACEHOLDER" + b"\xcc" * 6


class VictimState(enum.Enum):
    AUTH_INTACT = "AuthIntact"
    SHELLCODE_ACTIVE = "ShellcodeActive"
    CORRUPTED = "Corrupted"


def check_shellcode(shellcode: bytes) -> bytes:
    shellcode = bytes(shellcode)
    if len(shellcode) != SHELLCODE_LEN:
        raise ValueError(f"shellcode must be exactly {SHELLCODE_LEN} bytes, got {len(shellcode)}")
    return shellcode


@dataclass
class Scenario:
    """Everything needed to rebuild one guest, plus what the attacker knows."""

    seed: int = 0
    page_count: int = 4096
    mode: Mode = Mode.VULNERABLE
    bridge_offset: int = DEFAULT_BRIDGE_OFFSET
    cc_offset: int = DEFAULT_CC_OFFSET
    victim_blob: bytes = VICTIM_CODE
    cc: bytes | None = None
    shellcode: bytes = DEFAULT_SHELLCODE
    dup_rate: float = 0.0

    def __post_init__(self):
        if self.cc is None:
            self.cc = self.victim_blob[:BLOCK]
        check_shellcode(self.shellcode)
        if len(self.cc) != BLOCK:
            raise ValueError("characteristic code is 16 bytes")

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bytes):
                v = v.hex()
            elif isinstance(v, Mode):
                v = v.value
            elif f.name in ("bridge_offset", "cc_offset"):
                v = hex(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> Scenario:
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in kinds:
                raise ValueError(f"line {lineno}: unknown or malformed entry {line!r}")
            if key in ("victim_blob", "cc", "shellcode"):
                kw[key] = bytes.fromhex(value)
            elif key == "mode":
                kw[key] = Mode(value.lower())
            elif key == "dup_rate":
                kw[key] = float(value)
            else:
                kw[key] = int(value, 0)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> Scenario:
        return cls.loads(Path(path).read_text())


class GuestImage:
    def __init__(
        self,
        mem: EncryptedMemory,
        page_count: int,
        bridge_page: int,
        bridge_offset: int,
        victim_page: int,
        cc_offset: int,
        victim_blob: bytes,
    ):
        if bridge_offset % BLOCK or bridge_offset + BRIDGE_BYTES > PAGE_SIZE:
            raise ValueError("bridge region must be 16-aligned and fit in one page")
        if cc_offset % BLOCK or cc_offset + len(victim_blob) > PAGE_SIZE:
            raise ValueError("victim region must be 16-aligned and fit in one page")
        if len(victim_blob) < SHELLCODE_LEN:
            raise ValueError("victim blob must cover at least 48 bytes")
        if bridge_page == victim_page:
            raise ValueError("bridge and victim must live in different pages")
        self.page_count = page_count
        self.size_bytes = page_count * PAGE_SIZE
        self._mem = mem
        self._bridge_addr = bridge_page * PAGE_SIZE + bridge_offset
        self._victim_addr = victim_page * PAGE_SIZE + cc_offset
        self._victim_blob = bytes(victim_blob)

    def inject(self, payload: bytes) -> None:
        payload = bytes(payload)
        if len(payload) > BRIDGE_BYTES:
            raise PayloadTooLarge(f"{len(payload)} bytes exceed the {BRIDGE_BYTES}-byte bridge")
        if len(payload) % BLOCK:
            raise UnalignedLength("payload length must be a multiple of 16")
        self._mem.write_plain(self._bridge_addr, payload)

    def hv_read_cipher(self, p: int, n: int) -> bytes:
        return self._mem.read_cipher(p, n)

    def hv_write_cipher(self, p: int, data: bytes) -> None:
        self._mem.write_cipher(p, data)

    def victim_check(self, shellcode: bytes) -> VictimState:
        code = self._mem.read_plain(self._victim_addr, SHELLCODE_LEN)
        if code == bytes(shellcode):
            return VictimState.SHELLCODE_ACTIVE
        if code == self._victim_blob[:SHELLCODE_LEN]:
            return VictimState.AUTH_INTACT
        return VictimState.CORRUPTED


class HypervisorView:
    """The only handle the attack code holds: four channel operations and the memory size."""

    __slots__ = ("_guest", "page_count", "size_bytes")

    def __init__(self, guest: GuestImage):
        self._guest = guest
        self.page_count = guest.page_count
        self.size_bytes = guest.size_bytes

    def inject(self, payload: bytes) -> None:
        self._guest.inject(payload)

    def hv_read_cipher(self, p: int, n: int) -> bytes:
        return self._guest.hv_read_cipher(p, n)

    def hv_write_cipher(self, p: int, data: bytes) -> None:
        self._guest.hv_write_cipher(p, data)

    def victim_check(self, shellcode: bytes) -> VictimState:
        return self._guest.victim_check(shellcode)


def hypervisor_view(guest) -> HypervisorView:
    return guest if isinstance(guest, HypervisorView) else HypervisorView(guest)


@dataclass(frozen=True)
class WhiteBox:
    """Test-only look behind the channels."""

    mem: EncryptedMemory
    engine: EngineConfig
    bridge_addr: int
    victim_addr: int
    victim_blob: bytes = field(repr=False)


def whitebox(guest: GuestImage) -> WhiteBox:
    return WhiteBox(
        guest._mem, guest._mem.engine, guest._bridge_addr, guest._victim_addr, guest._victim_blob
    )


def new_guest(
    seed: int,
    page_count: int = 4096,
    *,
    mode: Mode = Mode.VULNERABLE,
    table: TweakTable | None = None,
    bridge_offset: int = DEFAULT_BRIDGE_OFFSET,
    cc_offset: int = DEFAULT_CC_OFFSET,
    victim_blob: bytes = VICTIM_CODE,
    dup_rate: float = 0.0,
) -> GuestImage:
    """Build a guest whose memory is pseudorandom "OS" content.

    ``dup_rate`` is the fraction of filler pages turned into decoys: pages
    whose plaintext is a constant block XORed with each slot's in-page
    tweak, so every ciphertext block in the page is identical. They mimic
    a bridge run and exercise the ambiguous-bridge path. Decoys need the
    tweak table, so they only appear on the vulnerable engine.
    """
    if page_count < MIN_PAGES:
        raise PageCountTooSmall(f"need at least {MIN_PAGES} pages, got {page_count}")
    if not 0.0 <= dup_rate <= 1.0:
        raise ValueError("dup_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    vek = rng.bytes(16)
    if mode is Mode.VULNERABLE:
        engine = EngineConfig.vulnerable(vek, table)
    else:
        engine = EngineConfig.mitigated(vek)
    bridge_page, victim_page = (int(x) for x in rng.choice(page_count, size=2, replace=False))

    size = page_count * PAGE_SIZE
    fill = np.frombuffer(rng.bytes(size), dtype=np.uint8).reshape(page_count, PAGE_SIZE // BLOCK, BLOCK)
    fill = fill.copy()
    decoys = np.flatnonzero(rng.random(page_count) < dup_rate)
    if mode is Mode.VULNERABLE:
        in_page = engine.table.tweak_many(np.arange(0, PAGE_SIZE, BLOCK))
        for page in decoys:
            if page in (bridge_page, victim_page):
                continue
            fill[page] = np.frombuffer(rng.bytes(BLOCK), dtype=np.uint8) ^ in_page

    mem = EncryptedMemory(engine, size)
    mem.write_plain(0, fill.reshape(-1))
    victim_addr = victim_page * PAGE_SIZE + cc_offset
    mem.write_plain(victim_addr, bytes(victim_blob))
    return GuestImage(mem, page_count, bridge_page, bridge_offset, victim_page, cc_offset, victim_blob)


def guest_from_scenario(scenario: Scenario, table: TweakTable | None = None) -> GuestImage:
    return new_guest(
        scenario.seed,
        scenario.page_count,
        mode=scenario.mode,
        table=table,
        bridge_offset=scenario.bridge_offset,
        cc_offset=scenario.cc_offset,
        victim_blob=scenario.victim_blob,
        dup_rate=scenario.dup_rate,
    )

