import math

import numpy as np
import pytest

from sevtweak.attack import (
    AttackPlan,
    bridge_payload,
    cc_candidates,
    find_bridge,
    find_bridge_candidates,
    find_cc,
    inject_shellcode,
    run_attack,
    scan_bridge_runs,
    shellcode_payload,
)
from sevtweak.errors import AmbiguousBridge, BridgeNotFound, CcNotFound
from sevtweak.guest import HypervisorView, Scenario, VictimState, guest_from_scenario, whitebox
from sevtweak.memcrypt import PAGE_SIZE, Mode, encrypt_block
from sevtweak.tweak import TweakTable

PAGES = 512


def _setup(seed, mode=Mode.VULNERABLE, pages=PAGES, **kw):
    sc = Scenario(seed=seed, page_count=pages, mode=mode, **kw)
    return sc, guest_from_scenario(sc), AttackPlan.from_scenario(sc, TweakTable.default())


def equal_runs(dump: bytes, min_len: int = 62):
    """Exhaustive oracle: maximal runs of identical consecutive 16-byte blocks anywhere in the dump."""
    blocks = [dump[i : i + 16] for i in range(0, len(dump), 16)]
    found, start = [], 0
    for i in range(1, len(blocks) + 1):
        if i == len(blocks) or blocks[i] != blocks[start]:
            if i - start >= min_len:
                found.append((start * 16, i - start))
            start = i
    return found


class RecordingView:
    """Wraps a view and logs every attribute the attack touches."""

    allowed = {"inject", "hv_read_cipher", "hv_write_cipher", "victim_check", "page_count", "size_bytes"}

    def __init__(self, guest):
        object.__setattr__(self, "_inner", HypervisorView(guest))
        object.__setattr__(self, "touched", set())

    def __getattr__(self, name):
        self.touched.add(name)
        return getattr(self._inner, name)


def test_page_bits_cancel_across_the_bridge(table1, rng):
    # T(page + o) ^ T(o) is the same for every in-page offset o
    for page in rng.integers(0, 1 << 22, size=50).tolist():
        base = page * PAGE_SIZE
        common = table1.tweak(base)
        for o in range(0x150, 0x150 + 62 * 16, 16):
            assert table1.tweak(base + o) ^ table1.tweak(o) == common


def test_bridge_payload_encrypts_to_one_block_anywhere(table1, rng):
    from sevtweak.memcrypt import EngineConfig

    eng = EngineConfig.vulnerable(rng.bytes(16), table1)
    payload = bridge_payload(table1, 0x150)
    for page in rng.integers(0, 1 << 22, size=10).tolist():
        base = page * PAGE_SIZE + 0x150
        cts = {encrypt_block(eng, payload[16 * i : 16 * i + 16], base + 16 * i) for i in range(62)}
        assert len(cts) == 1


@pytest.mark.parametrize("seed", range(5))
def test_find_bridge_matches_whitebox(seed):
    sc, g, plan = _setup(seed)
    assert find_bridge(g, plan.table, sc.bridge_offset) == whitebox(g).bridge_addr


def test_exactly_one_62_run_in_dump():
    sc, g, plan = _setup(21)
    view = HypervisorView(g)
    view.inject(bridge_payload(plan.table, sc.bridge_offset))
    dump = view.hv_read_cipher(0, view.size_bytes)
    assert equal_runs(dump) == [(whitebox(g).bridge_addr, 62)]
    assert scan_bridge_runs(dump, sc.bridge_offset) == [whitebox(g).bridge_addr]


def test_wrong_offset_assumption_finds_nothing():
    sc, g, plan = _setup(4)
    with pytest.raises(BridgeNotFound):
        find_bridge(g, plan.table, sc.bridge_offset + 16)


def test_mitigated_bridge_not_found():
    for seed in range(20):
        sc, g, plan = _setup(seed, Mode.MITIGATED, pages=64)
        with pytest.raises(BridgeNotFound):
            find_bridge(g, plan.table, sc.bridge_offset)


def test_decoys_make_bridge_ambiguous_but_attack_survives():
    sc, g, plan = _setup(8, pages=256, dup_rate=0.02)
    with pytest.raises(AmbiguousBridge) as exc:
        find_bridge(g, plan.table, sc.bridge_offset)
    assert whitebox(g).bridge_addr in exc.value.candidates
    sc, g, plan = _setup(8, pages=256, dup_rate=0.02)
    rep = run_attack(g, plan)
    assert rep.succeeded
    assert rep.bridge_candidates > 1
    assert rep.bpa == whitebox(g).bridge_addr


@pytest.mark.parametrize("seed", range(3))
def test_find_cc_matches_whitebox(seed):
    sc, g, plan = _setup(seed)
    bpa = find_bridge(g, plan.table, sc.bridge_offset)
    pcc, rounds = find_cc(g, plan, bpa)
    assert pcc == whitebox(g).victim_addr
    assert rounds == pcc // PAGE_SIZE // 62 + 1
    assert rounds <= math.ceil(PAGES / 62)


def test_find_cc_singleton_batch():
    sc, g, plan = _setup(2)
    bpa = find_bridge(g, plan.table, sc.bridge_offset)
    pcc, rounds = find_cc(g, plan, bpa, [whitebox(g).victim_addr])
    assert (pcc, rounds) == (whitebox(g).victim_addr, 1)


def test_find_cc_perturbed_cc():
    sc, g, _ = _setup(2)
    bad = bytes([sc.cc[0] ^ 1]) + sc.cc[1:]
    plan = AttackPlan(TweakTable.default(), bad, sc.cc_offset, sc.shellcode, sc.bridge_offset)
    bpa = find_bridge(g, plan.table, sc.bridge_offset)
    with pytest.raises(CcNotFound):
        find_cc(g, plan, bpa)


def test_shellcode_tweaks_per_block(table1):
    # compute each block's tweak both from the combined address and from the two halves
    bpa, pcc = 0x1234150, 0x2F0E90
    for k in range(3):
        combined = table1.tweak((pcc + 16 * k) ^ (bpa + 16 * k))
        split = table1.tweak(pcc + 16 * k) ^ table1.tweak(bpa + 16 * k)
        assert combined == split
    assert table1.tweak(pcc ^ bpa) == table1.tweak((pcc + 16) ^ (bpa + 16))
    # an offset carry changes the relation, so it is never assumed
    assert table1.tweak(0xFF0 ^ 0x150) != table1.tweak((0xFF0 + 16) ^ (0x150 + 16))


def test_injection_activates_shellcode_and_forgery_oracle():
    sc, g, plan = _setup(6)
    wb = whitebox(g)
    bpa = find_bridge(g, plan.table, sc.bridge_offset)
    pcc, _ = find_cc(g, plan, bpa)
    forged = inject_shellcode(g, plan, bpa, pcc)
    assert g.victim_check(sc.shellcode) is VictimState.SHELLCODE_ACTIVE
    for k in range(3):
        assert forged[16 * k : 16 * k + 16] == encrypt_block(
            wb.engine, sc.shellcode[16 * k : 16 * k + 16], pcc + 16 * k
        )


def test_wrong_target_never_activates():
    sc, g, plan = _setup(6)
    wb = whitebox(g)
    bpa = find_bridge(g, plan.table, sc.bridge_offset)
    wrong = wb.victim_addr + PAGE_SIZE if wb.victim_addr + PAGE_SIZE < g.size_bytes else wb.victim_addr - PAGE_SIZE
    inject_shellcode(g, plan, bpa, wrong)
    assert g.victim_check(sc.shellcode) is VictimState.AUTH_INTACT
    # right page, wrong bridge address: payload computed for the wrong slot
    inject_shellcode(g, plan, bpa + 16, wb.victim_addr)
    assert g.victim_check(sc.shellcode) is VictimState.CORRUPTED


def test_mitigated_injection_corrupts():
    sc, g, plan = _setup(6, Mode.MITIGATED, pages=64)
    wb = whitebox(g)
    inject_shellcode(g, plan, wb.bridge_addr, wb.victim_addr)
    assert g.victim_check(sc.shellcode) is VictimState.CORRUPTED


def test_run_attack_touches_only_channels():
    sc, g, plan = _setup(13)
    view = RecordingView(g)
    rep = run_attack(view, plan)
    assert rep.succeeded
    assert view.touched <= RecordingView.allowed
    assert {"inject", "hv_read_cipher", "hv_write_cipher", "victim_check"} <= view.touched


def test_run_attack_deterministic():
    reports = [run_attack(g, plan) for _, g, plan in (_setup(3), _setup(3))]
    assert reports[0] == reports[1]
    assert reports[0].to_text() == reports[1].to_text()


def test_run_attack_report_fields():
    sc, g, plan = _setup(9)
    rep = run_attack(g, plan)
    assert rep.outcome == "ShellcodeActive" and rep.exit_code == 0
    assert rep.bpa == whitebox(g).bridge_addr and rep.pcc == whitebox(g).victim_addr
    assert rep.cc_rounds <= math.ceil(PAGES / 62)
    assert set(rep.timings) == {"bridge", "cc", "inject"}
    text = rep.to_text()
    assert "outcome=ShellcodeActive\n" in text and "timings" not in text


def test_run_attack_mitigated_fails_in_band():
    sc, g, plan = _setup(9, Mode.MITIGATED, pages=64)
    rep = run_attack(g, plan)
    assert rep.outcome == "Failed(BridgeNotFound)"
    assert rep.exit_code == 1
    assert g.victim_check(sc.shellcode) is VictimState.AUTH_INTACT


def test_run_attack_cc_missing():
    sc, g, _ = _setup(9)
    plan = AttackPlan(TweakTable.default(), bytes(16), sc.cc_offset, sc.shellcode, sc.bridge_offset)
    rep = run_attack(g, plan)
    assert rep.outcome == "Failed(CcNotFound)"
    assert rep.cc_rounds == math.ceil(PAGES / 62)


def test_plan_validation():
    t = TweakTable.default()
    sc = Scenario()
    with pytest.raises(ValueError):
        AttackPlan(t, sc.cc, 0x8, sc.shellcode, sc.bridge_offset)
    with pytest.raises(ValueError):
        AttackPlan(t, sc.cc, sc.cc_offset, sc.shellcode[:47], sc.bridge_offset)
    with pytest.raises(ValueError):
        AttackPlan(t, sc.cc, sc.cc_offset, sc.shellcode, sc.bridge_offset, batch_width=32)
    with pytest.raises(ValueError):
        AttackPlan(t, sc.cc[:8], sc.cc_offset, sc.shellcode, sc.bridge_offset)


def test_candidates_ascending():
    c = cc_candidates(10, 0xE90)
    assert c == sorted(c) and c[0] == 0xE90 and c[-1] == 9 * PAGE_SIZE + 0xE90


def test_shellcode_payload_length():
    sc = Scenario()
    plan = AttackPlan.from_scenario(sc, TweakTable.default())
    assert len(shellcode_payload(plan, 0x150, 0xE90)) == 48


def test_find_bridge_candidates_on_dump_with_no_injection():
    sc, g, plan = _setup(1, pages=64)
    dump = g.hv_read_cipher(0, g.size_bytes)
    assert scan_bridge_runs(dump, sc.bridge_offset) == []
    assert find_bridge_candidates(g, plan.table, sc.bridge_offset) == [whitebox(g).bridge_addr]
    assert np.frombuffer(dump, np.uint8).size == 64 * PAGE_SIZE
