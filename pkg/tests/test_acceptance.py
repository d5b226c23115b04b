"""End-to-end acceptance matrix. Each criterion prints exactly one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from sevtweak.attack import AttackPlan, bridge_payload, find_bridge, find_cc, inject_shellcode
from sevtweak.cli import main
from sevtweak.errors import Underdetermined
from sevtweak.gf2 import BitVec128
from sevtweak.guest import HypervisorView, Scenario, VictimState, guest_from_scenario, whitebox
from sevtweak.memcrypt import PAGE_SIZE, EncryptedMemory, EngineConfig, Mode, encrypt_block
from sevtweak.randomness import battery
from sevtweak.recovery import (
    build_system,
    collect_equal_cipher_samples,
    probe_same_address,
    random_addresses,
    recover_tweak,
)
from sevtweak.tweak import ADDR_LIMIT, TweakTable, random_table

SEEDS = range(20)
PAGES = 4096
ROUND_BOUND = math.ceil(PAGES / 62)  # 67
WALL_LIMIT = 60.0


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def _rand_addr(rng):
    return int(rng.integers(0, ADDR_LIMIT >> 4)) << 4


def _equal_runs(dump: bytes, min_len: int = 62):
    """Plain Python scan over every 16-byte block of the dump, independent of the attack code."""
    blocks = [dump[i : i + 16] for i in range(0, len(dump), 16)]
    found, start = [], 0
    for i in range(1, len(blocks) + 1):
        if i == len(blocks) or blocks[i] != blocks[start]:
            if i - start >= min_len:
                found.append((start * 16, i - start))
            start = i
    return found


@pytest.fixture(scope="module")
def pipeline_runs():
    """Run the three stages on 20 vulnerable 4096-page guests, recording white-box truth."""
    table = TweakTable.default()
    out = []
    for seed in SEEDS:
        sc = Scenario(seed=seed, page_count=PAGES)
        g = guest_from_scenario(sc)
        wb = whitebox(g)
        plan = AttackPlan.from_scenario(sc, table)
        view = HypervisorView(g)

        # independent dump check after injecting the tweak-cancelling payload
        view.inject(bridge_payload(table, sc.bridge_offset))
        runs = _equal_runs(view.hv_read_cipher(0, view.size_bytes))

        bpa = find_bridge(view, table, sc.bridge_offset)
        pcc, rounds = find_cc(view, plan, bpa)
        forged = inject_shellcode(view, plan, bpa, pcc)
        expected = b"".join(
            encrypt_block(wb.engine, sc.shellcode[16 * k : 16 * k + 16], wb.victim_addr + 16 * k) for k in range(3)
        )
        out.append(dict(
            seed=seed, bpa=bpa, pcc=pcc, rounds=rounds, runs=runs,
            true_bpa=wb.bridge_addr, true_pcc=wb.victim_addr,
            forged=forged, expected=expected, state=view.victim_check(sc.shellcode),
        ))
    return out


def test_c1_tweak_linearity(verdict):
    t = TweakTable.default()
    rng = np.random.default_rng(1)
    a = (rng.integers(0, ADDR_LIMIT >> 4, size=10_000, dtype=np.int64) << 4).tolist()
    b = (rng.integers(0, ADDR_LIMIT >> 4, size=10_000, dtype=np.int64) << 4).tolist()
    start = time.perf_counter()
    bad = sum(t.tweak(x ^ y) != t.tweak(x) ^ t.tweak(y) for x, y in zip(a, b))
    zero_ok = t.tweak(0) == BitVec128(0)
    elapsed = time.perf_counter() - start
    ok = bad == 0 and zero_ok and elapsed < 1.0
    verdict(1, ok, f"10000 pairs, {bad} violations, T(0)=0 {zero_ok}, {elapsed:.3f}s (limit 1s)")


def test_c2_equal_ciphertext(verdict):
    t = TweakTable.default()
    rng = np.random.default_rng(2)
    vul = EngineConfig.vulnerable(rng.bytes(16), t)
    mit = EngineConfig.mitigated(rng.bytes(16))
    vul_ok = mit_hold = 0
    for _ in range(1000):
        m = rng.bytes(16)
        p1 = _rand_addr(rng)
        p2 = _rand_addr(rng)
        while p2 == p1:
            p2 = _rand_addr(rng)
        moved = (BitVec128.from_bytes(m) ^ t.tweak(p1 ^ p2)).to_bytes()
        vul_ok += encrypt_block(vul, moved, p2) == encrypt_block(vul, m, p1)
        mit_hold += encrypt_block(mit, moved, p2) == encrypt_block(mit, m, p1)
    ok = vul_ok == 1000 and mit_hold == 0
    verdict(2, ok, f"vulnerable identity {vul_ok}/1000, mitigated identity {mit_hold}/1000 (want 1000 and 0)")


def test_c3_tweak_recovery(verdict):
    exact = under = wrong = 0
    for seed in range(100):
        truth = random_table(seed)
        rng = np.random.default_rng(seed)
        mem = EncryptedMemory(EngineConfig.vulnerable(rng.bytes(16), truth))
        samples = collect_equal_cipher_samples(mem, random_addresses(seed + 1000, 64))
        try:
            got = recover_tweak(samples)
        except Underdetermined:
            under += 1
            continue
        if got == truth:
            exact += 1
        else:
            wrong += 1
    t1 = TweakTable.default()
    mem = EncryptedMemory(EngineConfig.vulnerable(np.random.default_rng(0).bytes(16), t1))
    t1_ok = recover_tweak(collect_equal_cipher_samples(mem, random_addresses(0, 64))) == t1
    ok = exact >= 99 and wrong == 0 and exact + under == 100 and t1_ok
    verdict(3, ok, f"exact {exact}/100, underdetermined {under}, wrong {wrong}, hardware table reproduced {t1_ok}")


def test_c4_randomness_discrimination(verdict):
    mem = EncryptedMemory(EngineConfig.vulnerable(np.random.default_rng(4).bytes(16)))
    res = {r.name: r for r in battery(probe_same_address(mem, 0x1000, 1024))}
    cipher_random = res["monobit"].passed and res["runs"].passed
    # 31 addresses: a reference plus one per address bit
    unit = collect_equal_cipher_samples(mem, [0] + [1 << b for b in range(4, 34)])
    wide = collect_equal_cipher_samples(mem, random_addresses(4, 64))
    ranks = (build_system(unit).rank, build_system(wide).rank)
    linear = ranks == (30, 30) and recover_tweak(unit) == recover_tweak(wide)
    ok = cipher_random and linear
    verdict(4, ok, f"ciphertext monobit p={res['monobit'].p_value:.4f} runs p={res['runs'].p_value:.4f}; "
                   f"read-back plaintexts give consistent ranks {ranks}")


def test_c5_bridge_search(verdict, pipeline_runs):
    hits = sum(r["bpa"] == r["true_bpa"] for r in pipeline_runs)
    single = sum(r["runs"] == [(r["true_bpa"], 62)] for r in pipeline_runs)
    ok = hits == 20 and single == 20
    verdict(5, ok, f"bridge found {hits}/20, exactly one 62-block run in dump {single}/20")


def test_c6_cc_round_bound(verdict, pipeline_runs):
    worst = max(r["rounds"] for r in pipeline_runs)
    hits = sum(r["pcc"] == r["true_pcc"] for r in pipeline_runs)
    ok = worst <= ROUND_BOUND and hits == 20
    verdict(6, ok, f"max cc_rounds {worst} (bound {ROUND_BOUND}), PCC correct {hits}/20")


def test_c7_end_to_end_cli(verdict, tmp_path):
    vul = mit = 0
    slowest = 0.0
    for mode in ("vulnerable", "mitigated"):
        for seed in SEEDS:
            path = tmp_path / f"{mode}_{seed}.txt"
            start = time.perf_counter()
            code = main(["attack", "--seed", str(seed), "--pages", str(PAGES), "--mode", mode, "--report", str(path)])
            slowest = max(slowest, time.perf_counter() - start)
            active = "outcome=ShellcodeActive\n" in path.read_text()
            if mode == "vulnerable":
                vul += active and code == 0
            else:
                mit += active or code == 0
    ok = vul == 20 and mit == 0 and slowest < WALL_LIMIT
    verdict(7, ok, f"vulnerable ShellcodeActive {vul}/20, mitigated {mit}/20, slowest run {slowest:.2f}s (limit 60s)")


def test_c8_forgery_oracle(verdict, pipeline_runs):
    good = [r for r in pipeline_runs if r["state"] is VictimState.SHELLCODE_ACTIVE]
    match = sum(r["forged"] == r["expected"] for r in good)
    ok = len(good) == 20 and match == len(good)
    verdict(8, ok, f"forged blocks equal white-box encryption in {match}/{len(good)} successful runs")


def test_c9_determinism(verdict, tmp_path):
    same = 0
    for seed in (0, 7, 19):
        texts = []
        for i in range(2):
            path = tmp_path / f"{seed}_{i}.txt"
            main(["attack", "--seed", str(seed), "--pages", str(PAGES), "--report", str(path)])
            texts.append(path.read_bytes())
        same += texts[0] == texts[1]
    verdict(9, same == 3, f"byte-identical report pairs {same}/3")
