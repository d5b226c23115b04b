"""Command-line entry point: ``sevtweak <command> [options]``.

Exit status: 0 on success, 1 when the pipeline ran but failed in-band
(e.g. the attack did not activate the shellcode), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import attack as atk
from . import recovery
from .errors import AmbiguousBridge, BridgeNotFound, CcNotFound, Inconsistent, PageCountTooSmall, Underdetermined
from .guest import Scenario, guest_from_scenario, hypervisor_view
from .memcrypt import PAGE_SIZE, EncryptedMemory, EngineConfig, Mode, hexdump
from .randomness import battery
from .report import kv_lines, plot_bridge_scan, plot_cc_search, plot_randomness, plot_tweak_table
from .tweak import BLOCK, TweakTable, random_table

log = logging.getLogger("sevtweak")



def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    v = int(text, 0)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="scenario seed (default 0)")
    common.add_argument("--pages", type=_positive, default=None, help="guest page count (default 4096)")
    common.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    common.add_argument("--table", type=Path, help="tweak table file (default: bundled hardware table)")
    common.add_argument("--scenario", type=Path, help="key=value scenario file")
    common.add_argument("--report", type=Path, help="write the report here instead of stdout")
    common.add_argument("--figures", type=Path, help="directory for PNG figures")
    common.add_argument("--trials", type=_positive, default=1, help="run N consecutive seeds")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sevtweak", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recover-tweak", parents=[common], help="recover the tweak table by elimination")
    p.add_argument("--samples", type=_positive, default=recovery.DEFAULT_SAMPLES)
    p.add_argument("--table-out", type=Path)
    p.add_argument("--truth-out", type=Path, help="also write the engine's ground-truth table")
    p.add_argument("--random-table", action="store_true",
                   help="engine uses a table generated from the seed instead of the bundled one")

    sub.add_parser("find-bridge", parents=[common], help="locate the bridge by ciphertext scan")
    sub.add_parser("find-cc", parents=[common], help="locate the characteristic code")
    sub.add_parser("inject", parents=[common], help="find bridge and CC, then move forged shellcode")
    sub.add_parser("attack", parents=[common], help="full attack and victim check")
    sub.add_parser("demo-mitigated", parents=[common], help="same attack against both engines")

    p = sub.add_parser("probe-randomness", parents=[common], help="ciphertext randomness at one address")
    p.add_argument("--blocks", type=_positive, default=1024)
    p.add_argument("--addr", type=lambda s: int(s, 0), default=0x1000)
    return parser


def _scenario(args, seed_offset: int = 0) -> Scenario:
    sc = Scenario.load(args.scenario) if args.scenario else Scenario()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.pages is not None:
        changes["page_count"] = args.pages
    if args.mode is not None:
        changes["mode"] = Mode(args.mode)
    sc = dataclasses.replace(sc, **changes)
    if seed_offset:
        sc = dataclasses.replace(sc, seed=sc.seed + seed_offset)
    return sc


def _table(args) -> TweakTable:
    return TweakTable.load(args.table) if args.table else TweakTable.default()


def _figure(args, name: str) -> Path | None:
    return args.figures / name if args.figures else None


def _engine(args, seed: int, table: TweakTable) -> EngineConfig:
    vek = np.random.default_rng(seed).bytes(16)
    if args.mode == Mode.MITIGATED.value:
        return EngineConfig.mitigated(vek)
    return EngineConfig.vulnerable(vek, table)


def cmd_recover_tweak(args, trial: int):
    seed = (args.seed or 0) + trial
    truth = random_table(seed) if args.random_table else _table(args)
    mem = EncryptedMemory(_engine(args, seed, truth))
    addrs = recovery.random_addresses(seed, args.samples)
    rep = recovery.run_recovery(mem, addrs)
    ok = rep.verdict == "Recovered"
    if args.table_out and ok:
        rep.table.save(args.table_out)
    if args.truth_out:
        truth.save(args.truth_out)
    if ok and (out := _figure(args, f"tweak_table_{seed}.png")):
        plot_tweak_table(rep.table, out)
    head = [("command", "recover-tweak"), ("seed", seed), ("mode", args.mode or "vulnerable")]
    return ok, kv_lines(head) + rep.to_text()


def cmd_probe_randomness(args, trial: int):
    seed = (args.seed or 0) + trial
    mem = EncryptedMemory(_engine(args, seed, _table(args)))
    cts = recovery.probe_same_address(mem, args.addr, args.blocks)
    results = battery(cts)
    mode = recovery.classify_mode(mem, args.addr)
    ok = mode == "ecb" and all(r.passed for r in results)
    lines = [("command", "probe-randomness"), ("seed", seed), ("addr", hex(args.addr)),
             ("blocks", args.blocks), ("mode_of_operation", mode)]
    for r in results:
        lines += [(f"test.{r.name}.p_value", f"{r.p_value:.6f}"), (f"test.{r.name}.passed", r.passed)]
    lines.append(("verdict", "random" if ok else "non-random"))
    if out := _figure(args, f"randomness_{seed}.png"):
        plot_randomness(results, out)
    return ok, kv_lines(lines)


def _scenario_head(command: str, sc: Scenario):
    return [("command", command), ("seed", sc.seed), ("page_count", sc.page_count),
            ("mode", sc.mode.value), ("bridge_offset", hex(sc.bridge_offset)),
            ("cc_offset", hex(sc.cc_offset))]


def _locate(command: str, args, trial: int, want_cc: bool, want_inject: bool):
    sc = _scenario(args, trial)
    table = _table(args)
    guest = guest_from_scenario(sc, table if args.table else None)
    view = hypervisor_view(guest)
    plan = atk.AttackPlan.from_scenario(sc, table)
    lines = _scenario_head(command, sc)
    try:
        bpa = atk.find_bridge(view, table, sc.bridge_offset)
    except (BridgeNotFound, AmbiguousBridge) as exc:
        lines.append(("outcome", f"Failed({type(exc).__name__})"))
        return False, kv_lines(lines)
    lines.append(("bpa", hex(bpa)))
    if out := _figure(args, f"bridge_scan_{sc.seed}.png"):
        plot_bridge_scan(view.hv_read_cipher(0, view.size_bytes), sc.bridge_offset, bpa, out)
    if not want_cc:
        lines.append(("outcome", "BridgeFound"))
        return True, kv_lines(lines) + "bridge_ciphertext:\n" + hexdump(
            view.hv_read_cipher(bpa, 4 * BLOCK), bpa)
    try:
        pcc, rounds = atk.find_cc(view, plan, bpa)
    except CcNotFound:
        lines += [("cc_rounds", -(-sc.page_count // plan.batch_width)), ("outcome", "Failed(CcNotFound)")]
        return False, kv_lines(lines)
    lines += [("pcc", hex(pcc)), ("cc_rounds", rounds)]
    if out := _figure(args, f"cc_search_{sc.seed}.png"):
        plot_cc_search(sc.page_count, plan.batch_width, rounds, pcc // PAGE_SIZE, out)
    if not want_inject:
        lines.append(("outcome", "CcFound"))
        return True, kv_lines(lines)
    forged = atk.inject_shellcode(view, plan, bpa, pcc)
    lines += [("forged", forged.hex()), ("outcome", "Injected")]
    return True, kv_lines(lines) + "victim_ciphertext:\n" + hexdump(view.hv_read_cipher(pcc, len(forged)), pcc)


def _attack_one(args, sc: Scenario, table: TweakTable):
    guest = guest_from_scenario(sc, table if args.table else None)
    rep = atk.run_attack(guest, atk.AttackPlan.from_scenario(sc, table))
    log.info("seed %d: %s (%s)", sc.seed, rep.outcome,
             ", ".join(f"{k} {v:.3f}s" for k, v in rep.timings.items()))
    return rep


def cmd_attack(args, trial: int):
    sc = _scenario(args, trial)
    table = _table(args)
    rep = _attack_one(args, sc, table)
    if rep.pcc is not None and (out := _figure(args, f"cc_search_{sc.seed}.png")):
        plot_cc_search(sc.page_count, atk.BRIDGE_GROUPS, rep.cc_rounds, rep.pcc // PAGE_SIZE, out)
    return rep.succeeded, kv_lines(_scenario_head("attack", sc)) + rep.to_text()


def cmd_demo_mitigated(args, trial: int):
    base = _scenario(args, trial)
    table = _table(args)
    text = kv_lines([("command", "demo-mitigated"), ("seed", base.seed), ("page_count", base.page_count)])
    outcomes = {}
    for mode in Mode:
        rep = _attack_one(args, dataclasses.replace(base, mode=mode), table)
        outcomes[mode] = rep.succeeded
        text += "".join(f"{mode.value}.{line}" for line in rep.to_text().splitlines(keepends=True))
    ok = outcomes[Mode.VULNERABLE] and not outcomes[Mode.MITIGATED]
    return ok, text + kv_lines([("mitigation_effective", ok)])


HANDLERS = {
    "recover-tweak": cmd_recover_tweak,
    "find-bridge": lambda a, t: _locate("find-bridge", a, t, False, False),
    "find-cc": lambda a, t: _locate("find-cc", a, t, True, False),
    "inject": lambda a, t: _locate("inject", a, t, True, True),
    "attack": cmd_attack,
    "demo-mitigated": cmd_demo_mitigated,
    "probe-randomness": cmd_probe_randomness,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    handler = HANDLERS[args.command]
    try:
        if args.trials == 1:
            ok, text = handler(args, 0)
        else:
            parts, wins = [], 0
            for i in range(args.trials):
                ok_i, text_i = handler(args, i)
                wins += ok_i
                parts.append("".join(f"trial.{i}.{ln}" for ln in text_i.splitlines(keepends=True)))
            ok = wins == args.trials
            text = "".join(parts) + kv_lines([("trials", args.trials), ("successes", wins)])
    except (OSError, ValueError, PageCountTooSmall) as exc:
        print(f"sevtweak: error: {exc}", file=sys.stderr)
        return 2
    except (Inconsistent, Underdetermined) as exc:
        print(f"sevtweak: {exc}", file=sys.stderr)
        return 1

    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
