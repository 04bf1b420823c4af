"""Command-line entry point: ``rkeadapt {run,dynamic,attacks,compare}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from . import scenario
from .attacks import AttackDescriptor, AttackKind, run_attack_suite
from .errors import ConfigError

EXIT_OK = 0
EXIT_ATTACK_MISMATCH = 1
EXIT_USAGE = 2


def _config(args) -> scenario.ScenarioConfig:
    cfg = scenario.resolve_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.no_adapt:
        over["adaptation"] = False
    return cfg.with_overrides(**over) if over else cfg


def _suffixed(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}-{tag}{path.suffix}")


def _write(metrics: scenario.RunMetrics, out: Optional[str]) -> None:
    if out is None:
        return
    path = Path(out)
    if path.suffix == ".json":
        scenario.emit_json(metrics.summary(), path)
    else:
        scenario.emit_csv(metrics, path)


def _print_summary(m: scenario.RunMetrics, label: str = "") -> None:
    s = m.summary()
    head = f"[{label}] " if label else ""
    print(f"{head}{s['name']} seed={s['seed']} adaptation={s['adaptation']} "
          f"events={s['duration_events']}")
    print(f"{head}  pdr_total={s['pdr_total']:.4f} "
          f"steady_state_pdr_latest={s['steady_state_pdr_latest']:.4f}")
    print(f"{head}  final link {s['final_phy']} {s['final_txp_dbm']} dBm, "
          f"{s['final_enabled_channels']} channels ({s['final_channel_map_hex']})")
    for p in s.get("phases", []):
        print(f"{head}  wifi ch{p['wifi_channel']:<2} events {p['start_event']}-{p['end_event']}: "
              f"pdr {p['pdr']:.4f}")
    for a in s["attacks"]:
        mark = "ok" if a["verdict"] == a["expected"] else "UNEXPECTED"
        print(f"{head}  attack {a['kind']} @{a['trigger_event']}: {a['verdict']} "
              f"({a['failure_point']}) {mark}")


def cmd_run(args) -> int:
    m = scenario.run_scenario(_config(args))
    _print_summary(m)
    _write(m, args.out)
    return EXIT_OK if m.auth_executed and m.attacks_ok else EXIT_ATTACK_MISMATCH


def cmd_dynamic(args) -> int:
    m = scenario.run_dynamic_wifi(_config(args))
    _print_summary(m)
    _write(m, args.out)
    return EXIT_OK if m.auth_executed and m.attacks_ok else EXIT_ATTACK_MISMATCH


def cmd_attacks(args) -> int:
    seed = args.seed
    descs = None
    if args.config is not None:
        cfg = _config(args)
        seed = cfg.seed
        descs = list(cfg.attacks) or None
    if descs is None:
        kinds = list(AttackKind)
        descs = [AttackDescriptor(k) for k in kinds]
        if args.flip:
            descs += [AttackDescriptor(k, defense_enabled=False) for k in kinds]
    outcomes = run_attack_suite(seed or 0, descs)
    for o in outcomes:
        d = o.descriptor
        defense = "on " if d.defense_enabled else "off"
        mark = "ok" if o.as_expected else "UNEXPECTED"
        print(f"{d.kind.value:<22} defense {defense} -> {o.verdict:<9} ({o.failure_point}) {mark}")
        if args.verbose:
            for line in o.transcript:
                print(f"    {line}")
    if args.out:
        body = [dict(o.summary(), transcript=o.transcript) for o in outcomes]
        Path(args.out).write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if all(o.as_expected for o in outcomes) else EXIT_ATTACK_MISMATCH


def cmd_compare(args) -> int:
    cfg = _config(args)
    adaptive, baseline = scenario.compare(cfg, dynamic=args.dynamic)
    _print_summary(adaptive, "adaptive")
    _print_summary(baseline, "baseline")
    if args.out:
        path = Path(args.out)
        if path.suffix == ".json":
            scenario.emit_json({"adaptive": adaptive.summary(), "baseline": baseline.summary()}, path)
        else:
            scenario.emit_csv(adaptive, _suffixed(path, "adaptive"))
            scenario.emit_csv(baseline, _suffixed(path, "baseline"))
    ok = all(m.auth_executed and m.attacks_ok for m in (adaptive, baseline))
    return EXIT_OK if ok else EXIT_ATTACK_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rkeadapt",
        description="Adaptive BLE keyless-entry link and authentication simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="scenario file, or a preset name: " + ", ".join(scenario.PRESETS))
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="write results here (.csv or .json)")
        p.add_argument("--no-adapt", action="store_true", help="disable link adaptation")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dynamic", help="run a switching Wi-Fi scenario with per-phase results")
    common(p)
    p.set_defaults(func=cmd_dynamic)

    p = sub.add_parser("attacks", help="run the attack suite")
    common(p, config_required=False)
    p.add_argument("--flip", action="store_true",
                   help="also run every attack with its defense disabled")
    p.add_argument("-v", "--verbose", action="store_true", help="print message transcripts")
    p.set_defaults(func=cmd_attacks)

    p = sub.add_parser("compare", help="adaptive vs non-adaptive twins from one seed")
    common(p)
    p.add_argument("--dynamic", action="store_true", help="add per-phase results")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
