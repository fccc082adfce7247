"""Command-line front end.

    clockchain run --config cfg.json [--seed N] [--out DIR]
    clockchain replay --trace trace.json
    clockchain spv-verify --proof proof.json --headers headers.json
    clockchain sweep --config cfg.json --grid "m=2,4;rho=0.0,0.2" [--out DIR]

Exit codes: 0 success, 1 safety violation / digest mismatch / proof not
valid, 2 unusable configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys

from . import metrics as metrics_mod
from . import spv as spv_mod
from .simnet import ConfigError, SimConfig, run

DEFAULT_OUT = os.environ.get("CLOCKCHAIN_OUT", ".")


def _load_config(path: str) -> SimConfig:
    with open(path) as fh:
        return SimConfig.from_dict(json.load(fh))


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_run(args) -> int:
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
            config.validate()
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run(config)
    report = metrics_mod.collect_metrics(result)
    out = args.out or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "trace.json"), result.trace.to_json())
    _write_json(os.path.join(out, "metrics.json"), report.to_dict())
    if result.violations:
        print(f"safety violations: {len(result.violations)}", file=sys.stderr)
        return 1
    print(f"ok: {report.blocks_mined} blocks, |L|={report.l_len}, "
          f"digest={result.trace.trace_digest[:16]}")
    return 0


def cmd_replay(args) -> int:
    try:
        with open(args.trace) as fh:
            stored = json.load(fh)
        config = SimConfig.from_dict(stored["config"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run(config)
    if result.trace.trace_digest != stored.get("trace_digest"):
        print("replay digest mismatch", file=sys.stderr)
        return 1
    print(f"replay ok: digest={result.trace.trace_digest[:16]}")
    return 0


def cmd_spv_verify(args) -> int:
    try:
        with open(args.headers) as fh:
            state = spv_mod.state_from_json(json.load(fh))
        with open(args.proof) as fh:
            proof = spv_mod.proof_from_json_doc(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for chain in range(state.m):
        if not spv_mod.verify_header_chain(state, chain):
            print(f"header chain {chain} invalid", file=sys.stderr)
            return 1
    verdict = spv_mod.spv_verify(state, proof)
    print(f"verdict: {verdict.kind.value}"
          + (f" ({verdict.reason})" if verdict.reason else ""))
    return 0 if verdict.valid else 1


def _parse_grid(spec: str) -> list[dict]:
    axes = []
    for clause in spec.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        key, _, values = clause.partition("=")
        if not values:
            raise ValueError(f"bad grid clause {clause!r}")
        parsed = []
        for raw in values.split(","):
            raw = raw.strip()
            try:
                parsed.append(int(raw))
            except ValueError:
                parsed.append(float(raw))
        axes.append([(key.strip(), v) for v in parsed])
    return [dict(combo) for combo in itertools.product(*axes)]


def cmd_sweep(args) -> int:
    try:
        base = _load_config(args.config)
        points = _parse_grid(args.grid)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    rows = []
    worst = 0
    for point in points:
        cfg_dict = base.to_dict()
        cfg_dict.update(point)
        try:
            config = SimConfig.from_dict(cfg_dict)
        except ConfigError as exc:
            print(f"error at {point}: {exc}", file=sys.stderr)
            return 2
        result = run(config)
        report = metrics_mod.collect_metrics(result)
        tag = "-".join(f"{k}{v}" for k, v in sorted(point.items()))
        _write_json(os.path.join(out, f"metrics-{tag}.json"), report.to_dict())
        row = dict(point)
        row.update({
            "blocks": report.blocks_mined,
            "l_len": report.l_len,
            "throughput": report.throughput,
            "violations": report.consistency_violations,
            "honest_share": report.honest_share,
        })
        rows.append(row)
        worst = max(worst, len(result.violations))
        print(f"{tag}: blocks={report.blocks_mined} |L|={report.l_len} "
              f"violations={report.consistency_violations}")
    if rows:
        keys = sorted({k for row in rows for k in row})
        with open(os.path.join(out, "sweep.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)
    return 1 if worst else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="clockchain")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="re-execute a trace and compare digests")
    p_replay.add_argument("--trace", required=True)
    p_replay.set_defaults(func=cmd_replay)

    p_spv = sub.add_parser("spv-verify", help="verify a payment proof against headers")
    p_spv.add_argument("--proof", required=True)
    p_spv.add_argument("--headers", required=True)
    p_spv.set_defaults(func=cmd_spv_verify)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True)
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
