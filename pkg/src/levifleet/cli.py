"""Command-line interface: run scenarios, scan fields, serve, parse.

Report paths write delimited outputs (metrics JSON, trace JSONL, scan CSV)
with rendered figures beside them.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

from .config import AppConfig, default_config, load_config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="levifleet",
                                     description="voice-driven acoustic robot fleet simulator")
    parser.add_argument("--config", help="JSON config file (sections: roster, arena, "
                                         "faults, parser, acoustics, tolerances)")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario across seeds and report metrics")
    run_p.add_argument("--scenario", required=True,
                       help="sequential | parallel | synchronous | path to a scenario file")
    run_p.add_argument("--seeds", type=int, default=10, help="number of seeds (0..n-1)")
    run_p.add_argument("--fault-drop", type=float, default=None, help="message drop probability")
    run_p.add_argument("--fault-jitter", type=float, default=None, help="latency jitter half-width [s]")
    run_p.add_argument("--out", default=None, help="output directory for metrics/traces/figures")

    scan_p = sub.add_parser("scan", help="line-scan an acoustic field to CSV and a figure")
    scan_p.add_argument("--array", action="append", default=[],
                        help="array geometry JSON file (repeat for multiple arrays)")
    scan_p.add_argument("--line", required=True, help="x1,y1,z1,x2,y2,z2 scan segment [m]")
    scan_p.add_argument("--n", type=int, default=201, help="number of samples")
    scan_p.add_argument("--focus", default=None, help="x,y,z focal point applied to each array")
    scan_p.add_argument("--out", default="out", help="output directory")

    serve_p = sub.add_parser("serve", help="run the live service")
    serve_p.add_argument("--port", type=int, default=8734)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--arena", default=None, help="arena JSON file")
    serve_p.add_argument("--seed", type=int, default=0)
    serve_p.add_argument("--speed", type=float, default=1.0, help="sim-time multiplier")
    serve_p.add_argument("--console", default=None, help="directory with built console assets")

    parse_p = sub.add_parser("parse", help="parse one command and print the plan JSON")
    parse_p.add_argument("--text", required=True)

    args = parser.parse_args(argv)
    cfg = load_config(args.config) if args.config else default_config()

    if args.command == "run":
        return _cmd_run(args, cfg)
    if args.command == "scan":
        return _cmd_scan(args)
    if args.command == "serve":
        return _cmd_serve(args, cfg)
    if args.command == "parse":
        return _cmd_parse(args, cfg)
    return 2


def _cmd_run(args, cfg: AppConfig) -> int:
    from .harness import preset_scenario, run_scenario, scenario_from_file

    fault_kw = {}
    if args.fault_drop is not None:
        fault_kw["drop_prob"] = args.fault_drop
    if args.fault_jitter is not None:
        fault_kw["latency_jitter"] = args.fault_jitter
    if fault_kw:
        from dataclasses import replace

        cfg.faults = replace(cfg.faults, **fault_kw)

    seeds = range(args.seeds)
    if args.scenario in ("sequential", "parallel", "synchronous"):
        spec = preset_scenario(args.scenario, seeds, config=cfg)
    else:
        spec = scenario_from_file(args.scenario, seeds=seeds)

    report = run_scenario(spec, out_dir=args.out)
    print(report.to_json())
    if args.out:
        print(f"wrote metrics, traces, and figures to {args.out}/", file=sys.stderr)
    return 0


def _cmd_scan(args) -> int:
    from .acoustics import PhasedArray, focus_phases, line_scan, scan_to_csv
    from .plots import plot_scan_profile

    arrays = [PhasedArray.from_file(p) for p in args.array] or [PhasedArray()]
    if args.focus:
        focal = tuple(float(v) for v in args.focus.split(","))
        arrays = [focus_phases(a, focal) for a in arrays]

    coords = [float(v) for v in args.line.split(",")]
    if len(coords) != 6:
        print("--line needs x1,y1,z1,x2,y2,z2", file=sys.stderr)
        return 2
    samples = line_scan(arrays, coords[:3], coords[3:], args.n)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "scan.csv"
    csv_path.write_text(scan_to_csv(samples))
    figure_path = out / "scan_profile.png"
    plot_scan_profile(samples, str(figure_path))
    print(f"wrote {csv_path} and {figure_path}")
    return 0


def _cmd_serve(args, cfg: AppConfig) -> int:
    from .robots import Arena
    from .service import serve

    if args.arena:
        cfg.arena = Arena.from_file(args.arena)
    serve(cfg, host=args.host, port=args.port, seed=args.seed, speed=args.speed,
          console_dir=args.console)
    return 0


def _cmd_parse(args, cfg: AppConfig) -> int:
    from .nlparse import ParseConfig, ParseFailure, ReferenceBackend, parse_command
    from .taskmodel import plan_to_dict

    ctx = cfg.spatial_context()
    backend = ReferenceBackend(tuple(sorted(cfg.roster)))
    parse_cfg = ParseConfig(
        temperature_schedule=tuple(cfg.parser.temperature_schedule),
        max_attempts=cfg.parser.max_attempts,
    )
    try:
        plan = parse_command(args.text, backend, parse_cfg, ctx)
    except ParseFailure as exc:
        error = {
            "error": str(exc),
            "attempts": [
                {"attempt": r.attempt, "temperature": r.temperature, "errors": r.errors}
                for r in exc.attempts
            ],
        }
        print(json.dumps(error, indent=2))
        return 1
    print(json.dumps(plan_to_dict(plan), indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
