"""Command line entry points: run, batch, replay, report.

Exit codes are part of the contract:
  0  safe landing (run), or every episode safe (batch), or replay clean
  2  unsafe landing / some episode unsafe
  3  round budget exhausted, forced landing
  4  configuration or usage error
  5  judge backend unavailable or degraded
  6  replay/gate violation (trace does not reproduce)
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import LandfallError
from .geometry import halton_points
from .judge import BackendUnavailable, OracleJudge, RemoteJudge
from .metrics import EvalReport, row_from_events, row_from_result
from .planner import PlannerConfig, run_episode
from .presets import PRESET_NAMES, load_preset
from .scene import SceneModel, load_scene
from .sensors import DepthNoiseConfig
from .surface_id import ContextLevel
from .trace import TraceWriter, read_trace, replay

EXIT_SAFE = 0
EXIT_UNSAFE = 2
EXIT_TIMEOUT = 3
EXIT_USAGE = 4
EXIT_BACKEND = 5
EXIT_GATE = 6


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract reserves 2 for unsafe landings
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_scene_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scene", help="path to a .scene file")
    g.add_argument("--preset", choices=PRESET_NAMES, help="shipped scenario name")


def _add_planner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="noise seed (default: scene seed)")
    p.add_argument("--judge", choices=("oracle", "remote"), default="oracle")
    p.add_argument("--max-rounds", type=int, default=10)
    p.add_argument("--k", type=float, default=0.5, help="descent fraction per round")
    p.add_argument("--land-threshold", type=float, default=5.0, metavar="M")
    p.add_argument("--noise-sigma", type=float, default=0.02, help="0 disables depth noise")
    p.add_argument("--noise-correlation", type=float, default=48.0, metavar="PX")
    p.add_argument("--context", default="cropped", help="cropped | paddedNN | full")
    p.add_argument("--grad-threshold", type=float, default=0.05)
    p.add_argument("--min-area", type=float, default=0.01, metavar="FRACTION")
    p.add_argument("--clearance-radius", type=float, default=2.0, metavar="M")
    p.add_argument("--flatness-tolerance", type=float, default=0.3, metavar="M")
    p.add_argument("--explore-after-denial", action="store_true")


def _load_scene(args) -> SceneModel:
    if args.preset:
        return load_preset(args.preset)
    return load_scene(args.scene)


def _planner_config(args) -> PlannerConfig:
    noise = None
    if args.noise_sigma > 0:
        noise = DepthNoiseConfig(sigma=args.noise_sigma, correlation_px=args.noise_correlation)
    return PlannerConfig(
        fraction_k=args.k,
        land_threshold_m=args.land_threshold,
        max_rounds=args.max_rounds,
        context=ContextLevel.parse(args.context),
        grad_threshold=args.grad_threshold,
        min_area_fraction=args.min_area,
        noise=noise,
        explore_after_denial=args.explore_after_denial,
    )


def _judge(args):
    if args.judge == "remote":
        # endpoint and credentials come from the environment only
        return RemoteJudge()
    return OracleJudge(
        clearance_radius=args.clearance_radius,
        flatness_tolerance=args.flatness_tolerance,
    )


def _episode_exit(row) -> int:
    if row.kind == "timeout_forced":
        return EXIT_TIMEOUT
    return EXIT_SAFE if row.landed_safe else EXIT_UNSAFE


def _write_reports(report: EvalReport, args) -> None:
    if getattr(args, "report_json", None):
        report.write_json(args.report_json)
    if getattr(args, "report_csv", None):
        report.write_csv(args.report_csv)


# ---------- run ----------


def _cmd_run(args) -> int:
    scene = _load_scene(args)
    config = _planner_config(args)
    judge = _judge(args)
    launch = None
    if args.launch is not None:
        if len(args.launch) not in (3, 4):
            raise LandfallError("--launch takes NORTH EAST ALT [YAW]")
        launch = tuple(args.launch) + ((0.0,) if len(args.launch) == 3 else ())

    if args.trace:
        with TraceWriter.open(args.trace) as writer:
            result = run_episode(scene, judge, config, seed=args.seed,
                                 launch=launch, on_event=writer)
    else:
        result = run_episode(scene, judge, config, seed=args.seed, launch=launch)

    row = row_from_result(result, scene)
    report = EvalReport(rows=[row])
    _write_reports(report, args)
    print(
        f"{row.scenario} seed={row.seed}: {'safe' if row.landed_safe else 'UNSAFE'} "
        f"{row.kind} on {row.surface_class} after {row.rounds_used} rounds "
        f"({row.ticks} ticks, {row.denials} denials)"
    )
    if args.trace:
        print(f"trace: {args.trace}")
    return _episode_exit(row)


# ---------- batch ----------


def _run_one(task) -> tuple[int, dict]:
    scene, judge, config, seed, launch, trace_path = task
    if trace_path:
        with TraceWriter.open(trace_path) as writer:
            result = run_episode(scene, judge, config, seed=seed,
                                 launch=launch, on_event=writer)
    else:
        result = run_episode(scene, judge, config, seed=seed, launch=launch)
    from dataclasses import asdict

    return seed, asdict(row_from_result(result, scene))


def _cmd_batch(args) -> int:
    from dataclasses import fields

    from .metrics import EvalRow

    scene = _load_scene(args)
    config = _planner_config(args)
    judge = _judge(args)
    if scene.launch is None:
        raise LandfallError(f"scene {scene.scenario_id} declares no launch; batch needs one")
    _, _, alt, yaw = scene.launch
    points = halton_points(args.episodes, scene.launchable_rect(), skip=args.skip)
    seed_base = scene.rng_seed if args.seed_base is None else args.seed_base

    trace_dir = None
    if args.trace_dir:
        trace_dir = Path(args.trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for idx in range(args.episodes):
        seed = seed_base + idx
        launch = (float(points[idx, 0]), float(points[idx, 1]), alt, yaw)
        trace_path = str(trace_dir / f"{scene.scenario_id}_{seed}.jsonl") if trace_dir else None
        tasks.append((scene, judge, config, seed, launch, trace_path))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    else:
        outcomes = [_run_one(t) for t in tasks]

    rows = [EvalRow(**{f.name: d[f.name] for f in fields(EvalRow)}) for _, d in outcomes]
    report = EvalReport(rows=rows)
    _write_reports(report, args)
    print(report.human_summary())
    if any(r.kind == "timeout_forced" for r in rows):
        return EXIT_TIMEOUT
    return EXIT_SAFE if all(r.landed_safe for r in rows) else EXIT_UNSAFE


# ---------- replay ----------


def _cmd_replay(args) -> int:
    scene = _load_scene(args)
    events = read_trace(args.trace)
    result = replay(events, scene, source=args.trace)
    if result.ok:
        print(f"{args.trace}: {result.rounds_checked} rounds reproduce exactly")
        return EXIT_SAFE
    for line in result.mismatches:
        print(f"{args.trace}: {line}", file=sys.stderr)
    return EXIT_GATE


# ---------- report ----------


def _expand_traces(paths: list[str]) -> list[Path]:
    out: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.jsonl")))
        else:
            out.append(path)
    return out


def _cmd_report(args) -> int:
    scene = None
    if args.scene:
        scene = load_scene(args.scene)
    elif args.preset:
        scene = load_preset(args.preset)
    rows = []
    for path in _expand_traces(args.traces):
        rows.append(row_from_events(read_trace(path), scene))
    if not rows:
        raise LandfallError("no traces found")
    report = EvalReport(rows=rows)
    _write_reports(report, args)
    print(report.human_summary())
    return EXIT_SAFE


# ---------- wiring ----------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="landfall", description="sudden-landing recovery simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[], help="play one episode")
    _add_scene_args(p_run)
    _add_planner_args(p_run)
    p_run.add_argument("--launch", type=float, nargs="+", default=None,
                       metavar="V", help="NORTH EAST ALT [YAW], overrides the scene")
    p_run.add_argument("--trace", help="write a JSONL trace here")
    p_run.add_argument("--report-json", help="write a JSON report here")
    p_run.add_argument("--report-csv", help="write a CSV report here")
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run many episodes over Halton launch points")
    _add_scene_args(p_batch)
    _add_planner_args(p_batch)
    p_batch.add_argument("--episodes", type=int, default=20)
    p_batch.add_argument("--seed-base", type=int, default=None)
    p_batch.add_argument("--skip", type=int, default=0, help="skip leading Halton points")
    p_batch.add_argument("--trace-dir", help="write one JSONL trace per episode here")
    p_batch.add_argument("--workers", type=int, default=1)
    p_batch.add_argument("--report-json")
    p_batch.add_argument("--report-csv")
    p_batch.set_defaults(func=_cmd_batch)

    p_replay = sub.add_parser("replay", help="verify a trace reproduces frame by frame")
    p_replay.add_argument("trace")
    _add_scene_args(p_replay)
    p_replay.set_defaults(func=_cmd_replay)

    p_report = sub.add_parser("report", help="aggregate traces into a report")
    p_report.add_argument("traces", nargs="+", help="trace files or directories")
    p_report.add_argument("--scene", help="scene file, enables distance-to-target")
    p_report.add_argument("--preset", choices=PRESET_NAMES)
    p_report.add_argument("--report-json")
    p_report.add_argument("--report-csv")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except BackendUnavailable as exc:
        print(f"landfall: judge backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (LandfallError, ValueError) as exc:
        print(f"landfall: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"landfall: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
