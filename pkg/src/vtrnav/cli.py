"""Command-line interface: teach, build-map, repeat, eval.

Exit codes: 0 success, 1 navigation failure, 2 configuration or format
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import evaluate, pipeline, relpose, sim, topomap
from .perception import DescriptorField

EXIT_OK = 0
EXIT_NAV_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _load_config(args) -> dict:
    config = cfgmod.load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    return config


def _print_config_and_exit(config: dict) -> int:
    print(cfgmod.config_json(config))
    return EXIT_OK


def _trajectory_path_for(frames_path: Path) -> Path:
    return frames_path.with_suffix(frames_path.suffix + ".trajectory.csv")


def cmd_teach(args) -> int:
    config = _load_config(args)
    if args.print_config:
        return _print_config_and_exit(config)
    world = cfgmod.world_from_config(config)
    field = DescriptorField(cfgmod.field_config_from_config(config))
    rng = np.random.default_rng([int(config["seed"]), 1])
    frames, rows = sim.record_teach(
        world, field,
        speed=float(config["world"]["teach_speed"]),
        camera_rate=float(config["pipeline"]["rate"]),
        lookahead=float(config["world"]["teach_lookahead"]),
        rng=rng,
    )
    out = Path(args.out)
    data = topomap.serialize_frames(frames, {"fixture": config["world"]["fixture"]})
    out.write_bytes(data)
    traj_path = _trajectory_path_for(out)
    sim.write_trajectory(traj_path, rows)
    print(f"recorded {len(frames)} frames to {out}")
    print(f"trajectory log: {traj_path}")
    return EXIT_OK


def cmd_build_map(args) -> int:
    config = _load_config(args)
    if args.print_config:
        return _print_config_and_exit(config)
    data = Path(args.frames).read_bytes()
    frames, _meta = topomap.deserialize_frames(data)
    selector = cfgmod.selector_from_config(config)
    topo_map = topomap.build_map(frames, selector)
    if args.delete_nodes:
        try:
            indices = [int(s) for s in args.delete_nodes.split(",") if s.strip()]
        except ValueError as exc:
            raise cfgmod.ConfigError(f"invalid --delete-nodes list: {exc}") from exc
        topo_map = topomap.delete_nodes(topo_map, indices)
    out = Path(args.out)
    out.write_bytes(topomap.serialize(topo_map))
    ratio = len(topo_map) / len(frames)
    print(f"kept {len(topo_map)} of {len(frames)} frames ({ratio:.1%}) -> {out}")
    return EXIT_OK


def cmd_repeat(args) -> int:
    config = _load_config(args)
    if args.print_config:
        return _print_config_and_exit(config)
    topo_map = topomap.deserialize(Path(args.map).read_bytes())
    world = cfgmod.world_from_config(config)
    field = DescriptorField(cfgmod.field_config_from_config(config))
    seed = int(config["seed"])
    camera = pipeline.RepeatCamera(field, np.random.default_rng([seed, 2]))

    est_cfg = config["estimator"]
    kind = est_cfg["kind"]
    if args.always_fail:
        kind = "oracle"
    if kind == "oracle":
        oracle_cfg = cfgmod.oracle_from_config(config)
        if args.always_fail:
            oracle_cfg = relpose.OracleConfig(
                sigma_t=oracle_cfg.sigma_t, sigma_psi=oracle_cfg.sigma_psi,
                r_valid=oracle_cfg.r_valid, p_fail=1.0,
            )
        estimator = relpose.OracleEstimator(oracle_cfg, np.random.default_rng([seed, 3]))
    elif kind == "bridge":
        command = est_cfg["bridge_command"]
        if not command:
            raise cfgmod.ConfigError("estimator.bridge_command is required for kind 'bridge'")
        client = relpose.BridgeClient(list(command), timeout_s=float(est_cfg["timeout_s"]))
        estimator = relpose.BridgeEstimator(client)
    else:
        raise cfgmod.ConfigError(f"unknown estimator kind {kind!r}")

    out_dir = Path(args.out)
    if not out_dir.parent.exists():
        raise FileNotFoundError(f"output directory parent {out_dir.parent} does not exist")
    out_dir.mkdir(exist_ok=True)

    loc = config["localization"]
    try:
        result = pipeline.run_repeat(
            topo_map, world, camera, estimator,
            gains=cfgmod.gains_from_config(config),
            kernel=cfgmod.kernel_from_config(config),
            likelihood_config=cfgmod.likelihood_from_config(config),
            lookahead=int(loc["lookahead"]),
            prior_start=0 if loc["prior"] == "delta" else None,
            localization_mode=loc["mode"],
            config=cfgmod.pipeline_from_config(config),
            intervention=cfgmod.intervention_from_config(config),
        )
    finally:
        estimator.close()

    sim.write_trajectory(out_dir / "trajectory.csv", result.trajectory)
    pipeline.write_traces(out_dir / "cycles.ndjson", result.traces)
    if result.reached_goal:
        print(f"reached goal after {len(result.trajectory)} cycles "
              f"({result.interventions} interventions)")
        return EXIT_OK
    print(f"aborted: {result.reason} after {len(result.trajectory)} cycles")
    return EXIT_NAV_FAILURE


def cmd_eval(args) -> int:
    config = _load_config(args)
    if args.print_config:
        return _print_config_and_exit(config)
    world = cfgmod.world_from_config(config)
    teach_rows = sim.read_trajectory(args.teach_log)
    events = evaluate.detect_turns(teach_rows)
    labels = args.labels.split(",") if args.labels else None
    if labels is not None and len(labels) != len(args.repeat_logs):
        raise cfgmod.ConfigError("--labels count must match repeat logs")
    entries = []
    for i, log_path in enumerate(args.repeat_logs):
        rows = sim.read_trajectory(log_path)
        report = evaluate.score_run(teach_rows, rows, events, world)
        label = labels[i] if labels else Path(log_path).stem if len(args.repeat_logs) > 1 else "run"
        entries.append((label, report))
    text, csv_text = evaluate.compare(entries)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"report: {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtrnav",
        description="Teach-and-repeat route following in a 2-D simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective config and exit")

    p_teach = sub.add_parser("teach", help="record a teach run on a route")
    common(p_teach)
    p_teach.add_argument("--out", required=True, help="output frames file")
    p_teach.set_defaults(func=cmd_teach)

    p_build = sub.add_parser("build-map", help="build a map from teach frames")
    common(p_build)
    p_build.add_argument("frames", help="teach frames file")
    p_build.add_argument("--out", required=True, help="output map file")
    p_build.add_argument("--delete-nodes", help="comma-separated node indices to drop")
    p_build.set_defaults(func=cmd_build_map)

    p_repeat = sub.add_parser("repeat", help="repeat a mapped route")
    common(p_repeat)
    p_repeat.add_argument("map", help="map file")
    p_repeat.add_argument("--out", required=True, help="output log directory")
    p_repeat.add_argument("--always-fail", action="store_true",
                          help="force every pose estimate to fail (diagnostics)")
    p_repeat.set_defaults(func=cmd_repeat)

    p_eval = sub.add_parser("eval", help="score repeat runs against a teach log")
    common(p_eval)
    p_eval.add_argument("teach_log", help="teach trajectory CSV")
    p_eval.add_argument("repeat_logs", nargs="+", help="repeat trajectory CSVs")
    p_eval.add_argument("--labels", help="comma-separated labels for the runs")
    p_eval.add_argument("--out", help="write the comparison CSV here")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except topomap.MapFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except relpose.BridgeError as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return EXIT_NAV_FAILURE
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IsADirectoryError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PermissionError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
