"""Command-line entry points: serve, camera, replay, synth.

Log level comes from the ARENA_LOG environment variable (debug/info/
warning/error; default warning).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from arena.akis import AkisConfig
from arena.evaluation import AnnotationStore, OracleConfig
from arena.pps import PpsConfig
from arena.harness import (ReplayOptions, SynthObject, SynthSpec,
                           load_frames, open_sequence,
                           parse_mot_annotations, replay, write_report,
                           write_synth)
from arena.transport import EdgeServer, TimingModel
from arena.vit.engine import Engine
from arena.vit.params import EngineConfig, load_weights, save_weights

log = logging.getLogger("arena.cli")


def _setup_logging() -> None:
    level = os.environ.get("ARENA_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _add_engine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frame-w", type=int, default=64)
    p.add_argument("--frame-h", type=int, default=64)
    p.add_argument("--channels", type=int, default=3, choices=(1, 3))
    p.add_argument("--patch-size", type=int, default=16)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--mlp-ratio", type=int, default=4)
    p.add_argument("--weight-seed", type=int, default=1)
    p.add_argument("--weights", help="binary weights file (overrides the seed)")


def _add_camera_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", required=True, help="directory of .pgm/.ppm frames")
    p.add_argument("--annotations", help="MOT csv (default: FRAMES/gt.csv)")
    p.add_argument("--p", type=float, default=0.9, help="sampling rate")
    p.add_argument("--F", type=int, default=200, help="pixel diff threshold")
    p.add_argument("--m", type=int, default=1, help="expansion margin, patches")
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--k-lower", type=int, default=1)
    p.add_argument("--k-upper", type=int, default=15)
    p.add_argument("--no-akis", action="store_true",
                   help="hold the interval fixed at --k-lower")
    p.add_argument("--seed", type=int, default=0, help="sampler rng seed")
    p.add_argument("--report-out", default="report.json")
    p.add_argument("--link-mbps", type=float, default=93.9)
    p.add_argument("--link-overhead-us", type=float, default=0.0)
    p.add_argument("--infer-flops-per-us", type=float, default=1000.0)


def _add_oracle_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--oracle-drop", type=float, default=0.0)
    p.add_argument("--oracle-jitter", type=float, default=0.0)
    p.add_argument("--oracle-seed", type=int, default=0)
    p.add_argument("--detector", choices=("oracle", "head"), default="oracle")


def _engine_cfg(args) -> EngineConfig:
    return EngineConfig(args.patch_size, args.embed_dim, args.depth,
                        args.heads, args.mlp_ratio, args.frame_w, args.frame_h,
                        args.channels, args.weight_seed)


def _load_store(path: str | None) -> AnnotationStore:
    if path is None:
        return AnnotationStore()
    with open(path) as f:
        return parse_mot_annotations(f.read())


def _configs(args):
    pps_cfg = PpsConfig(args.p, args.F, args.m, args.seed)
    akis_cfg = AkisConfig(args.beta, args.k_lower, args.k_upper)
    oracle_cfg = OracleConfig(args.oracle_drop, args.oracle_jitter,
                              args.oracle_seed)
    timing = TimingModel(args.link_mbps, args.link_overhead_us,
                         args.infer_flops_per_us)
    return pps_cfg, akis_cfg, oracle_cfg, timing


def cmd_serve(args) -> int:
    cfg = _engine_cfg(args)
    if args.weights:
        file_cfg, params = load_weights(args.weights, args.weight_seed)
        if file_cfg != cfg:
            sys.exit(f"weights file config {file_cfg} != requested {cfg}")
        engine = Engine(cfg, params)
    else:
        engine = Engine(cfg)
    store = _load_store(args.annotations)
    oracle_cfg = OracleConfig(args.oracle_drop, args.oracle_jitter,
                              args.oracle_seed)
    server = EdgeServer((args.host, args.port), engine, store, oracle_cfg,
                        detector=args.detector)
    host, port = server.server_address
    print(f"edge server listening on {host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_camera(args) -> int:
    host, _, port = args.connect.rpartition(":")
    source = open_sequence(args.frames, args.annotations)
    frames = list(load_frames(source))
    store = _load_store(str(source.annotation_path)
                        if source.annotation_path else None)
    first = frames[0]
    args.frame_w, args.frame_h, args.channels = (first.width, first.height,
                                                 first.channels)
    engine_cfg = _engine_cfg(args)
    pps_cfg, akis_cfg, oracle_cfg, timing = _configs(args)
    options = ReplayOptions(mode="socket", akis_enabled=not args.no_akis,
                            connect=(host or "127.0.0.1", int(port)))
    report = replay(frames, store, engine_cfg, pps_cfg, akis_cfg, oracle_cfg,
                    timing, options)
    write_report(report, args.report_out)
    print(f"report written to {args.report_out}")
    return 1 if report["incomplete"] else 0


def cmd_replay(args) -> int:
    source = open_sequence(args.frames, args.annotations)
    frames = list(load_frames(source))
    store = _load_store(str(source.annotation_path)
                        if source.annotation_path else None)
    first = frames[0]
    args.frame_w, args.frame_h, args.channels = (first.width, first.height,
                                                 first.channels)
    engine_cfg = _engine_cfg(args)
    pps_cfg, akis_cfg, oracle_cfg, timing = _configs(args)
    options = ReplayOptions(mode=args.mode, akis_enabled=not args.no_akis,
                            detector=args.detector,
                            weights_path=args.weights)
    report = replay(frames, store, engine_cfg, pps_cfg, akis_cfg, oracle_cfg,
                    timing, options)
    write_report(report, args.report_out)
    acc = report["accuracy"]
    bw = report["bandwidth"]["normalized"] if report["bandwidth"] else float("nan")
    print(f"frames={len(frames)} mAP@0.5={acc['map50']:.4f} "
          f"recall={acc['recall']:.4f} normalized_bandwidth={bw:.4f}")
    print(f"report written to {args.report_out}")
    return 1 if report["incomplete"] else 0


def cmd_synth(args) -> int:
    objects = []
    for spec in args.object or []:
        parts = [float(v) for v in spec.split(",")]
        if len(parts) != 6:
            sys.exit(f"--object needs x,y,w,h,vx,vy, got {spec!r}")
        objects.append(SynthObject(parts[0], parts[1], int(parts[2]),
                                   int(parts[3]), parts[4], parts[5]))
    spec = SynthSpec(args.width, args.height, args.frames_count,
                     args.channels, tuple(objects), args.seed)
    source = write_synth(spec, args.out)
    print(f"wrote {len(source.frame_paths)} frames + gt.csv to {args.out}")
    return 0


def cmd_init_weights(args) -> int:
    cfg = _engine_cfg(args)
    engine = Engine(cfg)
    save_weights(args.out, cfg, engine.params)
    print(f"wrote weights for {cfg} to {args.out}")
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="arena",
        description="Patch-of-interest inference offloading toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the edge inference server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9400)
    _add_engine_args(p)
    p.add_argument("--annotations", help="MOT csv for the oracle detector")
    _add_oracle_args(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("camera", help="stream frames to a running server")
    p.add_argument("--connect", required=True, help="host:port")
    _add_camera_args(p)
    _add_engine_args(p)
    _add_oracle_args(p)
    p.set_defaults(fn=cmd_camera)

    p = sub.add_parser("replay", help="camera and server in one process")
    p.add_argument("--mode", choices=("loopback", "socket"), default="loopback")
    _add_camera_args(p)
    _add_engine_args(p)
    _add_oracle_args(p)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("synth", help="generate a synthetic frame sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--frames-count", type=int, default=10)
    p.add_argument("--channels", type=int, default=3, choices=(1, 3))
    p.add_argument("--object", action="append",
                   help="x,y,w,h,vx,vy (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("init-weights", help="write a seeded weights file")
    _add_engine_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_init_weights)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
