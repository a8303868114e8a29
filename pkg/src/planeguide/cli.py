"""Command-line interface: phantom generation, slicing, registration,
scan simulation, benchmarking, and the HTTP service.

Exit codes: 0 success, 2 usage error, 1 runtime error. Every randomized
subcommand takes --seed, so identical invocations write identical files.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .alignment import ContrastiveConfig, OptimizerConfig, save_scan
from .evaluation import TrajectoryConfig, run_benchmark, simulate_scan
from .geometry import Pose, rotation_angle_3d
from .registration import RegistrationConfig, register_slice
from .volume import (
    DEFAULT_SLICE_SIZE,
    SliceImage,
    generate_phantom,
    load_standard_planes,
    load_volume,
    quantize_u8,
    sample_slice,
    save_standard_planes,
    save_volume,
)

SCHEMA_VERSION = 1


def planes_path(volume_path) -> Path:
    """Standard-plane sidecar convention: <volume>.planes.json next to the raw file."""
    p = Path(volume_path)
    raw = p if p.suffix == ".raw" else p.with_name(p.name + ".raw")
    return raw.with_name(raw.stem + ".planes.json")


def _parse_json_arg(text: str, what: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{what} is not valid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise ValueError(f"{what} must be a JSON object")
    return value


def _pose_from_arg(text: str) -> Pose:
    d = _parse_json_arg(text, "pose")
    if "q" not in d or "delta" not in d:
        raise ValueError('pose JSON needs "q" and "delta"')
    return Pose.from_dict(d)


def _reg_config_from_arg(text: str | None) -> RegistrationConfig:
    if text is None:
        return RegistrationConfig()
    return RegistrationConfig(**_parse_json_arg(text, "config"))


def _load_planes_for(volume_path):
    path = planes_path(volume_path)
    if not path.exists():
        raise FileNotFoundError(
            f"no standard-plane sidecar at {path}; generate the volume with the phantom command"
        )
    return load_standard_planes(path)


def _pick_plane(sps, sp_id: str):
    for sp in sps:
        if sp.sp_id == sp_id:
            return sp
    known = sorted(sp.sp_id for sp in sps)
    raise ValueError(f"unknown standard plane {sp_id!r}; available: {known}")


def _cmd_phantom(args) -> int:
    volume, sps = generate_phantom(args.seed, dims=tuple(args.dims))
    raw_path = save_volume(volume, args.out)
    sp_path = save_standard_planes(sps, planes_path(raw_path))
    print(json.dumps({
        "schema_version": SCHEMA_VERSION,
        "volume": str(raw_path),
        "standard_planes": str(sp_path),
        "dims": list(volume.dims),
    }))
    return 0


def _cmd_slice(args) -> int:
    volume = load_volume(args.volume)
    pose = _pose_from_arg(args.pose)
    image = sample_slice(volume, pose, args.size, args.size)
    out = Path(args.out)
    np.save(out, image.intensities)
    written = {"schema_version": SCHEMA_VERSION, "out": str(out)}
    if args.u8:
        Path(args.u8).write_bytes(quantize_u8(image).tobytes())
        written["u8"] = args.u8
    print(json.dumps(written))
    return 0


def _cmd_register(args) -> int:
    volume = load_volume(args.volume)
    arr = np.load(args.image)
    result = register_slice(volume, SliceImage(intensities=arr), _reg_config_from_arg(args.config))
    payload = result.to_dict()
    payload["schema_version"] = SCHEMA_VERSION
    if args.truth is not None:
        truth = _pose_from_arg(args.truth)
        payload["rotation_error_deg"] = float(
            np.degrees(rotation_angle_3d(result.pose.q, truth.q))
        )
        payload["translation_error"] = float(np.linalg.norm(result.pose.delta - truth.delta))
    print(json.dumps(payload))
    return 0


def _cmd_simulate(args) -> int:
    volume = load_volume(args.volume)
    sp = _pick_plane(_load_planes_for(args.volume), args.sp)
    cfg = TrajectoryConfig(
        steps=args.steps,
        start_offset_deg=args.offset,
        noise_deg=args.noise,
        rng_seed=args.seed,
        frame_noise=args.frame_noise,
    )
    scan, _ = simulate_scan(volume, sp, cfg, size=args.size)
    directory = save_scan(scan, args.out)
    print(json.dumps({
        "schema_version": SCHEMA_VERSION,
        "out": str(directory),
        "frame_count": len(scan),
        "sp_index": scan.sp_index,
        "sp_id": scan.sp_id,
    }))
    return 0


def _cmd_benchmark(args) -> int:
    volume = load_volume(args.volume)
    sps = _load_planes_for(args.volume)
    table = run_benchmark(
        volume,
        sps,
        args.scans,
        traj_cfg=TrajectoryConfig(
            steps=args.steps, rng_seed=args.seed, frame_noise=args.frame_noise
        ),
        reg_cfg=_reg_config_from_arg(args.reg_config),
        align_cfg=ContrastiveConfig(),
        opt_cfg=OptimizerConfig(),
        size=args.size,
    )
    Path(args.out).write_text(table.to_json())
    print(table.to_text())
    return 0


def _cmd_serve(args) -> int:
    from .server import serve_forever

    volume = load_volume(args.volume) if args.volume else None
    sps = _load_planes_for(args.volume) if args.volume else []
    serve_forever(
        volume,
        sps,
        host=args.host,
        port=args.port,
        cors=args.cors,
        static_dir=args.static,
        reg_cfg=_reg_config_from_arg(args.reg_config),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planeguide",
        description="Slice-to-volume registration and standard-plane guidance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate the synthetic head phantom")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dims", type=int, nargs=3, default=[64, 64, 64], metavar=("W", "H", "D"))
    p.add_argument("--out", required=True, help="volume path; planes sidecar written alongside")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("slice", help="render an oriented slice to a .npy file")
    p.add_argument("--volume", required=True)
    p.add_argument("--pose", required=True, help='JSON, e.g. \'{"q":[1,0,0,0],"delta":[0,0,0]}\'')
    p.add_argument("--size", type=int, default=DEFAULT_SLICE_SIZE)
    p.add_argument("--out", required=True, help="output .npy path")
    p.add_argument("--u8", default=None, help="also write row-major 8-bit grayscale bytes here")
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("register", help="localize a 2D image inside the volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--image", required=True, help=".npy image file")
    p.add_argument("--config", default=None, help="JSON overriding registration defaults")
    p.add_argument("--truth", default=None, help="pose JSON; adds error fields to the output")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("simulate", help="simulate a sweep onto a standard plane")
    p.add_argument("--volume", required=True)
    p.add_argument("--sp", required=True, help="standard plane id, e.g. tvp")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--steps", type=int, default=TrajectoryConfig().steps)
    p.add_argument("--offset", type=float, default=TrajectoryConfig().start_offset_deg)
    p.add_argument("--noise", type=float, default=TrajectoryConfig().noise_deg)
    p.add_argument("--frame-noise", type=float, default=0.0, help="pixel noise sigma")
    p.add_argument("--size", type=int, default=DEFAULT_SLICE_SIZE)
    p.add_argument("--out", required=True, help="output scan directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("benchmark", help="score predictors on simulated scans")
    p.add_argument("--volume", required=True)
    p.add_argument("--scans", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=TrajectoryConfig().steps)
    p.add_argument("--frame-noise", type=float, default=0.0, help="pixel noise sigma")
    p.add_argument("--size", type=int, default=DEFAULT_SLICE_SIZE)
    p.add_argument("--reg-config", default=None, help="JSON overriding registration defaults")
    p.add_argument("--out", required=True, help="output JSON path; text table goes to stdout")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("serve", help="serve the HTTP API and optional static console")
    p.add_argument("--volume", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--cors", action="store_true", help="allow cross-origin requests")
    p.add_argument("--static", default=None, help="directory of static assets to serve at /")
    p.add_argument("--reg-config", default=None, help="JSON overriding registration defaults")
    p.set_defaults(func=_cmd_serve)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
