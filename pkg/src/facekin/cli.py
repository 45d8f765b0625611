"""Command-line driver.

    facekin pipeline  --frames DIR --landmarks F --canonical F [...] --out DIR
    facekin warp      --frames DIR --landmarks F --canonical F --out DIR
    facekin flow      --frames DIR --landmarks F --canonical F --out F.csv
    facekin smooth    --fields F.csv --canonical F [...] --out F.csv
    facekin overlay   --fields F.csv --frames DIR --landmarks F --canonical F --out DIR
    facekin features  --fields F.csv --canonical F [...] --out F.csv

Exit codes: 0 ok, 2 input error, 3 numeric failure, 64 usage.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import pipeline
from .core import PipelineConfig
from .errors import FacekinError
from .ingest import load_config

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"facekin: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(p):
    p.add_argument("--config", help="pipeline config JSON; flags override it")
    p.add_argument("--spectral-k", type=int, dest="spectral_k")
    p.add_argument("--gamma", type=float)
    p.add_argument("--subdivision", type=int)
    p.add_argument("--overlay-scale", type=float, dest="overlay_scale")


def _add_descriptor_flags(p):
    p.add_argument("--descriptors", help="muscle descriptor JSON file")
    p.add_argument(
        "--uniform-descriptors",
        type=int,
        metavar="M",
        dest="uniform_descriptors",
        help="run with M uniform-weight descriptors instead of a file",
    )


def _add_input_flags(p, frames=True, landmarks=True):
    if frames:
        p.add_argument("--frames", required=True, help="frame directory or .y4m file")
    if landmarks:
        p.add_argument("--landmarks", required=True, help="per-frame landmark JSON")
    p.add_argument("--canonical", required=True, help="canonical model JSON")


def build_parser() -> _Parser:
    parser = _Parser(prog="facekin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_input_flags(p)
    _add_descriptor_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--anchor", choices=("consecutive", "first"), default="consecutive")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--emit-canonical", action="store_true", dest="emit_canonical")
    p.add_argument("--emit-y4m", action="store_true", dest="emit_y4m")
    p.add_argument("--heat", action="store_true", help="draw the heat underlay")
    p.add_argument("--label", default="", help="class label for the features row")

    p = sub.add_parser("warp", help="emit canonical frames as PGM")
    _add_input_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("flow", help="raw displacement fields to CSV")
    _add_input_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--anchor", choices=("consecutive", "first"), default="consecutive")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("smooth", help="smooth a raw field CSV")
    p.add_argument("--fields", required=True, help="raw field CSV")
    _add_input_flags(p, frames=False, landmarks=False)
    _add_descriptor_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("overlay", help="render overlays from a smoothed CSV")
    p.add_argument("--fields", required=True, help="smoothed field CSV")
    _add_input_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--heat", action="store_true")

    p = sub.add_parser("features", help="feature row from a smoothed CSV")
    p.add_argument("--fields", required=True, help="smoothed field CSV")
    _add_input_flags(p, frames=False, landmarks=False)
    _add_descriptor_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="")

    return parser


def _config_from_args(args) -> PipelineConfig:
    base = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    if getattr(args, "spectral_k", None) is not None:
        overrides["spectral_modes"] = args.spectral_k
    if getattr(args, "gamma", None) is not None:
        overrides["mks_gamma"] = args.gamma
    if getattr(args, "subdivision", None) is not None:
        overrides["subdivision_depth"] = args.subdivision
    if getattr(args, "overlay_scale", None) is not None:
        overrides["overlay_scale"] = args.overlay_scale
    if not overrides:
        return base
    return PipelineConfig(**dict(base.as_dict(), **overrides))


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "pipeline":
        config = _config_from_args(args)
        run = pipeline.run_pipeline(
            args.frames,
            args.landmarks,
            args.canonical,
            args.out,
            config=config,
            descriptors_path=args.descriptors,
            uniform_m=args.uniform_descriptors,
            gamma_override=args.gamma,
            anchor=args.anchor,
            threads=args.threads,
            emit_canonical=args.emit_canonical,
            emit_y4m=args.emit_y4m,
            with_heat=args.heat,
            label=args.label,
        )
        print(
            f"facekin: {run.metadata['field_count']} field(s), "
            f"{run.metadata['dense_landmark_count']} dense landmarks, "
            f"outputs in {run.out_dir}"
        )
    elif cmd == "warp":
        n = pipeline.run_warp_stage(
            args.frames, args.landmarks, args.canonical, args.out, args.threads
        )
        print(f"facekin: wrote {n} canonical frame(s) to {args.out}")
    elif cmd == "flow":
        config = _config_from_args(args)
        n = pipeline.run_flow_stage(
            args.frames, args.landmarks, args.canonical, args.out,
            config=config, anchor=args.anchor, threads=args.threads,
        )
        print(f"facekin: wrote {n} displacement field(s) to {args.out}")
    elif cmd == "smooth":
        config = _config_from_args(args)
        n = pipeline.run_smooth_stage(
            args.fields, args.canonical, args.out,
            config=config,
            descriptors_path=args.descriptors,
            uniform_m=args.uniform_descriptors,
            gamma_override=args.gamma,
        )
        print(f"facekin: smoothed {n} field(s) into {args.out}")
    elif cmd == "overlay":
        config = _config_from_args(args)
        skipped = pipeline.run_overlay_stage(
            args.fields, args.frames, args.landmarks, args.canonical, args.out,
            config=config, threads=args.threads, with_heat=args.heat,
        )
        print(
            f"facekin: rendered {len(skipped)} overlay(s) to {args.out} "
            f"(skipped points per field: {skipped})"
        )
    elif cmd == "features":
        config = _config_from_args(args)
        pipeline.run_features_stage(
            args.fields, args.canonical, args.out,
            config=config,
            descriptors_path=args.descriptors,
            uniform_m=args.uniform_descriptors,
            gamma_override=args.gamma,
            label=args.label,
        )
        print(f"facekin: wrote feature row to {args.out}")
    else:
        build_parser().print_usage(sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


_NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ArithmeticError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _dispatch(args)
    except pipeline.StageFailure as exc:
        code = EXIT_NUMERIC if isinstance(exc.cause, _NUMERIC_ERRORS) else EXIT_INPUT
        print(f"facekin: error: {exc}", file=sys.stderr)
        return code
    except FacekinError as exc:
        print(f"facekin: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _NUMERIC_ERRORS as exc:
        print(f"facekin: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
