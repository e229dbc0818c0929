"""Command-line interface.

Subcommands: `run` (pipeline + metrics report), `gen` (write a synthetic
stream in STC1 format), `redundancy` (per-layer adjacent-frame similarity),
`bench` (latency-focused timing).  Exit codes: 0 success, 2 config error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    RunConfig,
    analyze_redundancy,
    bench_vit,
    emit_redundancy,
    emit_report,
    load_frames,
    redundancy_to_dict,
    render_report,
    run_pipeline,
)
from .stream import StreamConfig, StreamFormatError, generate_stream, write_tensor_file
from .vit import flop_count_full, init_encoder
from .cacher import flop_count_selective

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise _IoFailure(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return RunConfig.from_mapping(raw)


class _IoFailure(Exception):
    pass


def _cmd_run(args) -> int:
    config = _load_run_config(args.config)
    if args.out is not None:
        config.out = args.out
    if args.format is not None:
        config.format = args.format
    if args.no_fidelity:
        config.fidelity = False
    if args.plots:
        config.plots = True
    config.validate()
    if config.plots and config.out is None:
        raise ConfigError("--plots needs --out (figures are written next to the report)")

    report = run_pipeline(config)
    if config.out is None:
        sys.stdout.write(render_report(report, config.format))
    else:
        try:
            emit_report(report, config.format, config.out)
        except OSError as exc:
            raise _IoFailure(f"cannot write report {config.out}: {exc}") from exc
    if config.plots:
        from .figures import render_run_figures

        try:
            paths = render_run_figures(report, Path(config.out).with_suffix(""))
        except OSError as exc:
            raise _IoFailure(f"cannot write figures: {exc}") from exc
        for p in paths:
            print(f"wrote {p}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    try:
        config = StreamConfig(
            num_frames=args.frames,
            token_count=args.tokens,
            dim=args.dim,
            redundancy=args.rho,
            drift=args.sigma,
            event_period=args.event_period,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    synthetic = generate_stream(config)
    try:
        write_tensor_file(args.out, synthetic.frames)
    except OSError as exc:
        raise _IoFailure(f"cannot write stream {args.out}: {exc}") from exc
    print(f"wrote {args.out}: {config.num_frames} frames of {config.token_count}x{config.dim}")
    return EXIT_OK


def _cmd_redundancy(args) -> int:
    config = _load_run_config(args.config)
    encoder = init_encoder(config.encoder_config())
    frames = load_frames(config)
    try:
        profile = analyze_redundancy(frames, encoder, stride=args.stride)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out is None:
        sys.stdout.write(json.dumps(redundancy_to_dict(profile), indent=2) + "\n")
    else:
        try:
            emit_redundancy(profile, args.out)
        except OSError as exc:
            raise _IoFailure(f"cannot write profile {args.out}: {exc}") from exc
        if args.plots:
            from .figures import render_redundancy_figure

            try:
                path = render_redundancy_figure(
                    profile, Path(args.out).with_suffix("").with_name(Path(args.out).stem + ".png")
                )
            except OSError as exc:
                raise _IoFailure(f"cannot write figure: {exc}") from exc
            print(f"wrote {path}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = _load_run_config(args.config)
    if args.repeats < 1:
        raise ConfigError(f"--repeats must be >= 1, got {args.repeats}")
    encoder = init_encoder(config.encoder_config())
    frames = load_frames(config)
    cacher_cfg = config.cacher_config() if config.cacher_enabled else None
    timing = bench_vit(encoder, frames, cacher_cfg, repeats=args.repeats)
    result = dict(timing)
    full = flop_count_full(config.encoder_config())
    if cacher_cfg is not None:
        selective = flop_count_selective(config.encoder_config(), cacher_cfg)
        result["flop_count_full"] = full
        result["flop_count_selective"] = selective
    print(f"full:      {result['vit_wall_time_full_ms']:.3f} ms / stream")
    print(f"selective: {result['vit_wall_time_selective_ms']:.3f} ms / stream")
    print(f"speedup:   {result['speedup']:.3f}x (median of {args.repeats})")
    if args.out is not None:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(result, indent=2) + "\n")
        except OSError as exc:
            raise _IoFailure(f"cannot write benchmark {args.out}: {exc}") from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the compression pipeline and emit a metrics report")
    run.add_argument("--config", required=True, help="flat JSON run configuration")
    run.add_argument("--no-fidelity", action="store_true", help="skip the full-forward oracle")
    run.add_argument("--out", default=None, help="report path (stdout when omitted)")
    run.add_argument("--format", choices=("json", "csv"), default=None)
    run.add_argument("--plots", action="store_true", help="render PNG figures next to the report")
    run.set_defaults(func=_cmd_run)

    gen = sub.add_parser("gen", help="generate a synthetic stream as an STC1 file")
    gen.add_argument("--frames", type=int, default=16)
    gen.add_argument("--tokens", type=int, default=64)
    gen.add_argument("--dim", type=int, default=64)
    gen.add_argument("--rho", type=float, default=0.9, help="fraction of rows copied per frame")
    gen.add_argument("--sigma", type=float, default=0.0, help="drift noise on copied rows")
    gen.add_argument("--event-period", type=int, default=4)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen)

    red = sub.add_parser("redundancy", help="per-layer adjacent-frame similarity profile")
    red.add_argument("--config", required=True)
    red.add_argument("--stride", type=int, default=1)
    red.add_argument("--out", default=None)
    red.add_argument("--plots", action="store_true")
    red.set_defaults(func=_cmd_redundancy)

    bench = sub.add_parser("bench", help="latency-focused timing of full vs selective encoding")
    bench.add_argument("--config", required=True)
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--out", default=None)
    bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StreamFormatError as exc:
        print(f"stream format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _IoFailure as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
