"""Pipeline wiring, metrics collection, and report emission.

`run_pipeline` drives a stream causally through the selective-compute encoder
and the token pruner, measuring per-frame FLOPs, retained-token counts and
(optionally) fidelity against a full-computation oracle, plus aggregate
FLOP/latency/prefill ratios.  Reports are deterministic for a fixed config
and seed apart from the wall-time fields.
"""

from __future__ import annotations

import dataclasses
import json
import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import numerics
from .cacher import CacherConfig, FrameStats, new_cacher, process_frame
from .pruner import PrunerConfig, PrunerState, prefill_cost_model, process_frame_prune
from .stream import StreamConfig, generate_stream, load_tensor_file
from .vit import Encoder, EncoderConfig, flop_count_full, full_forward, init_encoder


class ConfigError(ValueError):
    """Invalid or unknown run configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    """Flat run configuration; every key below is accepted in the JSON file."""

    # encoder
    num_layers: int = 6
    token_count: int = 64
    model_dim: int = 64
    num_heads: int = 4
    mlp_ratio: float = 4.0
    ln_eps: float = 1e-5
    encoder_seed: int = 0
    # cacher ("inf" accepted for cache_interval in JSON)
    cacher_enabled: bool = True
    cache_interval: float = 4
    reuse_ratio: float = 0.75
    basis: str = "key"
    metric: str = "cosine"
    reuse_scope: str = "both"
    # pruner
    pruner_enabled: bool = True
    prune_ratio: float = 0.75
    alpha: float = 0.5
    window: int = 8
    # stream source: synthetic unless stream_file is set
    stream_frames: int = 16
    stream_redundancy: float = 0.9
    stream_drift: float = 0.05
    stream_event_period: int = 4
    stream_seed: int = 1
    stream_file: str | None = None
    # run behaviour
    chunk_length: int = 4
    format: str = "json"
    out: str | None = None
    fidelity: bool = True
    bench_repeats: int = 5
    plots: bool = False

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        """Build from a flat JSON mapping; unknown keys are an error."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = dict(mapping)
        if isinstance(values.get("cache_interval"), str):
            word = values["cache_interval"].strip().lower()
            if word in ("inf", "infinite", "infinity"):
                values["cache_interval"] = math.inf
            else:
                raise ConfigError(f"cache_interval string must be 'inf', got {word!r}")
        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        try:
            self.encoder_config()
            if self.cacher_enabled:
                self.cacher_config()
            if self.pruner_enabled:
                self.pruner_config()
            if self.stream_file is None:
                self.stream_config()
            if self.chunk_length < 1:
                raise ValueError(f"chunk_length must be >= 1, got {self.chunk_length}")
            if self.format not in ("json", "csv"):
                raise ValueError(f"format must be 'json' or 'csv', got {self.format!r}")
            if self.bench_repeats < 1:
                raise ValueError(f"bench_repeats must be >= 1, got {self.bench_repeats}")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_layers=self.num_layers,
            token_count=self.token_count,
            model_dim=self.model_dim,
            num_heads=self.num_heads,
            mlp_ratio=self.mlp_ratio,
            ln_eps=self.ln_eps,
            seed=self.encoder_seed,
        )

    def cacher_config(self) -> CacherConfig:
        return CacherConfig(
            cache_interval=self.cache_interval,
            reuse_ratio=self.reuse_ratio,
            basis=self.basis,
            metric=self.metric,
            reuse_scope=self.reuse_scope,
        )

    def pruner_config(self) -> PrunerConfig:
        return PrunerConfig(prune_ratio=self.prune_ratio, alpha=self.alpha, window=self.window)

    def stream_config(self) -> StreamConfig:
        return StreamConfig(
            num_frames=self.stream_frames,
            token_count=self.token_count,
            dim=self.model_dim,
            redundancy=self.stream_redundancy,
            drift=self.stream_drift,
            event_period=self.stream_event_period,
            seed=self.stream_seed,
        )

    def echo(self) -> dict:
        """All fields with defaults resolved, JSON-safe."""
        out = dataclasses.asdict(self)
        if out["cache_interval"] == math.inf:
            out["cache_interval"] = "inf"
        return out


@dataclass
class FrameMetrics:
    frame: int  # 1-based
    is_reference: bool
    dynamic_k: int
    retained: int
    flops_vit: int
    fidelity_cosine: float | None
    fidelity_max_abs_err: float | None


@dataclass
class MetricsReport:
    config: dict
    frames: list[FrameMetrics]
    aggregate: dict


@dataclass
class RedundancyEntry:
    layer_index: int
    mean_adjacent_cosine: float
    std: float


@dataclass
class RedundancyProfile:
    stride: int
    entries: list[RedundancyEntry]


def _rowwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return numerics.rowwise_similarity(a, b, "cosine")


def _fidelity(compressed: np.ndarray, full: np.ndarray) -> tuple[float, float]:
    """Mean token-wise cosine and max abs error between two token matrices."""
    if np.array_equal(compressed, full):
        return 1.0, 0.0
    cos = float(_rowwise_cosine(compressed, full).mean())
    err = float(np.max(np.abs(compressed.astype(np.float64) - full.astype(np.float64))))
    return cos, err


def load_frames(config: RunConfig) -> list[np.ndarray]:
    """Resolve the stream source and check it against the encoder dims."""
    if config.stream_file is not None:
        frames = load_tensor_file(config.stream_file)
    else:
        frames = generate_stream(config.stream_config()).frames
    shape = (config.token_count, config.model_dim)
    if frames and frames[0].shape != shape:
        raise ConfigError(
            f"stream frames have shape {frames[0].shape}, encoder expects {shape}"
        )
    return frames


def bench_vit(
    encoder: Encoder,
    frames: list[np.ndarray],
    cacher_config: CacherConfig | None,
    repeats: int = 5,
) -> dict:
    """Median wall time (ms) over warm repeats for full vs. selective encoding."""

    def run_full():
        for frame in frames:
            full_forward(encoder, frame)

    def run_selective():
        state = new_cacher(encoder, cacher_config)
        for frame in frames:
            process_frame(state, frame)

    selective = run_selective if cacher_config is not None else run_full

    def timed(fn) -> float:
        start = time.perf_counter()
        fn()
        return (time.perf_counter() - start) * 1e3

    run_full()  # warm-up
    selective()
    full_ms = statistics.median(timed(run_full) for _ in range(repeats))
    selective_ms = statistics.median(timed(selective) for _ in range(repeats))
    return {
        "repeats": repeats,
        "vit_wall_time_full_ms": full_ms,
        "vit_wall_time_selective_ms": selective_ms,
        "speedup": full_ms / selective_ms if selective_ms > 0 else math.inf,
    }


def _prefill_ratio(retained_per_frame: list[int], token_count: int, chunk_length: int) -> float:
    """Quadratic prefill cost of pruned vs. unpruned chunks."""
    pruned_cost = 0.0
    raw_cost = 0.0
    for start in range(0, len(retained_per_frame), chunk_length):
        chunk = retained_per_frame[start : start + chunk_length]
        pruned_cost += prefill_cost_model(sum(chunk))
        raw_cost += prefill_cost_model(token_count * len(chunk))
    return pruned_cost / raw_cost


def run_pipeline(config: RunConfig) -> MetricsReport:
    """Process the stream causally and assemble the metrics report."""
    config.validate()
    if not config.cacher_enabled and not config.pruner_enabled:
        raise ConfigError("at least one of cacher/pruner must be enabled for a run")

    enc_cfg = config.encoder_config()
    encoder = init_encoder(enc_cfg)
    frames = load_frames(config)
    cacher_cfg = config.cacher_config() if config.cacher_enabled else None
    cacher_state = new_cacher(encoder, cacher_cfg) if cacher_cfg else None
    pruner_state = PrunerState(config.pruner_config()) if config.pruner_enabled else None

    full_flops = flop_count_full(enc_cfg)
    per_frame: list[FrameMetrics] = []
    flops_total = 0
    retained_counts: list[int] = []
    fidelities: list[float] = []

    for index, frame in enumerate(frames, start=1):
        if cacher_state is not None:
            out, stats = process_frame(cacher_state, frame)
        else:
            result = full_forward(encoder, frame)
            out = result.output
            stats = FrameStats(
                is_reference=True,
                dynamic_count=enc_cfg.token_count,
                flops=result.flops,
                per_layer_dynamic_sets=[],
            )

        cosine = max_err = None
        if config.fidelity:
            if stats.is_reference:
                # the reference branch is the full forward pass itself
                cosine, max_err = 1.0, 0.0
            else:
                oracle = full_forward(encoder, frame).output
                cosine, max_err = _fidelity(out, oracle)
            fidelities.append(cosine)

        if pruner_state is not None:
            retained = int(process_frame_prune(pruner_state, out).retained_indices.shape[0])
        else:
            retained = enc_cfg.token_count
        retained_counts.append(retained)

        flops_total += stats.flops
        per_frame.append(
            FrameMetrics(
                frame=index,
                is_reference=stats.is_reference,
                dynamic_k=stats.dynamic_count,
                retained=retained,
                flops_vit=stats.flops,
                fidelity_cosine=cosine,
                fidelity_max_abs_err=max_err,
            )
        )

    timing = bench_vit(encoder, frames, cacher_cfg, repeats=max(config.bench_repeats, 1))
    aggregate = {
        "vit_flop_ratio": flops_total / (len(frames) * full_flops),
        "vit_wall_time_full_ms": timing["vit_wall_time_full_ms"],
        "vit_wall_time_selective_ms": timing["vit_wall_time_selective_ms"],
        "prefill_cost_ratio": _prefill_ratio(
            retained_counts, enc_cfg.token_count, config.chunk_length
        ),
        "mean_fidelity": float(np.mean(fidelities)) if fidelities else None,
    }
    return MetricsReport(config=config.echo(), frames=per_frame, aggregate=aggregate)


def analyze_redundancy(
    frames: list[np.ndarray], encoder: Encoder, stride: int = 1
) -> RedundancyProfile:
    """Per-layer mean cosine similarity between frames `stride` apart.

    Runs the full encoder on every frame; for each layer, the reported mean
    and std are over frame pairs (t, t + stride) of the mean token-wise
    cosine similarity of that layer's block outputs.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if len(frames) < stride + 1:
        raise ValueError(f"need at least stride+1={stride + 1} frames, got {len(frames)}")
    outputs = [full_forward(encoder, frame).traces for frame in frames]
    entries = []
    for layer in range(encoder.config.num_layers):
        pair_means = [
            float(_rowwise_cosine(outputs[t][layer].block_out, outputs[t + stride][layer].block_out).mean())
            for t in range(len(frames) - stride)
        ]
        entries.append(
            RedundancyEntry(
                layer_index=layer,
                mean_adjacent_cosine=float(np.mean(pair_means)),
                std=float(np.std(pair_means)),
            )
        )
    return RedundancyProfile(stride=stride, entries=entries)


# --- report serialization ---------------------------------------------------

_CSV_FIELDS = (
    "frame",
    "is_reference",
    "dynamic_k",
    "retained",
    "flops_vit",
    "fidelity_cosine",
    "fidelity_max_abs_err",
)

_AGG_FIELDS = (
    "vit_flop_ratio",
    "vit_wall_time_full_ms",
    "vit_wall_time_selective_ms",
    "prefill_cost_ratio",
    "mean_fidelity",
)


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "config": report.config,
        "frames": [dataclasses.asdict(fm) for fm in report.frames],
        "aggregate": {key: report.aggregate[key] for key in _AGG_FIELDS},
    }


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return repr(value) if isinstance(value, float) else str(value)


def render_report(report: MetricsReport, format: str) -> str:
    if format == "json":
        return json.dumps(report_to_dict(report), indent=2) + "\n"
    if format == "csv":
        lines = [",".join(_CSV_FIELDS)]
        for fm in report.frames:
            row = dataclasses.asdict(fm)
            lines.append(",".join(_csv_cell(row[field]) for field in _CSV_FIELDS))
        for key in _AGG_FIELDS:
            lines.append(f"#agg,{key},{_csv_cell(report.aggregate[key])}")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"format must be 'json' or 'csv', got {format!r}")


def emit_report(report: MetricsReport, format: str, path):
    """Write the report; I/O errors propagate to the caller (CLI exit 3)."""
    text = render_report(report, format)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def redundancy_to_dict(profile: RedundancyProfile) -> dict:
    return {
        "stride": profile.stride,
        "layers": [dataclasses.asdict(entry) for entry in profile.entries],
    }


def emit_redundancy(profile: RedundancyProfile, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(redundancy_to_dict(profile), indent=2) + "\n")
