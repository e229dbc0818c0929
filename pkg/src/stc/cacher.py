"""Cache-aware selective recomputation for the streaming encoder.

Every `cache_interval`-th frame (and always the first) is a reference frame:
it takes a full forward pass and its per-layer activations are cached.  Every
other frame recomputes only its most-changed tokens per layer:

  1. Keys are projected fresh for all tokens (they are needed both for the
     change score and for attention).
  2. Row-wise similarity between the fresh basis and the cached reference
     basis picks the `floor(T * (1 - reuse_ratio))` least-similar "dynamic"
     tokens.
  3. Queries and values are projected only for dynamic rows; fresh values are
     scattered into a copy of the cached value matrix, and the dynamic rows
     attend over all tokens against that blended matrix.
  4. Attention and MLP results are scattered into copies of the cached
     post-attention / post-MLP states; everything outside the dynamic set is
     carried over from the reference untouched.

The scattered block output becomes the next layer's input, so reuse is exact
when the incoming frame equals the reference frame.  `reuse_scope` restricts
reuse to one sublayer: with "attn_only" the MLP runs on every row, with
"mlp_only" attention runs on every row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .vit import (
    Encoder,
    EncoderConfig,
    FlopCounter,
    LayerTrace,
    attention_rows,
    counted_matmul,
    full_forward,
    gelu,
)

SIMILARITY_BASES = ("key", "value", "feature")

REUSE_SCOPES = ("attn_only", "mlp_only", "both")

INFINITE = math.inf


@dataclass(frozen=True)
class CacherConfig:
    cache_interval: float = 4  # frames between reference refreshes; math.inf = never refresh
    reuse_ratio: float = 0.75  # fraction of tokens reused from cache
    basis: str = "key"  # which activation the change score compares
    metric: str = "cosine"
    reuse_scope: str = "both"

    def __post_init__(self):
        n = self.cache_interval
        if n != INFINITE and (n < 1 or int(n) != n):
            raise ValueError(f"cache_interval must be an integer >= 1 or infinite, got {n}")
        if not 0.0 <= self.reuse_ratio < 1.0:
            raise ValueError(f"reuse_ratio must lie in [0, 1), got {self.reuse_ratio}")
        if self.basis not in SIMILARITY_BASES:
            raise ValueError(f"unknown basis {self.basis!r}, expected one of {SIMILARITY_BASES}")
        if self.metric not in numerics.SIMILARITY_METRICS:
            raise ValueError(
                f"unknown metric {self.metric!r}, expected one of {numerics.SIMILARITY_METRICS}"
            )
        if self.reuse_scope not in REUSE_SCOPES:
            raise ValueError(
                f"unknown reuse_scope {self.reuse_scope!r}, expected one of {REUSE_SCOPES}"
            )


@dataclass
class LayerCacheBank:
    """Per-layer reference activations, refreshed only at reference frames."""

    traces: list[LayerTrace]
    reference_frame_index: int


@dataclass
class FrameStats:
    is_reference: bool
    dynamic_count: int  # tokens recomputed per layer (T for reference frames)
    flops: int
    per_layer_dynamic_sets: list[np.ndarray]


@dataclass
class CacherState:
    """Single-owner mutable state for one stream, processed in frame order."""

    encoder: Encoder
    config: CacherConfig
    frames_seen: int = 0
    bank: LayerCacheBank | None = None
    # reference bases for basis="feature": the normalized block inputs of the
    # reference frame, one matrix per layer (derived, refreshed with the bank)
    feature_basis: list[np.ndarray] | None = field(default=None, repr=False)


def new_cacher(encoder: Encoder, config: CacherConfig) -> CacherState:
    """Fresh state: empty cache, frame counter 0, first frame is a reference."""
    return CacherState(encoder=encoder, config=config)


def is_reference_frame(t: int, cache_interval: float) -> bool:
    """1-based reference schedule: frames 1, 1+N, 1+2N, ...; only 1 if infinite."""
    if cache_interval == INFINITE:
        return t == 1
    return (t - 1) % int(cache_interval) == 0


def dynamic_token_count(token_count: int, reuse_ratio: float) -> int:
    return int(math.floor(token_count * (1.0 - reuse_ratio)))


def identify_dynamic_tokens(
    curr_basis: np.ndarray, ref_basis: np.ndarray, config: CacherConfig
) -> np.ndarray:
    """Pick the least-similar rows between current and reference basis.

    Returns the indices of the `floor(T * (1 - reuse_ratio))` rows whose
    similarity under `config.metric` is lowest, ascending, ties to the lower
    index.
    """
    sims = numerics.rowwise_similarity(curr_basis, ref_basis, config.metric)
    k = dynamic_token_count(curr_basis.shape[0], config.reuse_ratio)
    return numerics.top_k_indices(sims, k, direction="smallest")


def selective_layer_forward(
    encoder: Encoder,
    layer_index: int,
    x: np.ndarray,
    cache: LayerTrace,
    dyn: np.ndarray,
    config: CacherConfig,
    *,
    ln1_x: np.ndarray | None = None,
    keys: np.ndarray | None = None,
    values_full: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """One block's forward pass recomputing only the rows in `dyn`.

    The optional keyword arguments let the caller pass in the normalized
    input / fresh key (and, for basis="value", full value) matrices it already
    computed for token identification, so their cost is counted exactly once.
    Returns the scattered block output and the FLOPs spent in this call.
    """
    if cache is None:
        raise RuntimeError("layer cache is not populated; process a reference frame first")
    cfg = encoder.config
    lw = encoder.layers[layer_index]
    tokens = cfg.token_count
    counter = FlopCounter()

    every_row = np.arange(tokens, dtype=np.int64)
    attn_rows = every_row if config.reuse_scope == "mlp_only" else dyn
    mlp_rows = every_row if config.reuse_scope == "attn_only" else dyn

    h = ln1_x if ln1_x is not None else numerics.layer_norm(x, lw.ln1_gamma, lw.ln1_beta, cfg.ln_eps)
    if keys is None:
        keys = counted_matmul(h, lw.wk, counter)

    q_sel = counted_matmul(h[attn_rows], lw.wq, counter)
    if values_full is not None:
        v_sel = values_full[attn_rows]
    else:
        v_sel = counted_matmul(h[attn_rows], lw.wv, counter)
    v_bar = cache.values.copy()
    v_bar[attn_rows] = v_sel

    ctx = attention_rows(q_sel, keys, v_bar, cfg.num_heads, counter)
    a_sel = x[attn_rows] + counted_matmul(ctx, lw.wo, counter)
    a_bar = cache.attn_out.copy()
    a_bar[attn_rows] = a_sel

    rows = a_bar[mlp_rows]
    h2 = numerics.layer_norm(rows, lw.ln2_gamma, lw.ln2_beta, cfg.ln_eps)
    m_rows = rows + counted_matmul(gelu(counted_matmul(h2, lw.w_in, counter)), lw.w_out, counter)
    m_bar = cache.block_out.copy()
    m_bar[mlp_rows] = m_rows
    return m_bar, counter.total


def _refresh_bank(state: CacherState, frame: np.ndarray, t: int):
    result = full_forward(state.encoder, frame)
    state.bank = LayerCacheBank(traces=result.traces, reference_frame_index=t)
    if state.config.basis == "feature":
        cfg = state.encoder.config
        inputs = [np.ascontiguousarray(frame, dtype=np.float32)]
        inputs += [tr.block_out for tr in result.traces[:-1]]
        state.feature_basis = [
            numerics.layer_norm(inp, lw.ln1_gamma, lw.ln1_beta, cfg.ln_eps)
            for inp, lw in zip(inputs, state.encoder.layers)
        ]
    return result


def process_frame(state: CacherState, frame: np.ndarray) -> tuple[np.ndarray, FrameStats]:
    """Encode one frame, either fully (reference) or selectively.

    Mutates `state`: advances the frame counter and, on reference frames,
    replaces the cache bank.  Non-reference frames never touch the bank.
    """
    cfg = state.encoder.config
    frame = np.ascontiguousarray(frame, dtype=np.float32)
    if frame.shape != (cfg.token_count, cfg.model_dim):
        raise ValueError(
            f"frame shape {frame.shape} does not match encoder "
            f"({cfg.token_count}, {cfg.model_dim})"
        )
    t = state.frames_seen + 1
    config = state.config

    if is_reference_frame(t, config.cache_interval):
        result = _refresh_bank(state, frame, t)
        state.frames_seen = t
        stats = FrameStats(
            is_reference=True,
            dynamic_count=cfg.token_count,
            flops=result.flops,
            per_layer_dynamic_sets=[],
        )
        return result.output, stats

    bank = state.bank
    if bank is None:
        raise RuntimeError("cache bank is empty on a non-reference frame")

    x = frame
    counter = FlopCounter()
    dynamic_sets = []
    k = dynamic_token_count(cfg.token_count, config.reuse_ratio)
    for layer_index, lw in enumerate(state.encoder.layers):
        trace = bank.traces[layer_index]
        h = numerics.layer_norm(x, lw.ln1_gamma, lw.ln1_beta, cfg.ln_eps)
        keys = counted_matmul(h, lw.wk, counter)
        values_full = None
        if config.basis == "key":
            curr_basis, ref_basis = keys, trace.keys
        elif config.basis == "value":
            values_full = counted_matmul(h, lw.wv, counter)
            curr_basis, ref_basis = values_full, trace.values
        else:  # feature
            curr_basis, ref_basis = h, state.feature_basis[layer_index]
        dyn = identify_dynamic_tokens(curr_basis, ref_basis, config)
        dynamic_sets.append(dyn)
        x, layer_flops = selective_layer_forward(
            state.encoder,
            layer_index,
            x,
            trace,
            dyn,
            config,
            ln1_x=h,
            keys=keys,
            values_full=values_full,
        )
        counter.total += layer_flops

    state.frames_seen = t
    stats = FrameStats(
        is_reference=False,
        dynamic_count=k,
        flops=counter.total,
        per_layer_dynamic_sets=dynamic_sets,
    )
    return x, stats


def flop_count_selective(enc_config: EncoderConfig, cacher_config: CacherConfig) -> int:
    """Closed-form FLOPs of one non-reference frame (matmul multiply-adds x 2).

    Mirrors the selective path exactly: keys are always projected for all
    rows, values for all rows only when they are the similarity basis, and
    the attention / MLP stages run on all rows when the reuse scope excludes
    them.
    """
    t, d, h = enc_config.token_count, enc_config.model_dim, enc_config.mlp_hidden
    k = dynamic_token_count(t, cacher_config.reuse_ratio)
    k_attn = t if cacher_config.reuse_scope == "mlp_only" else k
    k_mlp = t if cacher_config.reuse_scope == "attn_only" else k
    madds = t * d * d  # key projection, all rows
    madds += t * d * d if cacher_config.basis == "value" else k_attn * d * d  # value projection
    madds += k_attn * d * d  # query projection
    madds += 2 * k_attn * t * d  # attention scores + weighted sum
    madds += k_attn * d * d  # output projection
    madds += 2 * k_mlp * d * h  # MLP in / out
    return enc_config.num_layers * 2 * madds
