"""Minimal pre-norm Vision-Transformer encoder with activation tracing.

Weights come from a seeded PRNG so two encoders built from the same config
are bit-identical.  A forward pass records, per block, the key/value
projections and the post-attention / post-MLP hidden states (residuals
included) that the streaming cache reuses.

The FLOP model counts dense matmul multiply-adds only, at 2 FLOPs each;
layer norm, softmax and activation costs are excluded.  The runtime counter
is incremented from actual operand shapes at every matmul site, so the
closed-form `flop_count_full` can be checked against it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 6
    token_count: int = 64  # tokens per frame
    model_dim: int = 64
    num_heads: int = 4
    mlp_ratio: float = 4.0  # MLP hidden width = mlp_ratio * model_dim
    ln_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        for name in ("num_layers", "token_count", "model_dim", "num_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}"
            )
        if self.mlp_ratio <= 0:
            raise ValueError(f"mlp_ratio must be positive, got {self.mlp_ratio}")
        if self.ln_eps <= 0:
            raise ValueError(f"ln_eps must be positive, got {self.ln_eps}")
        if self.mlp_hidden < 1:
            raise ValueError(f"mlp_ratio {self.mlp_ratio} yields an empty MLP hidden layer")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.model_dim))


@dataclass
class LayerWeights:
    """One transformer block's parameters (no biases on the projections)."""

    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    w_in: np.ndarray
    w_out: np.ndarray


@dataclass
class Encoder:
    config: EncoderConfig
    layers: list[LayerWeights]


@dataclass
class LayerTrace:
    """Per-block activations cached for selective recomputation.

    `attn_out` and `block_out` are post-residual hidden states, so a cached
    row is a complete hidden state that can be carried forward verbatim.
    """

    keys: np.ndarray  # T x D, projection of the normalized block input
    values: np.ndarray  # T x D
    attn_out: np.ndarray  # T x D, input + attention output
    block_out: np.ndarray  # T x D, attn_out + MLP output


@dataclass
class ForwardResult:
    output: np.ndarray
    traces: list[LayerTrace]
    flops: int


class FlopCounter:
    """Accumulates matmul multiply-adds (2 FLOPs each) from operand shapes."""

    __slots__ = ("total",)

    def __init__(self):
        self.total = 0

    def add_matmul(self, m: int, k: int, n: int, batch: int = 1):
        self.total += 2 * batch * m * k * n


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_encoder(config: EncoderConfig) -> Encoder:
    """Build an encoder with scaled-uniform weights from the config seed."""
    rng = np.random.default_rng(config.seed)
    d, h = config.model_dim, config.mlp_hidden
    layers = []
    for _ in range(config.num_layers):
        layers.append(
            LayerWeights(
                ln1_gamma=np.ones(d, dtype=np.float32),
                ln1_beta=np.zeros(d, dtype=np.float32),
                wq=_uniform(rng, d, (d, d)),
                wk=_uniform(rng, d, (d, d)),
                wv=_uniform(rng, d, (d, d)),
                wo=_uniform(rng, d, (d, d)),
                ln2_gamma=np.ones(d, dtype=np.float32),
                ln2_beta=np.zeros(d, dtype=np.float32),
                w_in=_uniform(rng, d, (d, h)),
                w_out=_uniform(rng, h, (h, d)),
            )
        )
    return Encoder(config=config, layers=layers)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU activation (tanh approximation)."""
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def counted_matmul(a: np.ndarray, b: np.ndarray, counter: FlopCounter) -> np.ndarray:
    counter.add_matmul(a.shape[0], a.shape[1], b.shape[1])
    return numerics.matmul(a, b)


def attention_rows(
    q: np.ndarray,
    keys: np.ndarray,
    values: np.ndarray,
    num_heads: int,
    counter: FlopCounter,
) -> np.ndarray:
    """Multi-head attention for `q.shape[0]` query rows over all key rows.

    Heads are split from the model dimension, attended independently, and
    concatenated back; the output projection is applied by the caller.
    """
    rows, dim = q.shape
    tokens = keys.shape[0]
    dh = dim // num_heads
    qh = q.reshape(rows, num_heads, dh).transpose(1, 0, 2)
    kh = keys.reshape(tokens, num_heads, dh).transpose(1, 2, 0)
    vh = values.reshape(tokens, num_heads, dh).transpose(1, 0, 2)
    scores = np.matmul(qh, kh, dtype=np.float64) / math.sqrt(dh)
    counter.add_matmul(rows, dh, tokens, batch=num_heads)
    probs = numerics.softmax_rows(scores.astype(np.float32).reshape(num_heads * rows, tokens))
    probs = probs.reshape(num_heads, rows, tokens)
    ctx = np.matmul(probs, vh, dtype=np.float64)
    counter.add_matmul(rows, tokens, dh, batch=num_heads)
    return ctx.transpose(1, 0, 2).reshape(rows, dim).astype(np.float32)


def full_forward(encoder: Encoder, frame: np.ndarray) -> ForwardResult:
    """Run every token of one frame through all blocks, recording traces."""
    cfg = encoder.config
    x = np.ascontiguousarray(frame, dtype=np.float32)
    if x.shape != (cfg.token_count, cfg.model_dim):
        raise ValueError(
            f"frame shape {x.shape} does not match encoder "
            f"({cfg.token_count}, {cfg.model_dim})"
        )
    counter = FlopCounter()
    traces = []
    for lw in encoder.layers:
        h = numerics.layer_norm(x, lw.ln1_gamma, lw.ln1_beta, cfg.ln_eps)
        q = counted_matmul(h, lw.wq, counter)
        k = counted_matmul(h, lw.wk, counter)
        v = counted_matmul(h, lw.wv, counter)
        ctx = attention_rows(q, k, v, cfg.num_heads, counter)
        a = x + counted_matmul(ctx, lw.wo, counter)
        h2 = numerics.layer_norm(a, lw.ln2_gamma, lw.ln2_beta, cfg.ln_eps)
        m = a + counted_matmul(gelu(counted_matmul(h2, lw.w_in, counter)), lw.w_out, counter)
        traces.append(LayerTrace(keys=k, values=v, attn_out=a, block_out=m))
        x = m
    return ForwardResult(output=x, traces=traces, flops=counter.total)


def flop_count_full(config: EncoderConfig) -> int:
    """Closed-form FLOPs of one full forward pass (matmul multiply-adds x 2)."""
    t, d, h = config.token_count, config.model_dim, config.mlp_hidden
    madds_per_layer = 4 * t * d * d + 2 * t * t * d + 2 * t * d * h
    return config.num_layers * 2 * madds_per_layer
