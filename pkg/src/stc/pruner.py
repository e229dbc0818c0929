"""Dual-anchor token pruning for frames leaving the encoder.

Each token is scored by its joint cosine distance to two anchors: the mean of
the current frame's tokens (spatial context) and the mean of the recent
frames' mean vectors (temporal context), blended by `alpha`.  The highest
scorers -- the most novel tokens -- are kept in their original order, the
rest dropped.  The current frame's spatial mean is pushed into the history
ring only after scoring, so frame t is always scored against frames < t.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import numerics


@dataclass(frozen=True)
class PrunerConfig:
    prune_ratio: float = 0.75  # fraction of tokens dropped
    alpha: float = 0.5  # weight of the temporal term; 1 - alpha weights the spatial term
    window: int = 8  # history ring capacity, in frames

    def __post_init__(self):
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ValueError(f"prune_ratio must lie in [0, 1), got {self.prune_ratio}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


class HistoryBuffer:
    """FIFO ring of per-frame mean vectors with fixed capacity."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[np.ndarray]:
        return list(self._entries)

    def push(self, vector: np.ndarray):
        self._entries.append(np.asarray(vector, dtype=np.float32))

    def mean(self) -> np.ndarray:
        if not self._entries:
            raise ValueError("history buffer is empty")
        return np.mean(np.stack(self._entries), axis=0, dtype=np.float64)


@dataclass
class PrunerState:
    """Single-owner mutable state; strictly sequential per stream."""

    config: PrunerConfig
    history: HistoryBuffer = field(init=False)

    def __post_init__(self):
        self.history = HistoryBuffer(self.config.window)


@dataclass
class PruneResult:
    retained_tokens: np.ndarray  # k' x D, rows in original order
    retained_indices: np.ndarray  # ascending
    scores: np.ndarray  # one novelty score per input token


def establish_anchors(history: HistoryBuffer, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Temporal and spatial context anchors for one frame.

    The spatial anchor is the mean token of the current frame; the temporal
    anchor is the mean of the history entries, falling back to the spatial
    anchor on a cold start (empty history).
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[0] < 1:
        raise ValueError(f"expected a nonempty 2-D token matrix, got shape {tokens.shape}")
    a_spatial = tokens.mean(axis=0, dtype=np.float64)
    a_temporal = history.mean() if len(history) else a_spatial.copy()
    return a_temporal, a_spatial


def _cosine_to_anchor(tokens: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    tiled = np.broadcast_to(anchor, tokens.shape)
    return numerics.rowwise_similarity(tokens, tiled, "cosine")


def score_tokens(
    tokens: np.ndarray,
    a_temporal: np.ndarray,
    a_spatial: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """Novelty score per token: alpha-weighted sum of cosine distances to the anchors."""
    d_temporal = 1.0 - _cosine_to_anchor(tokens, a_temporal)
    d_spatial = 1.0 - _cosine_to_anchor(tokens, a_spatial)
    return alpha * d_temporal + (1.0 - alpha) * d_spatial


def prune(tokens: np.ndarray, scores: np.ndarray, prune_ratio: float) -> PruneResult:
    """Keep the floor(N * (1 - prune_ratio)) highest-scoring tokens in order."""
    tokens = np.asarray(tokens)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (tokens.shape[0],):
        raise ValueError(f"scores shape {scores.shape} does not match {tokens.shape[0]} tokens")
    keep = int(math.floor(tokens.shape[0] * (1.0 - prune_ratio)))
    idx = numerics.top_k_indices(scores, keep, direction="largest")
    return PruneResult(retained_tokens=tokens[idx], retained_indices=idx, scores=scores)


def update_history(history: HistoryBuffer, a_spatial: np.ndarray) -> HistoryBuffer:
    """Append the frame's spatial anchor, evicting the oldest entry when full."""
    history.push(a_spatial)
    return history


def process_frame_prune(state: PrunerState, tokens: np.ndarray) -> PruneResult:
    """Anchor, score, prune, then record this frame's mean for future frames.

    The history update uses the spatial anchor of the full pre-prune token
    set, not the retained subset, so the temporal anchor stays unbiased.
    """
    a_temporal, a_spatial = establish_anchors(state.history, tokens)
    scores = score_tokens(tokens, a_temporal, a_spatial, state.config.alpha)
    result = prune(tokens, scores, state.config.prune_ratio)
    update_history(state.history, a_spatial)
    return result


def prefill_cost_model(n_tokens: int) -> float:
    """Quadratic prefill-cost proxy: attention over n tokens costs n**2 units."""
    if n_tokens < 0:
        raise ValueError(f"token count must be >= 0, got {n_tokens}")
    return float(n_tokens) ** 2
