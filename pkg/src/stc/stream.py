"""Synthetic token streams, chunking, and the STC1 binary frame format.

Frames are generated directly in token-embedding space (T x D float32).  The
redundancy knob copies a fraction of token rows from the previous frame
(optionally with drift noise); the rest are redrawn fresh.  Periodically a
contiguous block of fresh "event" rows is injected and its indices recorded,
giving the pruner a ground-truth retrieval target.  Event rows are ordinary
unit-scale Gaussian draws, so they are novel in direction rather than norm.

STC1 file layout: magic bytes b"STC1", three little-endian uint32 values
(num_frames, tokens_per_frame, dim), then num_frames * tokens * dim
little-endian float32 values, frame-major then row-major.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"STC1"
_HEADER = struct.Struct("<4sIII")

# injected event blocks span 1/16th of the frame's tokens (at least one row)
EVENT_BLOCK_DIVISOR = 16


class StreamFormatError(ValueError):
    """Malformed STC1 payload; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class StreamConfig:
    num_frames: int = 16
    token_count: int = 64
    dim: int = 64
    redundancy: float = 0.9  # fraction of rows copied from the previous frame
    drift: float = 0.0  # noise scale added to copied rows
    event_period: int = 4  # every event_period-th frame gets an event block
    seed: int = 0

    def __post_init__(self):
        for name in ("num_frames", "token_count", "dim", "event_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.redundancy <= 1.0:
            raise ValueError(f"redundancy must lie in [0, 1], got {self.redundancy}")
        if self.drift < 0.0:
            raise ValueError(f"drift must be >= 0, got {self.drift}")


@dataclass
class SyntheticStream:
    frames: list[np.ndarray]
    planted_event_indices: list[np.ndarray]  # per frame, empty when no event


@dataclass
class Chunk:
    frames: list[np.ndarray]


def generate_stream(config: StreamConfig) -> SyntheticStream:
    """Deterministic synthetic stream for the given config and seed."""
    rng = np.random.default_rng(config.seed)
    t_count, dim = config.token_count, config.dim
    frames: list[np.ndarray] = []
    planted: list[np.ndarray] = []
    prev = None
    for t in range(1, config.num_frames + 1):
        frame = rng.standard_normal((t_count, dim), dtype=np.float32)
        if prev is not None:
            n_copy = int(math.floor(config.redundancy * t_count))
            if n_copy:
                copy_idx = np.sort(rng.choice(t_count, size=n_copy, replace=False))
                frame[copy_idx] = prev[copy_idx]
                if config.drift > 0.0:
                    frame[copy_idx] += config.drift * rng.standard_normal(
                        (n_copy, dim), dtype=np.float32
                    )
        events = np.empty(0, dtype=np.int64)
        if t % config.event_period == 0:
            block = max(1, t_count // EVENT_BLOCK_DIVISOR)
            start = int(rng.integers(0, t_count - block + 1))
            frame[start : start + block] = rng.standard_normal((block, dim), dtype=np.float32)
            events = np.arange(start, start + block, dtype=np.int64)
        frames.append(frame)
        planted.append(events)
        prev = frame
    return SyntheticStream(frames=frames, planted_event_indices=planted)


def chunk_stream(frames: list[np.ndarray], length: int) -> list[Chunk]:
    """Split into consecutive non-overlapping chunks; the last may be shorter."""
    if length < 1:
        raise ValueError(f"chunk length must be >= 1, got {length}")
    return [Chunk(frames=list(frames[i : i + length])) for i in range(0, len(frames), length)]


def write_tensor_file(path, frames: list[np.ndarray]):
    """Write frames in STC1 layout; all frames must share one (T, D) shape."""
    if not frames:
        raise ValueError("cannot write an empty stream")
    shape = np.asarray(frames[0]).shape
    if len(shape) != 2:
        raise ValueError(f"frames must be 2-D, got shape {shape}")
    stacked = np.stack([np.asarray(f, dtype=np.float32) for f in frames])
    if stacked.shape[1:] != shape:
        raise ValueError("all frames must share the same shape")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, stacked.shape[0], stacked.shape[1], stacked.shape[2]))
        fh.write(stacked.astype("<f4").tobytes())


def load_tensor_file(path) -> list[np.ndarray]:
    """Read an STC1 file back into a list of (T, D) float32 frames."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise StreamFormatError("truncated header", len(data))
    magic, num_frames, tokens, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if num_frames == 0 or tokens == 0 or dim == 0:
        raise StreamFormatError(
            f"zero dimension in header (frames={num_frames}, tokens={tokens}, dim={dim})", 4
        )
    expected = _HEADER.size + num_frames * tokens * dim * 4
    if len(data) < expected:
        raise StreamFormatError(
            f"truncated payload: expected {expected} bytes, got {len(data)}", len(data)
        )
    if len(data) > expected:
        raise StreamFormatError(f"{len(data) - expected} trailing bytes after payload", expected)
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise StreamFormatError("non-finite value in payload", _HEADER.size + int(bad[0]) * 4)
    arr = flat.astype(np.float32).reshape(num_frames, tokens, dim)
    return [arr[i] for i in range(num_frames)]
