"""Streaming token compression toolkit.

Two accelerators over a self-contained streaming ViT encoder: cache-aware
selective recomputation of per-frame tokens, and dual-anchor novelty pruning
of the token sequence, plus a synthetic stream generator and a benchmark
harness with FLOP / latency / fidelity reporting.
"""

from .cacher import (
    CacherConfig,
    CacherState,
    FrameStats,
    LayerCacheBank,
    flop_count_selective,
    identify_dynamic_tokens,
    new_cacher,
    process_frame,
    selective_layer_forward,
)
from .harness import (
    ConfigError,
    MetricsReport,
    RedundancyProfile,
    RunConfig,
    analyze_redundancy,
    bench_vit,
    emit_report,
    run_pipeline,
)
from .pruner import (
    HistoryBuffer,
    PruneResult,
    PrunerConfig,
    PrunerState,
    establish_anchors,
    prefill_cost_model,
    process_frame_prune,
    prune,
    score_tokens,
    update_history,
)
from .stream import (
    Chunk,
    StreamConfig,
    StreamFormatError,
    SyntheticStream,
    chunk_stream,
    generate_stream,
    load_tensor_file,
    write_tensor_file,
)
from .vit import (
    Encoder,
    EncoderConfig,
    ForwardResult,
    LayerTrace,
    flop_count_full,
    full_forward,
    init_encoder,
)

__version__ = "0.1.0"
