"""Figure rendering for run and redundancy reports.

Figures are written as PNG files next to the delimited report output; the
Agg backend keeps rendering headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .harness import MetricsReport, RedundancyProfile  # noqa: E402


def render_run_figures(report: MetricsReport, stem) -> list[Path]:
    """Per-frame FLOP / fidelity / retained-token panels for one run."""
    stem = Path(stem)
    frames = [fm.frame for fm in report.frames]
    flops = [fm.flops_vit for fm in report.frames]
    refs = [fm.frame for fm in report.frames if fm.is_reference]
    ref_flops = [fm.flops_vit for fm in report.frames if fm.is_reference]
    retained = [fm.retained for fm in report.frames]
    fidelity = [fm.fidelity_cosine for fm in report.frames]
    have_fidelity = all(v is not None for v in fidelity)

    rows = 3 if have_fidelity else 2
    fig, axes = plt.subplots(rows, 1, figsize=(7.0, 2.2 * rows), sharex=True)
    ax_flops, *rest = axes

    ax_flops.bar(frames, flops, color="#7aa6c2", label="encoder FLOPs")
    ax_flops.bar(refs, ref_flops, color="#c25b4e", label="reference frame")
    ax_flops.set_ylabel("FLOPs")
    ax_flops.legend(loc="upper right", fontsize=8)

    if have_fidelity:
        ax_fid, ax_ret = rest
        ax_fid.plot(frames, fidelity, marker="o", ms=3, color="#3b7a57")
        ax_fid.set_ylabel("fidelity (cos)")
        margin = 1.0 - min(fidelity)
        ax_fid.set_ylim(min(fidelity) - 0.1 * max(margin, 1e-3), 1.0 + 0.1 * max(margin, 1e-3))
    else:
        (ax_ret,) = rest

    ax_ret.step(frames, retained, where="mid", color="#6b5b95")
    ax_ret.set_ylabel("retained tokens")
    ax_ret.set_xlabel("frame")
    ax_ret.set_ylim(0, max(retained) * 1.15)

    fig.suptitle("streaming compression run", fontsize=11)
    fig.tight_layout()
    out = stem.with_name(stem.name + "_frames.png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return [out]


def render_redundancy_figure(profile: RedundancyProfile, path) -> Path:
    """Per-layer adjacent-frame similarity curve with a +-1 std band."""
    path = Path(path)
    layers = [e.layer_index for e in profile.entries]
    means = [e.mean_adjacent_cosine for e in profile.entries]
    stds = [e.std for e in profile.entries]

    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot(layers, means, marker="o", color="#2e5984")
    ax.fill_between(
        layers,
        [m - s for m, s in zip(means, stds)],
        [m + s for m, s in zip(means, stds)],
        alpha=0.25,
        color="#2e5984",
    )
    ax.set_xlabel("encoder layer")
    ax.set_ylabel(f"mean cosine, stride {profile.stride}")
    ax.set_title("temporal redundancy by layer")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
