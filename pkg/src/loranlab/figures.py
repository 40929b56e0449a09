"""Matplotlib renderings saved next to the delimited reports.

Figures are a convenience view of the CSV/JSON contract, never the
contract itself.  Rendering is deterministic: fixed dpi, Agg backend, and
the PNG Software tag stripped so repeated runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

from .activations import ActivationSpec
from .analysis import SpectrumReport
from .training import RunReport

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_loss_curves(path: Path, tagged: list[tuple[str, list[RunReport]]]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for tag, reports in tagged:
        for r in reports:
            xs = [e for e, v in enumerate(r.epoch_losses) if v is not None]
            ys = [v for v in r.epoch_losses if v is not None]
            ax.plot(xs, ys, alpha=0.7, label=f"{tag} seed {r.seed}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    if sum(len(reports) for _, reports in tagged) <= 10:
        ax.legend(fontsize=7)
    _save(fig, path)


def save_metric_bars(
    path: Path, labels: list[str], means: list[float], metric_name: str
) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(labels))
    ax.bar(xs, [0.0 if m is None or np.isnan(m) else m for m in means], color="#4878a8")
    for x, m in zip(xs, means):
        if m is None or np.isnan(m):
            ax.text(x, 0.0, "diverged", rotation=90, ha="center", va="bottom", fontsize=7)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(metric_name)
    _save(fig, path)


def save_grid_heatmap(
    path: Path,
    amplitudes: list[float],
    omegas: list[float],
    metric: np.ndarray,
    metric_name: str,
    best: tuple[int, int],
) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(metric, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(omegas)))
    ax.set_xticklabels([f"{w:g}" for w in omegas], fontsize=8)
    ax.set_yticks(range(len(amplitudes)))
    ax.set_yticklabels([f"{a:g}" for a in amplitudes], fontsize=8)
    ax.set_xlabel("omega")
    ax.set_ylabel("amplitude")
    ai, wi = best
    ax.scatter([wi], [ai], marker="*", s=180, color="red")
    fig.colorbar(im, ax=ax, label=metric_name)
    _save(fig, path)


def save_spectrum_panels(path: Path, reports: list[SpectrumReport]) -> None:
    fig, axes = plt.subplots(1, len(reports), figsize=(4 * len(reports), 3.5), sharey=True)
    if len(reports) == 1:
        axes = [axes]
    for ax, rep in zip(axes, reports):
        xs = np.arange(1, rep.values.size + 1)
        positive = rep.values > 0
        ax.semilogy(xs[positive], rep.values[positive], marker=".", linestyle="none")
        ax.set_title(f"{rep.name} (rank {rep.rank}, eff {rep.eff_rank:.1f})", fontsize=9)
        ax.set_xlabel("index")
    axes[0].set_ylabel("singular value")
    _save(fig, path)


def save_activation_curves(
    path: Path, specs: list[ActivationSpec], lo: float, hi: float, n: int = 801
) -> None:
    xs = np.linspace(lo, hi, n)
    fig, ax = plt.subplots(figsize=(6, 4))
    for spec in specs:
        ax.plot(xs, spec.value(xs), label=spec.label, linewidth=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("f(x)")
    ax.legend(fontsize=7)
    _save(fig, path)


def save_rank_bars(
    path: Path,
    ranks: list[int],
    baseline_means: list[float],
    loran_means: list[float],
    metric_name: str,
) -> None:
    xs = np.arange(len(ranks))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(xs - width / 2, baseline_means, width, label="low-rank baseline")
    ax.bar(xs + width / 2, loran_means, width, label="nonlinear")
    ax.set_xticks(xs)
    ax.set_xticklabels([f"r={r}" for r in ranks])
    ax.set_ylabel(metric_name)
    ax.legend(fontsize=8)
    _save(fig, path)
