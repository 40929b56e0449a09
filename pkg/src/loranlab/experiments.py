"""Experiment drivers: single runs, run matrices, grids and studies.

Each (config, seed) run is an independent pure function, so matrices can
fan out over processes; results are always assembled in (config index,
seed index) order, never completion order, which keeps --jobs N output
identical to --jobs 1.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .activations import ActivationSpec, ablation_family, identity, sinter
from .adapters import (
    Adapter,
    delta_weight,
    init_adapter,
    init_dense,
    init_loran,
    trainable_parameters,
)
from .analysis import SpectrumReport, compare_spectra
from .config import ExperimentConfig
from .rng import derive_seed
from .tasks import BlobsTask, TeacherTask, ToyClassifier, build_toy_classifier
from .training import RunReport, train

# Stream tags for deriving per-run child seeds from one experiment seed.
_STREAM_ADAPTER = 1
_STREAM_SHUFFLE = 2


def adapter_dims(cfg: ExperimentConfig) -> tuple[int, int]:
    """(d, k) of the adapted layer: the feature layer for blobs, the
    target shape for teacher tasks."""
    if isinstance(cfg.task, BlobsTask):
        assert cfg.model is not None
        return (cfg.model.hidden, cfg.task.dim)
    return (cfg.task.d, cfg.task.k)


def build_model(cfg: ExperimentConfig) -> ToyClassifier | None:
    if isinstance(cfg.task, BlobsTask):
        assert cfg.model is not None
        return build_toy_classifier(
            n_in=cfg.task.dim,
            hidden=cfg.model.hidden,
            n_classes=cfg.task.classes,
            seed=cfg.model.seed,
        )
    return None


def build_adapter(cfg: ExperimentConfig, seed: int) -> Adapter:
    d, k = adapter_dims(cfg)
    init_seed = derive_seed(seed, _STREAM_ADAPTER)
    spec = cfg.adapter
    if spec.kind == "lora":
        return init_adapter(d, k, spec.rank, spec.alpha, init_seed)
    return init_loran(
        d, k, spec.rank, spec.alpha, init_seed, spec.activation, spec.scale_inside
    )


def run_experiment(cfg: ExperimentConfig, seed: int) -> RunReport:
    """One deterministic run: adapter init and batch order derive from
    ``seed``; the dataset and frozen model come from the config blocks."""
    model = build_model(cfg)
    adapter = build_adapter(cfg, seed)
    train_cfg = replace(cfg.train, seed=derive_seed(seed, _STREAM_SHUFFLE))
    report = train(model, adapter, cfg.task, train_cfg)
    report.seed = seed
    report.config["name"] = cfg.name
    report.config["seed"] = seed
    return report


def _run_matrix_cell(item: tuple[ExperimentConfig, int]) -> RunReport:
    cfg, seed = item
    return run_experiment(cfg, seed)


def run_matrix(
    configs: list[ExperimentConfig], seeds: list[int], jobs: int = 1
) -> list[list[RunReport]]:
    """Every (config, seed) pair; row i holds config i's reports in seed
    order.  Divergences are recorded in their reports, never raised."""
    items = [(cfg, seed) for cfg in configs for seed in seeds]
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(_run_matrix_cell, items))
    else:
        flat = [_run_matrix_cell(item) for item in items]
    n = len(seeds)
    return [flat[i * n : (i + 1) * n] for i in range(len(configs))]


def _mean_metric(reports: list[RunReport]) -> float:
    """Mean final metric over finished runs; NaN once every run diverged."""
    metrics = [r.final_metric for r in reports if not r.diverged]
    if not metrics:
        return float("nan")
    return sum(metrics) / len(metrics)


def with_activation(cfg: ExperimentConfig, spec: ActivationSpec) -> ExperimentConfig:
    return replace(cfg, adapter=replace(cfg.adapter, kind="loran", activation=spec))


def lora_baseline(cfg: ExperimentConfig) -> ExperimentConfig:
    """The identity row: plain LoRA through the LoRAN code path."""
    return with_activation(cfg, identity())


@dataclass
class ComparisonResult:
    """Baseline vs nonlinear adapter on one task, with the delta column."""

    baseline: list[RunReport]
    loran: list[RunReport]
    metric_name: str

    @property
    def baseline_mean(self) -> float:
        return _mean_metric(self.baseline)

    @property
    def loran_mean(self) -> float:
        return _mean_metric(self.loran)

    @property
    def delta(self) -> float:
        return self.loran_mean - self.baseline_mean


def compare_study(cfg: ExperimentConfig, jobs: int = 1) -> ComparisonResult:
    rows = run_matrix([lora_baseline(cfg), cfg], list(cfg.seeds), jobs=jobs)
    return ComparisonResult(
        baseline=rows[0], loran=rows[1], metric_name=rows[0][0].metric_name
    )


def ablation_study(
    cfg: ExperimentConfig, jobs: int = 1
) -> list[tuple[str, list[RunReport]]]:
    """Seven activation rows in table order, sinter parameters taken from
    the config when it already names a sinter map."""
    base_spec = cfg.adapter.activation
    if base_spec.kind == "sinter":
        family = ablation_family(base_spec.amplitude, base_spec.omega)
    else:
        family = ablation_family()
    configs = [with_activation(cfg, spec) for spec in family]
    rows = run_matrix(configs, list(cfg.seeds), jobs=jobs)
    return [(spec.label, reports) for spec, reports in zip(family, rows)]


@dataclass
class GridResult:
    """Mean final metric per (amplitude, omega) cell plus the best cell.

    ``orientation`` records whether smaller or larger is better for the
    task metric; ``best`` ties break toward the smaller amplitude index,
    then the smaller omega index.  Diverged cells carry NaN, never a hole.
    """

    amplitudes: list[float]
    omegas: list[float]
    metric: np.ndarray  # (len(amplitudes), len(omegas)) means
    metric_name: str
    orientation: str  # "min" or "max"
    best: tuple[int, int]
    seeds: list[int]
    reports: list[list[list[RunReport]]]  # [a][w][seed]

    def to_dict(self) -> dict:
        a_best, w_best = self.best
        return {
            "amplitudes": self.amplitudes,
            "omegas": self.omegas,
            "metric_name": self.metric_name,
            "orientation": self.orientation,
            "mean_metric": [[float(v) for v in row] for row in self.metric],
            "seeds": self.seeds,
            "best": {
                "amplitude_index": a_best,
                "omega_index": w_best,
                "amplitude": self.amplitudes[a_best],
                "omega": self.omegas[w_best],
                "metric": float(self.metric[a_best, w_best]),
            },
        }


def grid_search(
    amplitudes: list[float],
    omegas: list[float],
    cfg: ExperimentConfig,
    seeds: list[int],
    jobs: int = 1,
) -> GridResult:
    """Exhaustive sinter sweep.  Amplitude 0 cells degenerate to the plain
    LoRA baseline bit for bit."""
    if not amplitudes or not omegas:
        raise ValueError("grid search needs non-empty amplitude and omega lists")
    configs = [
        with_activation(cfg, sinter(amplitude=a, omega=w))
        for a in amplitudes
        for w in omegas
    ]
    rows = run_matrix(configs, seeds, jobs=jobs)
    n_w = len(omegas)
    metric = np.full((len(amplitudes), n_w), np.nan)
    reports: list[list[list[RunReport]]] = []
    for ai in range(len(amplitudes)):
        row: list[list[RunReport]] = []
        for wi in range(n_w):
            cell = rows[ai * n_w + wi]
            metric[ai, wi] = _mean_metric(cell)
            row.append(cell)
        reports.append(row)

    metric_name = rows[0][0].metric_name
    orientation = "min" if metric_name == "teacher_loss" else "max"
    best = (0, 0)
    best_value = None
    for ai in range(len(amplitudes)):
        for wi in range(n_w):
            value = metric[ai, wi]
            if np.isnan(value):
                continue
            if best_value is None:
                best, best_value = (ai, wi), value
            elif orientation == "min" and value < best_value:
                best, best_value = (ai, wi), value
            elif orientation == "max" and value > best_value:
                best, best_value = (ai, wi), value
    return GridResult(
        amplitudes=[float(a) for a in amplitudes],
        omegas=[float(w) for w in omegas],
        metric=metric,
        metric_name=metric_name,
        orientation=orientation,
        best=best,
        seeds=list(seeds),
        reports=reports,
    )


def rank_study(
    cfg: ExperimentConfig, ranks: list[int], jobs: int = 1
) -> list[tuple[int, ComparisonResult]]:
    """Baseline-vs-nonlinear comparison repeated at each adapter rank.

    alpha stays fixed across ranks, so the effective scale alpha / r moves
    with the rank exactly as in the reference protocol."""
    out = []
    for rank in ranks:
        sized = replace(cfg, adapter=replace(cfg.adapter, rank=rank))
        out.append((rank, compare_study(sized, jobs=jobs)))
    return out


@dataclass
class SpectrumStudy:
    reports: list[SpectrumReport]
    summary: str
    train_reports: dict[str, RunReport]


def spectrum_study(cfg: ExperimentConfig, rel_tol: float = 1e-8) -> SpectrumStudy:
    """Train linear, nonlinear and dense updates on one teacher objective
    and compare their singular spectra."""
    if not isinstance(cfg.task, TeacherTask):
        raise ValueError("spectrum study runs on a teacher task")
    seed = cfg.seeds[0]

    def trained_delta(adapter: Adapter) -> tuple[np.ndarray, RunReport]:
        train_cfg = replace(cfg.train, seed=derive_seed(seed, _STREAM_SHUFFLE))
        report = train(None, adapter, cfg.task, train_cfg)
        report.seed = seed
        return delta_weight(adapter).data.copy(), report

    d, k = adapter_dims(cfg)
    init_seed = derive_seed(seed, _STREAM_ADAPTER)
    spec = cfg.adapter.activation
    if spec.kind != "sinter":
        spec = sinter()
    low = init_loran(d, k, cfg.adapter.rank, cfg.adapter.alpha, init_seed, identity(),
                     cfg.adapter.scale_inside)
    non = init_loran(d, k, cfg.adapter.rank, cfg.adapter.alpha, init_seed, spec,
                     cfg.adapter.scale_inside)
    dense = init_dense(d, k)

    low_delta, low_report = trained_delta(low)
    non_delta, non_report = trained_delta(non)
    dense_delta, dense_report = trained_delta(dense)
    reports, summary = compare_spectra(low_delta, non_delta, dense_delta, rel_tol=rel_tol)
    return SpectrumStudy(
        reports=reports,
        summary=summary,
        train_reports={
            "low_rank": low_report,
            "nonlinear": non_report,
            "full": dense_report,
        },
    )


def parameter_parity(d: int, k: int, rank: int, alpha: float = 16.0) -> tuple[int, int]:
    """(LoRA count, LoRAN count) for one shape; both are rank * (d + k)."""
    plain = init_adapter(d, k, rank, alpha, seed=0)
    wrapped = init_loran(d, k, rank, alpha, seed=0, activation=sinter())
    count = lambda ad: sum(p.data.size for p in trainable_parameters(ad))
    return count(plain), count(wrapped)
