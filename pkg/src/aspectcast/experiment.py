"""Experiment orchestration: configs, ablation sweeps, zero-shot transfer,
and report emission.

Every cell is reproducible in isolation: model init draws only from the
recorded per-run seed, batches are ordered deterministically, and prompt
artifacts are built once per dataset and shared read-only across cells.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import yaml

from .core import ForecastTask, SplitSpec, SplitWindows, TimeSeries, chrono_split, load_csv
from .errors import ConfigError, IoFailure, ShapeMismatch
from .model import (
    AlignVariant,
    BackboneConfig,
    EncoderMode,
    Forecaster,
)
from .patchcluster import ClusterIndex, kmeans_fit, segment, select_representatives
from .promptgen import BundleBuilder, PromptSettings, PromptVariant, describe_clusters
from .registry import DatasetSpec, load_registry
from .tokenizer import load_tokenizer
from .train import MetricsEntry, MetricsReport, TrainConfig, evaluate, train_run

# prompt-combination rows in sweep order: none, singles, pairs, triples, full
MASK_ORDER: tuple[tuple[bool, bool, bool, bool], ...] = (
    (False, False, False, False),
    (True, False, False, False),
    (False, True, False, False),
    (False, False, True, False),
    (False, False, False, True),
    (True, True, False, False),
    (True, False, True, False),
    (True, False, False, True),
    (False, True, True, False),
    (False, True, False, True),
    (False, False, True, True),
    (True, True, True, False),
    (True, True, False, True),
    (True, False, True, True),
    (False, True, True, True),
    (True, True, True, True),
)

_MASK_LETTERS = "GLST"


def mask_label(mask: Sequence[bool]) -> str:
    if not any(mask):
        return "none"
    return "".join(letter if on else "-" for letter, on in zip(_MASK_LETTERS, mask))


def mask_from_label(label: str) -> tuple[bool, bool, bool, bool]:
    if label == "none":
        return (False, False, False, False)
    if len(label) != 4:
        raise ConfigError(f"bad mask label {label!r}")
    return tuple(ch != "-" for ch in label)  # type: ignore[return-value]


def derive_seed(*parts) -> int:
    raw = json.dumps([str(p) for p in parts]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(raw).digest()[:4], "little")


def parameter_hash(model: torch.nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


@dataclass
class ExperimentConfig:
    registry_path: str
    datasets: list[str]
    task: ForecastTask = ForecastTask(32, 8)
    split: SplitSpec = SplitSpec()
    train: TrainConfig = field(default_factory=TrainConfig)
    model_params: dict = field(default_factory=dict)
    mask: tuple[bool, bool, bool, bool] = (True, True, True, True)
    prompt_variant: PromptVariant = PromptVariant.MINIMAL
    context_limit: int = 1024
    alignment: AlignVariant = AlignVariant.CROSS_ATTENTION
    encoder_mode: EncoderMode = EncoderMode.SINGLE
    wte_baseline: bool = False
    n_runs: int = 1
    seed: int = 0
    output_dir: str = "runs"
    metrics_scale: str = "normalized"
    tokenizer_vocab: Optional[str] = None
    tokenizer_merges: Optional[str] = None
    max_parallel: int = 1

    @classmethod
    def from_yaml(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if "registry" not in doc or "datasets" not in doc:
            raise ConfigError(f"{path}: config needs 'registry' and 'datasets'")
        base = os.path.dirname(os.path.abspath(path))

        def _resolve(p):
            if p is None:
                return None
            return p if os.path.isabs(p) else os.path.join(base, p)

        task_doc = doc.get("task", {})
        split_doc = doc.get("split", {})
        train_doc = doc.get("train", {})
        prompts_doc = doc.get("prompts", {})
        tok_doc = doc.get("tokenizer", {}) or {}
        try:
            return cls(
                registry_path=_resolve(str(doc["registry"])),
                datasets=[str(d) for d in doc["datasets"]],
                task=ForecastTask(
                    input_len=int(task_doc.get("input_len", 32)),
                    horizon=int(task_doc.get("horizon", 8)),
                ),
                split=SplitSpec(
                    train_frac=float(split_doc.get("train", 0.7)),
                    val_frac=float(split_doc.get("val", 0.1)),
                    test_frac=float(split_doc.get("test", 0.2)),
                ),
                train=TrainConfig(
                    lr=float(train_doc.get("lr", 1e-4)),
                    batch_size=int(train_doc.get("batch_size", 4)),
                    epochs=int(train_doc.get("epochs", 10)),
                    weight_decay=float(train_doc.get("weight_decay", 1e-4)),
                    grad_clip=float(train_doc.get("grad_clip", 1.0)),
                    shuffle=bool(train_doc.get("shuffle", False)),
                ),
                model_params=dict(doc.get("model", {})),
                mask=tuple(bool(b) for b in prompts_doc.get("mask", [True] * 4)),
                prompt_variant=PromptVariant(str(prompts_doc.get("variant", "minimal"))),
                context_limit=int(prompts_doc.get("context_limit", 1024)),
                alignment=AlignVariant(str(doc.get("alignment", "cross_attention"))),
                encoder_mode=EncoderMode(str(doc.get("encoder_mode", "single"))),
                wte_baseline=bool(doc.get("wte_baseline", False)),
                n_runs=int(doc.get("n_runs", 1)),
                seed=int(doc.get("seed", 0)),
                output_dir=_resolve(str(doc.get("output_dir", "runs"))),
                metrics_scale=str(doc.get("metrics_scale", "normalized")),
                tokenizer_vocab=_resolve(tok_doc.get("vocab")),
                tokenizer_merges=_resolve(tok_doc.get("merges")),
                max_parallel=int(doc.get("max_parallel", 1)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def digest(self) -> str:
        raw = json.dumps(
            {
                "datasets": self.datasets,
                "task": [self.task.input_len, self.task.horizon],
                "train": self.train.__dict__,
                "model": self.model_params,
                "mask": list(self.mask),
                "variant": self.prompt_variant.value,
                "alignment": self.alignment.value,
                "encoder_mode": self.encoder_mode.value,
                "wte": self.wte_baseline,
                "seed": self.seed,
                "n_runs": self.n_runs,
                "metrics_scale": self.metrics_scale,
            },
            sort_keys=True,
        ).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()[:16]

    def backbone_config(self, vocab_size: int) -> BackboneConfig:
        params = dict(self.model_params)
        params["vocab_size"] = vocab_size
        params.setdefault("context_limit", self.context_limit)
        return BackboneConfig(**params)

    def prompt_settings(self, mask=None, variant=None) -> PromptSettings:
        return PromptSettings(
            mask=tuple(self.mask if mask is None else mask),
            variant=self.prompt_variant if variant is None else variant,
            context_limit=self.context_limit,
        )


@dataclass
class DatasetArtifacts:
    """Shared per-dataset inputs for every cell of a sweep."""

    spec: DatasetSpec
    series: TimeSeries
    splits: SplitWindows
    index: Optional[ClusterIndex]
    usable_scales: list

    def builder(self, tokenizer, settings: PromptSettings) -> BundleBuilder:
        return BundleBuilder(
            card=self.spec.card,
            tokenizer=tokenizer,
            settings=settings,
            index=self.index,
            configs=self.usable_scales,
            series_values=self.series.values,
        )


def build_artifacts(
    cfg: ExperimentConfig,
    spec: DatasetSpec,
    need_index: bool = True,
) -> DatasetArtifacts:
    """Load, split, and (when needed) cluster the training region only."""
    series = load_csv(
        spec.path,
        value_column=spec.value_column,
        timestamp_column=spec.timestamp_column,
        frequency=spec.frequency,
        name=spec.name,
    )
    splits = chrono_split(series, cfg.split, cfg.task)
    index = None
    usable = []
    if need_index:
        train_values = series.values[: splits.n_train_points]
        index = ClusterIndex()
        for scale_cfg in spec.scales:
            if scale_cfg.data_points > train_values.size:
                continue
            windows, starts = segment(train_values, scale_cfg)
            k = min(spec.k_clusters, len(windows))
            fitted = kmeans_fit(
                windows,
                k=k,
                seed=derive_seed(cfg.seed, spec.name, scale_cfg.scale_name),
                config=scale_cfg,
                window_starts=starts,
            )
            select_representatives(fitted)
            index.scales[scale_cfg.scale_name] = fitted
            usable.append(scale_cfg)
        if usable:
            describe_clusters(index)
        else:
            index = None
    return DatasetArtifacts(
        spec=spec, series=series, splits=splits, index=index, usable_scales=usable
    )


@dataclass
class CellResult:
    kind: str
    dataset: str
    mask: tuple[bool, bool, bool, bool]
    variant: str
    encoder_mode: str
    wte_baseline: bool
    seed: int
    n_runs: int
    status: str
    report: Optional[MetricsReport]
    group: str = ""

    def row(self) -> dict:
        ok = self.status == "ok" and self.report is not None
        return {
            "kind": self.kind,
            "dataset": self.dataset,
            "group": self.group,
            "mask": mask_label(self.mask),
            "variant": self.variant,
            "encoder_mode": self.encoder_mode,
            "wte": self.wte_baseline,
            "seed": self.seed,
            "n_runs": self.n_runs,
            "status": self.status,
            "mse": self.report.mean_mse if ok else float("nan"),
            "mae": self.report.mean_mae if ok else float("nan"),
            "best_mse": self.report.best_mse if ok else float("nan"),
            "best_mae": self.report.best_mae if ok else float("nan"),
        }


def _build_model(
    cfg: ExperimentConfig,
    tokenizer,
    run_seed: int,
    variant: AlignVariant,
    encoder_mode: EncoderMode,
    wte_baseline: bool,
) -> Forecaster:
    torch.manual_seed(run_seed)
    return Forecaster(
        cfg.backbone_config(tokenizer.vocab_size),
        input_len=cfg.task.input_len,
        horizon=cfg.task.horizon,
        tokenizer=tokenizer,
        variant=variant,
        encoder_mode=encoder_mode,
        wte_baseline=wte_baseline,
    )


def run_cell(
    cfg: ExperimentConfig,
    artifacts: DatasetArtifacts,
    kind: str,
    mask=None,
    variant: Optional[AlignVariant] = None,
    encoder_mode: Optional[EncoderMode] = None,
    wte_baseline: Optional[bool] = None,
    cell_seed: Optional[int] = None,
    wall_budget_s: Optional[float] = None,
    return_model: bool = False,
):
    """Train and evaluate one experiment cell, repeated `n_runs` times."""
    mask = tuple(cfg.mask if mask is None else mask)
    variant = AlignVariant(cfg.alignment if variant is None else variant)
    encoder_mode = EncoderMode(cfg.encoder_mode if encoder_mode is None else encoder_mode)
    wte_baseline = cfg.wte_baseline if wte_baseline is None else wte_baseline
    base_seed = cfg.seed if cell_seed is None else cell_seed
    tokenizer = load_tokenizer(cfg.tokenizer_vocab, cfg.tokenizer_merges)
    settings = cfg.prompt_settings(mask=mask)
    group = artifacts.spec.group or (
        "long_term" if cfg.task.horizon >= 96 else "short_term"
    )

    runs: list[tuple[float, float]] = []
    last_model = None
    status = "ok"
    try:
        for i in range(cfg.n_runs):
            run_seed = derive_seed(base_seed, artifacts.spec.name, kind,
                                   mask_label(mask), variant.value,
                                   encoder_mode.value, wte_baseline, i)
            model = _build_model(cfg, tokenizer, run_seed, variant, encoder_mode, wte_baseline)
            builder = (
                artifacts.builder(tokenizer, settings)
                if any(mask) and not wte_baseline
                else None
            )
            train_cfg = replace(cfg.train, seed=run_seed)
            train_run(model, artifacts.splits.train, train_cfg, builder,
                      wall_budget_s=wall_budget_s)
            entry = evaluate(model, artifacts.splits.test, builder, scale=cfg.metrics_scale)
            runs.append((entry.mse, entry.mae))
            last_model = model
        report = MetricsReport(runs=runs)
    except Exception as exc:  # a failed cell is recorded, not fatal to a sweep
        status = f"failed: {type(exc).__name__}: {exc}"
        report = None
    result = CellResult(
        kind=kind,
        dataset=artifacts.spec.name,
        mask=mask,
        variant=variant.value,
        encoder_mode=encoder_mode.value,
        wte_baseline=wte_baseline,
        seed=base_seed,
        n_runs=cfg.n_runs,
        status=status,
        report=report,
        group=group,
    )
    if return_model:
        return result, last_model
    return result


def _load_specs(cfg: ExperimentConfig) -> dict[str, DatasetSpec]:
    registry = load_registry(cfg.registry_path)
    missing = [d for d in cfg.datasets if d not in registry]
    if missing:
        raise ConfigError(f"datasets not in registry: {missing}")
    return registry


def _sum_rows(rows: list[dict], key_fields: Sequence[str]) -> list[dict]:
    """Per-group loss sums over member datasets, keyed by the given fields."""
    sums: dict[tuple, dict] = {}
    for row in rows:
        if row["dataset"].startswith("sum:"):
            continue
        key = tuple(row[f] for f in key_fields) + (row["group"],)
        bucket = sums.setdefault(
            key,
            {**{f: row[f] for f in key_fields},
             "kind": row["kind"], "dataset": f"sum:{row['group']}", "group": row["group"],
             "variant": row["variant"], "encoder_mode": row["encoder_mode"],
             "wte": row["wte"], "seed": "", "n_runs": row["n_runs"], "status": "ok",
             "mse": 0.0, "mae": 0.0, "best_mse": float("nan"), "best_mae": float("nan")},
        )
        bucket["mse"] += row["mse"]
        bucket["mae"] += row["mae"]
    return list(sums.values())


def _run_cells(cfg: ExperimentConfig, jobs: list[Callable[[], CellResult]]) -> list[CellResult]:
    if cfg.max_parallel > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
            return list(pool.map(lambda job: job(), jobs))
    return [job() for job in jobs]


def run_ablation_prompts(cfg: ExperimentConfig) -> list[dict]:
    """All 16 prompt-combination cells per dataset, plus per-group loss sums."""
    specs = _load_specs(cfg)
    artifacts = {name: build_artifacts(cfg, specs[name]) for name in cfg.datasets}
    results: list[CellResult] = []
    for mask in MASK_ORDER:
        jobs = [
            (lambda name=name, mask=mask: run_cell(
                cfg, artifacts[name], "prompt_ablation", mask=mask))
            for name in cfg.datasets
        ]
        results.extend(_run_cells(cfg, jobs))
    rows = [r.row() for r in results]
    rows.extend(_sum_rows(rows, key_fields=["mask"]))
    return rows


def run_alignment_ablation(cfg: ExperimentConfig) -> list[dict]:
    """One cell per alignment strategy per dataset, plus loss sums."""
    specs = _load_specs(cfg)
    artifacts = {name: build_artifacts(cfg, specs[name]) for name in cfg.datasets}
    results: list[CellResult] = []
    for variant in AlignVariant:
        jobs = [
            (lambda name=name, variant=variant: run_cell(
                cfg, artifacts[name], "alignment_ablation", variant=variant))
            for name in cfg.datasets
        ]
        results.extend(_run_cells(cfg, jobs))
    rows = [r.row() for r in results]
    rows.extend(_sum_rows(rows, key_fields=["variant"]))
    return rows


def run_encoder_ablation(cfg: ExperimentConfig) -> list[dict]:
    """Single vs dual-frozen vs dual-trainable text encoder."""
    specs = _load_specs(cfg)
    artifacts = {name: build_artifacts(cfg, specs[name]) for name in cfg.datasets}
    results: list[CellResult] = []
    for mode in EncoderMode:
        jobs = [
            (lambda name=name, mode=mode: run_cell(
                cfg, artifacts[name], "encoder_ablation", encoder_mode=mode))
            for name in cfg.datasets
        ]
        results.extend(_run_cells(cfg, jobs))
    return [r.row() for r in results]


def run_zero_shot(cfg: ExperimentConfig, source: str, targets: Sequence[str]) -> list[dict]:
    """Train once on the source, evaluate frozen on each target with the
    target's own prompts (card + clusters from its training region only)."""
    specs = _load_specs(replace(cfg, datasets=sorted({source, *targets})))
    src_art = build_artifacts(cfg, specs[source])
    result, model = run_cell(cfg, src_art, "zero_shot_train", return_model=True)
    if result.status != "ok" or model is None:
        raise IoFailure(f"source training failed: {result.status}")
    tokenizer = model.tokenizer
    settings = cfg.prompt_settings()
    frozen_hash = parameter_hash(model)
    rows = [dict(result.row(), dataset=f"{source}->{source} (in-domain)")]
    for target in targets:
        art = build_artifacts(cfg, specs[target])
        sample = art.splits.test[0]
        if sample.input.size != model.input_len or sample.target.size != model.horizon:
            raise ShapeMismatch(
                f"target {target!r} windows ({sample.input.size},{sample.target.size}) "
                f"do not match model ({model.input_len},{model.horizon})"
            )
        builder = art.builder(tokenizer, settings) if any(cfg.mask) else None
        entry = evaluate(model, art.splits.test, builder, scale=cfg.metrics_scale)
        if parameter_hash(model) != frozen_hash:
            raise IoFailure("model parameters changed during zero-shot evaluation")
        rows.append({
            "kind": "zero_shot",
            "dataset": f"{source}->{target}",
            "group": art.spec.group or "",
            "mask": mask_label(cfg.mask),
            "variant": cfg.alignment.value,
            "encoder_mode": cfg.encoder_mode.value,
            "wte": cfg.wte_baseline,
            "seed": cfg.seed,
            "n_runs": 1,
            "status": "ok",
            "mse": entry.mse,
            "mae": entry.mae,
            "best_mse": entry.mse,
            "best_mae": entry.mae,
        })
    return rows


# --- report emission -----------------------------------------------------------

def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows: list[dict], fmt: str, path: str) -> None:
    """Write results as csv, markdown table, or plain numeric plot data."""
    if not rows:
        raise IoFailure("no results to report")
    columns = list(rows[0].keys())
    try:
        if fmt == "csv":
            lines = [",".join(columns)]
            for row in rows:
                lines.append(",".join(_format_value(row.get(c, "")) for c in columns))
            payload = "\n".join(lines) + "\n"
        elif fmt == "markdown":
            lines = ["| " + " | ".join(columns) + " |",
                     "|" + "|".join([" --- "] * len(columns)) + "|"]
            for row in rows:
                lines.append("| " + " | ".join(_format_value(row.get(c, "")) for c in columns) + " |")
            payload = "\n".join(lines) + "\n"
        elif fmt == "plot-data":
            numeric = [c for c in columns
                       if all(isinstance(r.get(c), (int, float, bool)) for r in rows)]
            lines = ["# " + " ".join(numeric)]
            for row in rows:
                lines.append(" ".join(_format_value(float(row[c])) for c in numeric))
            payload = "\n".join(lines) + "\n"
        else:
            raise IoFailure(f"unknown report format {fmt!r}")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc


def parse_report_csv(path: str) -> list[dict]:
    """Inverse of the csv emitter, with numeric/boolean round-tripping."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise IoFailure(f"{path}: empty report")
    columns = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for col, cell in zip(columns, cells):
            row[col] = _parse_cell(cell)
        rows.append(row)
    return rows


def _parse_cell(cell: str):
    if cell == "True":
        return True
    if cell == "False":
        return False
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def save_records(rows: list[dict], cfg: ExperimentConfig, path: str) -> None:
    """Persist rows plus the config digest so any cell can be re-run later."""
    payload = {"config_digest": cfg.digest(), "rows": rows}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def reproduce_cell(cfg: ExperimentConfig, row: dict) -> dict:
    """Re-run one recorded cell from its (seed, config) pair."""
    specs = _load_specs(cfg)
    name = row["dataset"]
    if name not in specs:
        raise ConfigError(f"recorded dataset {name!r} not in registry")
    artifacts = build_artifacts(cfg, specs[name])
    result = run_cell(
        cfg,
        artifacts,
        row["kind"],
        mask=mask_from_label(row["mask"]),
        variant=AlignVariant(row["variant"]),
        encoder_mode=EncoderMode(row["encoder_mode"]),
        wte_baseline=bool(row["wte"]),
        cell_seed=int(row["seed"]),
    )
    return result.row()
