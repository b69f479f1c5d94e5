"""Command-line entry point for the forecasting experiments."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import tsa
from .errors import AspectCastError, ConfigError
from .experiment import (
    ExperimentConfig,
    build_artifacts,
    emit_report,
    parse_report_csv,
    reproduce_cell,
    run_ablation_prompts,
    run_alignment_ablation,
    run_cell,
    run_encoder_ablation,
    run_zero_shot,
    save_records,
    _load_specs,
)
from .model import save_checkpoint, load_into_model
from .patchcluster import save_index
from .promptgen import count_tokens
from .tokenizer import load_tokenizer
from .train import evaluate

log = logging.getLogger("aspectcast")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config YAML")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_path(cfg: ExperimentConfig, filename: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, filename)


def _emit_all(cfg: ExperimentConfig, rows: list[dict], stem: str) -> None:
    emit_report(rows, "csv", _out_path(cfg, f"{stem}.csv"))
    emit_report(rows, "markdown", _out_path(cfg, f"{stem}.md"))
    save_records(rows, cfg, _out_path(cfg, f"{stem}_cells.json"))
    print(open(_out_path(cfg, f"{stem}.md"), "r", encoding="utf-8").read())


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    specs = _load_specs(replace(cfg, datasets=[args.dataset]))
    art = build_artifacts(cfg, specs[args.dataset], need_index=False)
    stats = tsa.summary_stats(art.series.values)
    print(
        f"{args.dataset}: {len(art.series)} points, frequency {art.series.frequency.value}, "
        f"min {stats.min:.4f}, max {stats.max:.4f}, mean {stats.mean:.4f}, std {stats.std:.4f}"
    )
    print(f"windows (train/val/test): {art.splits.counts}")
    return 0


def cmd_build_index(args) -> int:
    cfg = _load_config(args)
    specs = _load_specs(replace(cfg, datasets=[args.dataset]))
    art = build_artifacts(cfg, specs[args.dataset])
    if art.index is None:
        raise ConfigError(f"{args.dataset}: no scale fits the training region")
    out = args.out or _out_path(cfg, f"{args.dataset}.index")
    save_index(art.index, out)
    print(f"wrote {out} with scales {art.index.scale_order}")
    return 0


def cmd_build_prompts(args) -> int:
    cfg = _load_config(args)
    specs = _load_specs(replace(cfg, datasets=[args.dataset]))
    art = build_artifacts(cfg, specs[args.dataset])
    if art.index is None:
        raise ConfigError(f"{args.dataset}: no scale fits the training region")
    tokenizer = load_tokenizer(cfg.tokenizer_vocab, cfg.tokenizer_merges)
    out = args.out or _out_path(cfg, f"{args.dataset}.prompts.jsonl")
    with open(out, "w", encoding="utf-8") as fh:
        for scale_name in art.index.scale_order:
            sc = art.index.scales[scale_name]
            for cid, text in enumerate(sc.descriptions):
                fh.write(json.dumps({
                    "scale": scale_name,
                    "cluster_id": cid,
                    "description": text,
                    "tokens": count_tokens(text, tokenizer),
                }) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    specs = _load_specs(replace(cfg, datasets=[args.dataset]))
    art = build_artifacts(cfg, specs[args.dataset], need_index=cfg.mask[1])
    result, model = run_cell(cfg, art, "train", return_model=True)
    print(json.dumps(result.row(), default=str, indent=2))
    if result.status != "ok":
        return 2
    out = args.out or _out_path(cfg, f"{args.dataset}.ckpt")
    save_checkpoint(model, {"dataset": args.dataset, "config_digest": cfg.digest()}, out)
    print(f"checkpoint: {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    specs = _load_specs(replace(cfg, datasets=[args.dataset]))
    art = build_artifacts(cfg, specs[args.dataset], need_index=cfg.mask[1])
    tokenizer = load_tokenizer(cfg.tokenizer_vocab, cfg.tokenizer_merges)
    from .experiment import _build_model  # same construction path as training

    model = _build_model(cfg, tokenizer, cfg.seed, cfg.alignment, cfg.encoder_mode,
                         cfg.wte_baseline)
    load_into_model(model, args.ckpt)
    builder = art.builder(tokenizer, cfg.prompt_settings()) if any(cfg.mask) else None
    entry = evaluate(model, art.splits.test, builder, scale=cfg.metrics_scale)
    print(json.dumps({"dataset": args.dataset, "mse": entry.mse, "mae": entry.mae,
                      "windows": entry.n_windows}))
    return 0


def cmd_ablate_prompts(args) -> int:
    cfg = _load_config(args)
    _emit_all(cfg, run_ablation_prompts(cfg), "prompt_ablation")
    return 0


def cmd_ablate_align(args) -> int:
    cfg = _load_config(args)
    _emit_all(cfg, run_alignment_ablation(cfg), "alignment_ablation")
    return 0


def cmd_ablate_encoder(args) -> int:
    cfg = _load_config(args)
    _emit_all(cfg, run_encoder_ablation(cfg), "encoder_ablation")
    return 0


def cmd_zero_shot(args) -> int:
    cfg = _load_config(args)
    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    rows = run_zero_shot(cfg, args.source, targets)
    _emit_all(cfg, rows, "zero_shot")
    return 0


def cmd_report(args) -> int:
    rows = parse_report_csv(args.results)
    emit_report(rows, args.format, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_reproduce(args) -> int:
    cfg = _load_config(args)
    with open(args.records, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    row = payload["rows"][args.row]
    rerun = reproduce_cell(cfg, row)
    print(json.dumps(rerun, default=str, indent=2))
    match = all(rerun[k] == row[k] for k in ("mse", "mae"))
    print(f"metrics match recorded row: {match}")
    return 0 if match else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aspectcast",
        description="Prompt-conditioned time-series forecasting experiments",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="load a dataset and print a summary")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("build-index", help="fit and save the multiscale cluster index")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_build_index)

    p = sub.add_parser("build-prompts", help="write cached cluster descriptions")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_build_prompts)

    p = sub.add_parser("train", help="train one cell and save a checkpoint")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate-prompts", help="run the 16 prompt-combination cells")
    _add_common(p)
    p.set_defaults(fn=cmd_ablate_prompts)

    p = sub.add_parser("ablate-align", help="run the four alignment variants")
    _add_common(p)
    p.set_defaults(fn=cmd_ablate_align)

    p = sub.add_parser("ablate-encoder", help="run the three encoder modes")
    _add_common(p)
    p.set_defaults(fn=cmd_ablate_encoder)

    p = sub.add_parser("zero-shot", help="train on one dataset, evaluate on others")
    _add_common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--targets", required=True, help="comma-separated dataset names")
    p.set_defaults(fn=cmd_zero_shot)

    p = sub.add_parser("report", help="re-render a results CSV in another format")
    p.add_argument("--results", required=True)
    p.add_argument("--format", default="markdown", choices=["csv", "markdown", "plot-data"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("reproduce", help="re-run one recorded cell and compare metrics")
    _add_common(p)
    p.add_argument("--records", required=True, help="a *_cells.json file")
    p.add_argument("--row", type=int, required=True)
    p.set_defaults(fn=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return 1
    except AspectCastError as exc:
        log.error("run failed: %s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports everything
        log.error("unexpected failure: %s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
