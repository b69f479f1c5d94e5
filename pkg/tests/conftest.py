"""Shared fixtures: synthetic datasets, registry files, and toy tokenizers."""
import json
import os

import numpy as np
import pytest

from aspectcast.core import Frequency, TimeSeries
from aspectcast.synthetic import ar1, seasonal_trend, write_series_csv
from aspectcast.tokenizer import _bytes_to_unicode


@pytest.fixture(scope="session")
def toy_series() -> TimeSeries:
    values = seasonal_trend(400, period=16, seed=1)
    return TimeSeries(
        values=values,
        timestamps=np.arange(400.0),
        frequency=Frequency.DAILY,
        name="toy",
    )


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    """Two small synthetic CSV datasets plus a registry and experiment config."""
    root = tmp_path_factory.mktemp("data")
    write_series_csv(str(root / "synth_a.csv"), seasonal_trend(420, period=12, seed=11))
    write_series_csv(str(root / "synth_b.csv"), ar1(360, phi=0.8, seed=12))
    registry = {
        "datasets": {
            "synth_a": {
                "path": "synth_a.csv",
                "value_column": "v",
                "timestamp_column": "t",
                "frequency": "daily",
                "group": "long_term",
                "k": 3,
                "card": {
                    "domain": "Synthetic",
                    "target": "seasonal ramp level",
                    "sampling": "Daily",
                    "timespan": "index 0-419",
                    "notes": "Generated sine-plus-trend series for pipeline tests.",
                },
                "scales": [
                    {"name": "Short", "patch_size": 4, "window_size": 3},
                    {"name": "Long", "patch_size": 6, "window_size": 4},
                ],
            },
            "synth_b": {
                "path": "synth_b.csv",
                "value_column": "v",
                "timestamp_column": "t",
                "frequency": "daily",
                "group": "short_term",
                "k": 3,
                "card": {
                    "domain": "Synthetic",
                    "target": "autoregressive level",
                    "sampling": "Daily",
                    "timespan": "index 0-359",
                    "notes": "Generated first-order autoregressive series for pipeline tests.",
                },
                "scales": [
                    {"name": "Short", "patch_size": 4, "window_size": 3},
                    {"name": "Long", "patch_size": 6, "window_size": 4},
                ],
            },
        }
    }
    import yaml

    (root / "registry.yaml").write_text(yaml.safe_dump(registry), encoding="utf-8")
    config = {
        "registry": "registry.yaml",
        "datasets": ["synth_a", "synth_b"],
        "output_dir": str(root / "runs"),
        "seed": 7,
        "n_runs": 1,
        "task": {"input_len": 24, "horizon": 6},
        "train": {"lr": 2e-3, "batch_size": 32, "epochs": 1},
        "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "align_heads": 2,
                  "lora_rank": 2, "lora_alpha": 4},
    }
    (root / "config.yaml").write_text(yaml.safe_dump(config), encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def toy_bpe_files(tmp_path_factory):
    """A miniature BPE vocabulary: all 256 byte tokens plus a few merges."""
    root = tmp_path_factory.mktemp("tok")
    byte_map = _bytes_to_unicode()
    vocab = {ch: i for i, ch in enumerate(byte_map[b] for b in range(256))}
    for extra in ("he", "hel", "lo", "hello", "<|endoftext|>"):
        vocab[extra] = len(vocab)
    merges = [("h", "e"), ("he", "l"), ("l", "o"), ("hel", "lo")]
    vocab_path = root / "vocab.json"
    merges_path = root / "merges.txt"
    vocab_path.write_text(json.dumps(vocab), encoding="utf-8")
    merges_path.write_text(
        "#version: toy\n" + "\n".join(f"{a} {b}" for a, b in merges) + "\n",
        encoding="utf-8",
    )
    return str(vocab_path), str(merges_path)
