"""Dataset registry: file locations, cards, and per-dataset patch scales.

The eight benchmark datasets ship with built-in cards and multiscale
segmentation configs; anything else (synthetic fixtures, private CSVs) is
described in a YAML registry file and falls back to frequency-based scale
defaults when no explicit scales are given.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .core import Frequency
from .errors import ConfigError
from .patchcluster import PatchConfig
from .promptgen import DatasetCard

# (scale name, patch size, window size) per dataset; data points = product
BENCHMARK_SCALES: dict[str, tuple[tuple[str, int, int], ...]] = {
    "etth1": (("Daily", 24, 7), ("Weekly", 168, 2), ("Monthly", 720, 1)),
    "etth2": (("Daily", 24, 7), ("Weekly", 168, 2), ("Monthly", 720, 1)),
    "electricity": (("Daily", 24, 7), ("Weekly", 168, 2), ("Monthly", 720, 1)),
    "traffic": (("Daily", 24, 7), ("Weekly", 168, 2), ("Monthly", 720, 1)),
    "environment": (("Weekly", 7, 12), ("Monthly", 30, 6), ("Yearly", 365, 1)),
    "climate": (("Weekly", 1, 12), ("Monthly", 4, 6), ("Yearly", 52, 1)),
    "health": (("Weekly", 12, 1), ("Monthly", 4, 6), ("Yearly", 52, 1)),
    "agriculture": (("Monthly", 1, 6), ("Yearly", 12, 1)),
}

# fallback scales for unregistered datasets, by sampling frequency
FREQUENCY_SCALES: dict[Frequency, tuple[tuple[str, int, int], ...]] = {
    Frequency.HOURLY: BENCHMARK_SCALES["etth1"],
    Frequency.DAILY: BENCHMARK_SCALES["environment"],
    Frequency.WEEKLY: BENCHMARK_SCALES["climate"],
    Frequency.MONTHLY: BENCHMARK_SCALES["agriculture"],
}

BENCHMARK_CARDS: dict[str, DatasetCard] = {
    "etth1": DatasetCard(
        name="ETTh1",
        domain="Temperature",
        target="Oil Temperature of an electricity transformer",
        sampling="Hourly",
        timespan="2016/07 - 2018/06",
        notes="Hourly transformer sensor measurements from a Chinese region, "
              "including the oil temperature used as the forecast target.",
    ),
    "etth2": DatasetCard(
        name="ETTh2",
        domain="Temperature",
        target="Oil Temperature of an electricity transformer",
        sampling="Hourly",
        timespan="2016/07 - 2018/06",
        notes="Hourly transformer sensor measurements from a second Chinese "
              "region, including the oil temperature used as the forecast target.",
    ),
    "electricity": DatasetCard(
        name="Electricity",
        domain="Electricity",
        target="Electricity Consumption",
        sampling="Hourly",
        timespan="2012/01 - 2014/12",
        notes="Hourly energy consumption readings from 321 customers.",
    ),
    "traffic": DatasetCard(
        name="Traffic",
        domain="Transportation",
        target="Road Occupancy Rate",
        sampling="Hourly",
        timespan="2015/01/01 - 2016/12/31",
        notes="Hourly occupancy rates recorded by 862 California road sensors.",
    ),
    "environment": DatasetCard(
        name="Environment",
        domain="Air quality",
        target="Air quality index",
        sampling="Daily",
        timespan="1980/01 - 2023/09",
        notes="Daily air quality index readings aggregated across US stations.",
    ),
    "climate": DatasetCard(
        name="Climate",
        domain="Drought",
        target="D0 (Abnormally Dry Area Percentage)",
        sampling="Weekly",
        timespan="2000/01/04 - 2024/05/14",
        notes="Weekly nationwide drought-level percentages from NOAA monitoring.",
    ),
    "health": DatasetCard(
        name="Health",
        domain="Influenza",
        target="Influenza Patients proportion",
        sampling="Weekly",
        timespan="1997/09/29 - 2024/05/06",
        notes="Weekly influenza-like-illness case ratios reported by the CDC.",
    ),
    "agriculture": DatasetCard(
        name="Agriculture",
        domain="Retail Price",
        target="Retailer Broiler Composite",
        sampling="Monthly",
        timespan="1980/01 - 2024/04",
        notes="Monthly retail broiler composite price index from the USDA.",
    ),
}


def builtin_scales(dataset: str) -> Optional[list[PatchConfig]]:
    rows = BENCHMARK_SCALES.get(dataset.lower())
    if rows is None:
        return None
    return [PatchConfig(name, patch_size=p, window_size=w) for name, p, w in rows]


def scales_for_frequency(frequency: Frequency) -> list[PatchConfig]:
    rows = FREQUENCY_SCALES[Frequency(frequency)]
    return [PatchConfig(name, patch_size=p, window_size=w) for name, p, w in rows]


def builtin_card(dataset: str) -> Optional[DatasetCard]:
    return BENCHMARK_CARDS.get(dataset.lower())


@dataclass
class DatasetSpec:
    """Everything needed to load and prompt one dataset."""

    name: str
    path: str
    value_column: str
    timestamp_column: str
    frequency: Frequency
    card: DatasetCard
    scales: list[PatchConfig] = field(default_factory=list)
    group: Optional[str] = None  # long_term / short_term; default derived from horizon
    k_clusters: int = 5


def load_registry(path: str) -> dict[str, DatasetSpec]:
    """Parse a YAML registry file into DatasetSpec objects.

    Relative dataset paths resolve against the registry file's directory.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read registry {path}: {exc}") from exc
    if not isinstance(doc, dict) or "datasets" not in doc:
        raise ConfigError(f"{path}: registry must be a mapping with a 'datasets' section")
    base = os.path.dirname(os.path.abspath(path))
    specs: dict[str, DatasetSpec] = {}
    for name, entry in doc["datasets"].items():
        specs[name] = _parse_entry(name, entry or {}, base)
    return specs


def _parse_entry(name: str, entry: dict, base_dir: str) -> DatasetSpec:
    for required in ("path", "value_column"):
        if required not in entry:
            raise ConfigError(f"dataset {name!r}: missing required field {required!r}")
    raw_path = str(entry["path"])
    path = raw_path if os.path.isabs(raw_path) else os.path.join(base_dir, raw_path)
    try:
        frequency = Frequency(str(entry.get("frequency", "daily")).lower())
    except ValueError as exc:
        raise ConfigError(f"dataset {name!r}: unknown frequency {entry.get('frequency')!r}") from exc

    card_entry = entry.get("card")
    if card_entry:
        card = DatasetCard(
            name=str(card_entry.get("name", name)),
            domain=str(card_entry.get("domain", "")),
            target=str(card_entry.get("target", "")),
            sampling=str(card_entry.get("sampling", frequency.value)),
            timespan=str(card_entry.get("timespan", "")),
            notes=str(card_entry.get("notes", "")),
        ).validate()
    else:
        card = builtin_card(name)
        if card is None:
            raise ConfigError(
                f"dataset {name!r}: no card given and no built-in card exists; "
                "supply domain/target/sampling/timespan/notes"
            )

    scales_entry = entry.get("scales")
    if scales_entry:
        scales = [
            PatchConfig(
                str(s["name"]),
                patch_size=int(s["patch_size"]),
                window_size=int(s["window_size"]),
            )
            for s in scales_entry
        ]
    else:
        scales = builtin_scales(name) or scales_for_frequency(frequency)

    return DatasetSpec(
        name=name,
        path=path,
        value_column=str(entry["value_column"]),
        timestamp_column=str(entry.get("timestamp_column", "date")),
        frequency=frequency,
        card=card,
        scales=scales,
        group=entry.get("group"),
        k_clusters=int(entry.get("k", 5)),
    )
