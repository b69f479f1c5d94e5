"""Deterministic construction of the four aspect prompts.

Every builder is a pure function of its inputs: identical windows, cards,
indices and settings yield byte-identical text, which keeps token budgets
and cached embeddings reproducible. An optional remote text client can
extend the dataset-level prompt; its responses are cached on disk so reruns
stay deterministic.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import tsa
from .core import Window
from .errors import (
    EmptyInput,
    IndexMissing,
    LengthMismatch,
    MissingAnalyses,
    PromptTooLong,
    RemoteUnavailable,
    TokenizerUnavailable,
)
from .patchcluster import ClusterIndex, PatchConfig, nearest_cluster

log = logging.getLogger(__name__)

ASPECTS = ("global", "local", "statistical", "temporal")
DEFAULT_CONTEXT_LIMIT = 1024
DEFAULT_LOCAL_BAND = (200, 700)


class PromptVariant(str, Enum):
    MINIMAL = "minimal"
    VERBOSE = "verbose"


@dataclass(frozen=True)
class DatasetCard:
    """Dataset-level context used by the global prompt."""

    name: str
    domain: str
    target: str
    sampling: str
    timespan: str
    notes: str

    def validate(self) -> "DatasetCard":
        for fieldname, value in self.__dict__.items():
            if not str(value).strip():
                raise EmptyInput(f"dataset card field {fieldname!r} is empty")
        return self

    def digest(self) -> str:
        raw = json.dumps(self.__dict__, sort_keys=True).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()


@dataclass(frozen=True)
class PromptBundle:
    """Up to four aspect texts plus their token counts."""

    global_text: Optional[str]
    local_text: Optional[str]
    statistical_text: Optional[str]
    temporal_text: Optional[str]
    token_counts: dict[str, int]
    mask: tuple[bool, bool, bool, bool]

    def texts(self) -> tuple[Optional[str], ...]:
        return (self.global_text, self.local_text, self.statistical_text, self.temporal_text)

    @property
    def n_included(self) -> int:
        return sum(self.mask)


TEMPORAL_MINIMAL_TEXT = (
    "The Autocorrelation Function (ACF) measures the correlation between observations at "
    "time t and t-k, including indirect effects from intermediate time steps, whereas the "
    "Partial Autocorrelation Function (PACF) isolates the direct correlation between t and "
    "t-k by removing the influence of intermediate lags. A Fourier transform highlights "
    "the dominant frequencies at which patterns of the series recur."
)

_STATISTICAL_CONCEPT_TEXT = (
    "Trend reflects the long-term progression of the time-series, while seasonality refers "
    "to repeating patterns at fixed intervals. These quantities summarize the level and "
    "dispersion a forecast should respect."
)


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _fmt_list(values: Sequence[float]) -> str:
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


# --- remote augmentation ------------------------------------------------------

class RemoteTextClient:
    """Minimal HTTP client for prompt augmentation with a JSON-lines cache.

    Requests are keyed by a hash of (model, prompt, max_tokens); cached
    responses are replayed without touching the network, so a warmed cache
    makes reruns fully offline and deterministic.
    """

    def __init__(
        self,
        endpoint: str,
        model: str = "text-small",
        max_tokens: int = 120,
        token_env: str = "ASPECTCAST_API_TOKEN",
        cache_path: Optional[str] = None,
        session=None,
        timeout: float = 15.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.max_tokens = max_tokens
        self.token_env = token_env
        self.cache_path = cache_path
        self.session = session
        self.timeout = timeout
        self._cache: dict[str, str] = {}
        if cache_path and os.path.exists(cache_path):
            with open(cache_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self._cache[record["key"]] = record["text"]

    def _key(self, prompt: str) -> str:
        raw = json.dumps(
            {"model": self.model, "prompt": prompt, "max_tokens": self.max_tokens},
            sort_keys=True,
        ).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()

    def generate(self, prompt: str) -> str:
        key = self._key(prompt)
        if key in self._cache:
            return self._cache[key]
        token = os.environ.get(self.token_env)
        if not token:
            raise RemoteUnavailable(f"env var {self.token_env} not set")
        session = self.session
        if session is None:
            import requests

            session = requests
        try:
            response = session.post(
                self.endpoint,
                json={"model": self.model, "prompt": prompt, "max_tokens": self.max_tokens},
                headers={"Authorization": f"Bearer {token}"},
                timeout=self.timeout,
            )
        except Exception as exc:  # connection errors, timeouts
            raise RemoteUnavailable(str(exc)) from exc
        if getattr(response, "status_code", 0) != 200:
            raise RemoteUnavailable(f"status {getattr(response, 'status_code', '?')}")
        try:
            text = response.json()["text"]
        except Exception as exc:
            raise RemoteUnavailable(f"malformed response: {exc}") from exc
        self._cache[key] = text
        if self.cache_path:
            with open(self.cache_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "text": text}) + "\n")
        return text


# --- builders -----------------------------------------------------------------

def build_global(card: DatasetCard, augment: Optional[RemoteTextClient] = None) -> str:
    """Dataset-level context prompt; optionally extended by a remote model.

    Remote failures fall back to the deterministic template and are logged,
    never raised.
    """
    card.validate()
    base = (
        f"{card.name} is a {card.domain} dataset. The target feature is {card.target}, "
        f"sampled at {card.sampling} intervals over {card.timespan}. {card.notes} "
        "Context of this kind anchors the scale and rhythm of plausible future values. "
        "Forecasts should stay consistent with how this quantity is collected and behaves "
        "in its domain."
    )
    if augment is None:
        return base
    request = (
        "The current input is a brief description of the domain of a time-series dataset. "
        "Generate about 5 sentences to make the description more detailed and domain-specific, "
        "providing additional insights into the dataset's characteristics.\n" + base
    )
    try:
        extra = augment.generate(request).strip()
    except RemoteUnavailable as exc:
        log.warning("remote augmentation unavailable for %s: %s (using template)", card.name, exc)
        return base
    return base + " " + extra if extra else base


def describe_clusters(idx: ClusterIndex) -> ClusterIndex:
    """Attach a deterministic description to every cluster of every scale.

    The text combines the representative window's behavior with a summary
    of what its nearest members share, so lookups at inference read like a
    short analyst note for that recurring pattern.
    """
    for name, sc in idx.scales.items():
        if sc.representative_ids.size != sc.k or sc.windows_raw.size == 0:
            raise IndexMissing(f"scale {name!r}: representatives not selected before describing")
        descriptions = []
        for cid in range(sc.k):
            rep_id = int(sc.representative_ids[cid])
            raw = sc.windows_raw[rep_id]
            stats = tsa.summary_stats(raw)
            label = tsa.trend_label(raw).value
            if stats.std > 0:
                hits = tsa.anomaly_points(raw)
                anom = (
                    f"{len(hits)} unusual points, strongest at step {hits[0][0]}"
                    if hits
                    else "no unusual points"
                )
            else:
                anom = "a flat profile"
            members = sc.nearest_ids[cid]
            devs = [
                float(np.sqrt(np.sum((sc.windows_norm[m] - sc.centroids[cid]) ** 2)))
                for m in members
            ]
            shared_labels = [tsa.trend_label(sc.windows_raw[m]).value for m in members]
            shared = max(sorted(set(shared_labels)), key=shared_labels.count)
            descriptions.append(
                f"Pattern {cid}: {label} trend; mean {_fmt(stats.mean)}, "
                f"spread {_fmt(stats.std)}; {anom}. Nearest {len(members)} windows share "
                f"a {shared} shape, mean deviation {_fmt(float(np.mean(devs)))}."
            )
        sc.descriptions = tuple(descriptions)
    return idx


def build_local(window: np.ndarray, idx: ClusterIndex, configs: Sequence[PatchConfig]) -> str:
    """Per-scale nearest-cluster descriptions, concatenated with scale headers.

    Each scale reads the suffix of the window matching its span, so the
    same recent history is interpreted at every granularity.
    """
    window = np.asarray(window, dtype=np.float64)
    if not configs:
        raise IndexMissing("no scales configured for the local prompt")
    sections = []
    for cfg in configs:
        if cfg.scale_name not in idx.scales:
            raise IndexMissing(f"scale {cfg.scale_name!r} missing from the cluster index")
        sc = idx.scales[cfg.scale_name]
        if not sc.descriptions or not all(sc.descriptions):
            raise IndexMissing(f"scale {cfg.scale_name!r} has no cached descriptions")
        d = cfg.data_points
        if window.size < d:
            raise LengthMismatch(
                f"window of {window.size} points cannot cover scale "
                f"{cfg.scale_name!r} ({d} points)"
            )
        cid = nearest_cluster(window[-d:], idx, cfg.scale_name)
        sections.append(f"[{cfg.scale_name}] {sc.descriptions[cid]}")
    return " ".join(sections)


def build_statistical(
    window: np.ndarray,
    variant: PromptVariant = PromptVariant.MINIMAL,
    seasonal_period: Optional[int] = None,
) -> str:
    """Summary statistics plus fixed conceptual framing; the verbose variant
    appends the full decomposed trend/seasonal value lists."""
    window = np.asarray(window, dtype=np.float64)
    if window.size == 0:
        raise EmptyInput("cannot build a statistical prompt for an empty window")
    stats = tsa.summary_stats(window)
    text = (
        "Key statistics of the observed window. "
        f"minimum: {_fmt(stats.min)}, maximum: {_fmt(stats.max)}, "
        f"mean: {_fmt(stats.mean)}, std: {_fmt(stats.std)}. "
        + _STATISTICAL_CONCEPT_TEXT
    )
    if PromptVariant(variant) is PromptVariant.VERBOSE:
        period = seasonal_period or max(2, min(12, window.size // 2))
        parts = tsa.decompose(window, period)
        text += (
            f" Decomposed trend values: {_fmt_list(parts.trend)}."
            f" Decomposed seasonal values: {_fmt_list(parts.seasonal)}."
        )
    return text


@dataclass(frozen=True)
class TemporalAnalyses:
    acf: np.ndarray
    pacf: np.ndarray
    spectrum: tsa.SpectralSummary


def compute_temporal_analyses(
    window: np.ndarray,
    max_lag: Optional[int] = None,
    n_peaks: int = 3,
    period: Optional[int] = None,
) -> TemporalAnalyses:
    """ACF/PACF and top spectral peaks for the verbose temporal prompt.

    Default lag depth is two seasonal periods, capped to half the window.
    """
    window = np.asarray(window, dtype=np.float64)
    if max_lag is None:
        base = 2 * (period or max(2, min(12, window.size // 4)))
        max_lag = max(1, min(base, window.size // 2, window.size - 2))
    return TemporalAnalyses(
        acf=tsa.acf(window, max_lag),
        pacf=tsa.pacf(window, max_lag),
        spectrum=tsa.periodogram_top(window, n_peaks),
    )


def build_temporal(
    variant: PromptVariant = PromptVariant.MINIMAL,
    analyses: Optional[TemporalAnalyses] = None,
) -> str:
    """Fixed conceptual text; the verbose variant appends rendered analyses."""
    if PromptVariant(variant) is PromptVariant.MINIMAL:
        return TEMPORAL_MINIMAL_TEXT
    if analyses is None:
        raise MissingAnalyses("verbose temporal prompt requires computed analyses")
    peaks = analyses.spectrum.dominant_frequencies
    if peaks:
        peak_text = ", ".join(f"{_fmt(freq)} cycles/sample (power {_fmt(power)})"
                              for freq, power in peaks)
    else:
        peak_text = "none above the numerical floor"
    return (
        TEMPORAL_MINIMAL_TEXT
        + f" Measured ACF by lag: {_fmt_list(analyses.acf)}."
        + f" Measured PACF by lag: {_fmt_list(analyses.pacf)}."
        + f" The dominant frequencies are: {peak_text}."
    )


def count_tokens(text: str, tokenizer) -> int:
    if tokenizer is None:
        raise TokenizerUnavailable("no tokenizer loaded")
    return len(tokenizer.encode(text))


def assemble(
    texts: Sequence[Optional[str]],
    mask: Sequence[bool],
    tokenizer,
    context_limit: int = DEFAULT_CONTEXT_LIMIT,
) -> PromptBundle:
    """Bundle the masked-in aspect texts, enforcing the context budget.

    Any included part over the limit aborts construction with the offending
    count; an all-false mask legitimately yields the prompt-free bundle.
    """
    mask = tuple(bool(m) for m in mask)
    if len(mask) != 4 or len(texts) != 4:
        raise LengthMismatch("expected exactly 4 aspect slots")
    kept: list[Optional[str]] = [None] * 4
    counts: dict[str, int] = {}
    for i, aspect in enumerate(ASPECTS):
        if not mask[i]:
            continue
        text = texts[i]
        if not text:
            raise EmptyInput(f"aspect {aspect!r} is masked in but has no text")
        n = count_tokens(text, tokenizer)
        if n > context_limit:
            raise PromptTooLong(aspect, n, context_limit)
        kept[i] = text
        counts[aspect] = n
    return PromptBundle(
        global_text=kept[0],
        local_text=kept[1],
        statistical_text=kept[2],
        temporal_text=kept[3],
        token_counts=counts,
        mask=mask,
    )


# --- per-window bundle construction -------------------------------------------

@dataclass
class PromptSettings:
    mask: tuple[bool, bool, bool, bool] = (True, True, True, True)
    variant: PromptVariant = PromptVariant.MINIMAL
    context_limit: int = DEFAULT_CONTEXT_LIMIT
    local_band: tuple[int, int] = DEFAULT_LOCAL_BAND
    seasonal_period: Optional[int] = None


class BundleBuilder:
    """Builds the aspect prompts for each forecasting window of one dataset.

    The dataset-level texts are computed once; window-level texts are pure
    functions of the window (and, for the local prompt, of the history
    ending at the forecast origin). Scales whose span exceeds the available
    history are skipped for that window.
    """

    def __init__(
        self,
        card: DatasetCard,
        tokenizer,
        settings: PromptSettings,
        index: Optional[ClusterIndex] = None,
        configs: Sequence[PatchConfig] = (),
        series_values: Optional[np.ndarray] = None,
        augment: Optional[RemoteTextClient] = None,
    ):
        self.card = card
        self.tokenizer = tokenizer
        self.settings = settings
        self.index = index
        self.configs = tuple(configs)
        self.series_values = None if series_values is None else np.asarray(series_values)
        if settings.mask[1] and (index is None or not self.configs):
            raise IndexMissing("local prompt requested but no cluster index/scales supplied")
        self.global_text = build_global(card, augment) if settings.mask[0] else None
        self.temporal_text = (
            build_temporal(PromptVariant.MINIMAL) if settings.mask[3] else None
        )

    def _local_context(self, window: Window) -> tuple[np.ndarray, list[PatchConfig]]:
        end = window.start + window.input.size
        need = max(cfg.data_points for cfg in self.configs)
        if self.series_values is not None:
            lo = max(0, end - need)
            context = self.series_values[lo:end]
        else:
            context = window.input
        usable = [cfg for cfg in self.configs if cfg.data_points <= context.size]
        if not usable:
            raise IndexMissing(
                f"no configured scale fits the {context.size} points of history available"
            )
        return context, usable

    def for_window(self, window: Window) -> PromptBundle:
        s = self.settings
        texts: list[Optional[str]] = [None] * 4
        if s.mask[0]:
            texts[0] = self.global_text
        if s.mask[1]:
            context, usable = self._local_context(window)
            texts[1] = build_local(context, self.index, usable)
        if s.mask[2]:
            texts[2] = build_statistical(window.input, s.variant, s.seasonal_period)
        if s.mask[3]:
            if PromptVariant(s.variant) is PromptVariant.VERBOSE:
                analyses = compute_temporal_analyses(window.input, period=s.seasonal_period)
                texts[3] = build_temporal(PromptVariant.VERBOSE, analyses)
            else:
                texts[3] = self.temporal_text
        return assemble(texts, s.mask, self.tokenizer, s.context_limit)
