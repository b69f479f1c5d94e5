"""Multiscale window segmentation and k-means indexing.

Windows are z-normalized before clustering so the index groups by shape,
not by level; queries are normalized the same way, which makes lookups
invariant under positive affine maps of the raw values.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import TimeSeries, instance_normalize
from .errors import LengthMismatch, SeriesTooShort, TooFewWindows, UnknownScale

INDEX_MAGIC = b"PCIX"
INDEX_VERSION = 1
METRIC_EUCLIDEAN_ZNORM = "euclidean-znorm"


@dataclass(frozen=True)
class PatchConfig:
    """One timescale: `window_size` patches of `patch_size` points each."""

    scale_name: str
    patch_size: int
    window_size: int

    def __post_init__(self):
        if self.patch_size < 1 or self.window_size < 1:
            raise ValueError("patch_size and window_size must be >= 1")

    @property
    def data_points(self) -> int:
        return self.patch_size * self.window_size


@dataclass
class ScaleCluster:
    """Fitted clusters for one timescale."""

    config: PatchConfig
    k: int
    centroids: np.ndarray  # [k, data_points], z-normalized scale
    assignments: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    window_starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    windows_raw: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    windows_norm: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    inertia_trace: tuple = ()
    representative_ids: np.ndarray = field(default_factory=lambda: np.full(0, -1, dtype=np.int64))
    representative_starts: np.ndarray = field(default_factory=lambda: np.full(0, -1, dtype=np.int64))
    nearest_ids: tuple = ()
    descriptions: tuple = ()


@dataclass
class ClusterIndex:
    """Per-scale centroids, representatives, and cached cluster descriptions."""

    scales: dict[str, ScaleCluster] = field(default_factory=dict)
    metric: str = METRIC_EUCLIDEAN_ZNORM

    def scale(self, name: str) -> ScaleCluster:
        if name not in self.scales:
            raise UnknownScale(f"scale {name!r} not in index (have {sorted(self.scales)})")
        return self.scales[name]

    @property
    def scale_order(self) -> list[str]:
        return list(self.scales.keys())


def _znorm(window: np.ndarray) -> np.ndarray:
    normalized, _ = instance_normalize(window)
    return normalized


def segment(
    ts: Union[TimeSeries, np.ndarray],
    cfg: PatchConfig,
    stride: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Slice a series into windows of `cfg.data_points` values.

    Default stride is one patch, giving overlapping windows that advance a
    patch at a time. Returns (windows [n, data_points], start indices [n]).
    """
    values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=np.float64)
    stride = cfg.patch_size if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    d = cfg.data_points
    n = values.size
    if n < d:
        raise SeriesTooShort(f"{n} points < data_points {d} for scale {cfg.scale_name!r}")
    starts = np.arange(0, n - d + 1, stride, dtype=np.int64)
    windows = np.stack([values[s:s + d] for s in starts])
    return windows, starts


def kmeans_fit(
    windows: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    config: Optional[PatchConfig] = None,
    window_starts: Optional[np.ndarray] = None,
) -> ScaleCluster:
    """Lloyd's algorithm with k-means++ seeding on z-normalized windows.

    Deterministic for a fixed seed. Empty clusters are re-seeded from the
    point farthest from its assigned centroid, so every cluster ends up
    non-empty whenever there are at least k distinct windows.
    """
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise TooFewWindows(f"{n} windows < k = {k}")
    if window_starts is None:
        window_starts = np.arange(n, dtype=np.int64)
    if config is None:
        config = PatchConfig("window", patch_size=windows.shape[1], window_size=1)

    norm = np.stack([_znorm(w) for w in windows])
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seed(norm, k, rng)

    assignments = np.zeros(n, dtype=np.int64)
    trace: list[float] = []
    for _ in range(max_iter):
        dists = _sq_distances(norm, centroids)
        new_assign = np.argmin(dists, axis=1)
        point_d = dists[np.arange(n), new_assign]
        # move the farthest point into each empty cluster before updating
        # means, which keeps the recorded inertia non-increasing
        for _fix in range(k):
            counts = np.bincount(new_assign, minlength=k)
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0:
                break
            far = int(np.argmax(point_d))
            new_assign[far] = int(empties[0])
            point_d[far] = -1.0
        for cid in range(k):
            members = new_assign == cid
            if members.any():
                centroids[cid] = norm[members].mean(axis=0)
        inertia = float(np.sum(_sq_distances(norm, centroids)[np.arange(n), new_assign]))
        trace.append(inertia)
        if np.array_equal(new_assign, assignments) and len(trace) > 1:
            assignments = new_assign
            break
        assignments = new_assign

    return ScaleCluster(
        config=config,
        k=k,
        centroids=centroids,
        assignments=assignments,
        window_starts=np.asarray(window_starts, dtype=np.int64),
        windows_raw=windows,
        windows_norm=norm,
        inertia_trace=tuple(trace),
    )


def _kmeans_pp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen center
            centers[i] = points[int(rng.integers(n))]
        else:
            probs = closest / total
            choice = int(rng.choice(n, p=probs))
            centers[i] = points[choice]
        closest = np.minimum(closest, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.sum(diff * diff, axis=2)


def select_representatives(sc: ScaleCluster, n_nearest: int = 5) -> ScaleCluster:
    """Record, per cluster, the member closest to the centroid plus the
    `n_nearest` closest members overall (ties broken by lowest start index)."""
    if sc.windows_norm.size == 0:
        raise TooFewWindows("cannot select representatives on an index without members")
    rep_ids = np.full(sc.k, -1, dtype=np.int64)
    rep_starts = np.full(sc.k, -1, dtype=np.int64)
    nearest: list[tuple[int, ...]] = []
    for cid in range(sc.k):
        members = np.flatnonzero(sc.assignments == cid)
        if members.size == 0:
            nearest.append(())
            continue
        d = np.sum((sc.windows_norm[members] - sc.centroids[cid]) ** 2, axis=1)
        order = sorted(range(members.size), key=lambda i: (d[i], sc.window_starts[members[i]]))
        ranked = [int(members[i]) for i in order]
        rep_ids[cid] = ranked[0]
        rep_starts[cid] = int(sc.window_starts[ranked[0]])
        nearest.append(tuple(ranked[:n_nearest]))
    sc.representative_ids = rep_ids
    sc.representative_starts = rep_starts
    sc.nearest_ids = tuple(nearest)
    return sc


def nearest_cluster(window: np.ndarray, idx: ClusterIndex, scale: str) -> int:
    """Id of the closest centroid to the z-normalized query window."""
    sc = idx.scale(scale)
    window = np.asarray(window, dtype=np.float64)
    if window.size != sc.config.data_points:
        raise LengthMismatch(
            f"query has {window.size} points, scale {scale!r} expects {sc.config.data_points}"
        )
    q = _znorm(window)
    d = np.sum((sc.centroids - q) ** 2, axis=1)
    return int(np.argmin(d))  # argmin returns the lowest index on ties


# --- serialization -----------------------------------------------------------

def _write_str(out: list[bytes], text: str) -> None:
    data = text.encode("utf-8")
    out.append(struct.pack("<I", len(data)))
    out.append(data)


def save_index(idx: ClusterIndex, path: str) -> None:
    """Write the inference-time view of the index: centroids,
    representatives, and cached descriptions (members are not persisted)."""
    out: list[bytes] = [INDEX_MAGIC, struct.pack("<I", INDEX_VERSION)]
    _write_str(out, idx.metric)
    out.append(struct.pack("<I", len(idx.scales)))
    for name, sc in idx.scales.items():
        _write_str(out, name)
        out.append(struct.pack("<III", sc.config.patch_size, sc.config.window_size, sc.k))
        out.append(np.ascontiguousarray(sc.centroids, dtype=np.float64).tobytes())
        out.append(np.ascontiguousarray(sc.representative_starts, dtype=np.int64).tobytes())
        descriptions = sc.descriptions if sc.descriptions else ("",) * sc.k
        for text in descriptions:
            _write_str(out, text)
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        chunk = self.data[self.pos:self.pos + n]
        if len(chunk) != n:
            raise ValueError("truncated index file")
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_index(path: str) -> ClusterIndex:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != INDEX_MAGIC:
        raise ValueError(f"{path}: not a cluster index file")
    version = r.u32()
    if version != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version {version}")
    metric = r.text()
    idx = ClusterIndex(metric=metric)
    for _ in range(r.u32()):
        name = r.text()
        patch_size, window_size, k = struct.unpack("<III", r.take(12))
        cfg = PatchConfig(name, patch_size=patch_size, window_size=window_size)
        d = cfg.data_points
        centroids = np.frombuffer(r.take(8 * k * d), dtype=np.float64).reshape(k, d).copy()
        rep_starts = np.frombuffer(r.take(8 * k), dtype=np.int64).copy()
        descriptions = tuple(r.text() for _ in range(k))
        idx.scales[name] = ScaleCluster(
            config=cfg,
            k=k,
            centroids=centroids,
            representative_starts=rep_starts,
            descriptions=descriptions,
        )
    return idx
