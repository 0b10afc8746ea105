"""Shot segmentation and detection of recurring shots.

Frames are described by a grid of HSV colour histograms. Two frames are
compared block by block with the Pearson correlation of their histograms
and the block scores are averaged. A cut separates adjacent frames whose
similarity falls below ``cut_threshold``; a shot is considered a repeat of
an earlier one when the first frame of the former and the last frame of the
latter correlate at ``similarity_threshold`` or more.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import DisjointSet


class ShotAnalysisError(ValueError):
    pass


class EmptyImage(ShotAnalysisError):
    pass


class EmptyInput(ShotAnalysisError):
    pass


class LayoutMismatch(ShotAnalysisError):
    pass


@dataclass(frozen=True)
class ShotConfig:
    cut_threshold: float = 0.5
    similarity_threshold: float = 0.8
    block_rows: int = 5
    block_cols: int = 6
    bins_h: int = 8
    bins_s: int = 4
    bins_v: int = 4
    lookback_shots: Optional[int] = None

    def __post_init__(self):
        for name in ("block_rows", "block_cols", "bins_h", "bins_s", "bins_v"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lookback_shots is not None and self.lookback_shots < 1:
            raise ValueError("lookback_shots must be a positive integer")

    @property
    def n_blocks(self) -> int:
        return self.block_rows * self.block_cols

    @property
    def n_bins(self) -> int:
        return self.bins_h * self.bins_s * self.bins_v


@dataclass(frozen=True)
class BlockHistogram:
    """Normalized per-block HSV histograms, shape ``(n_blocks, n_bins)``.

    Bin index of a pixel is ``(h * bins_s + s) * bins_v + v``.
    """

    masses: np.ndarray
    grid: tuple[int, int]
    bins: tuple[int, int, int]

    @property
    def layout(self) -> tuple:
        return self.grid, self.bins


@dataclass(frozen=True)
class FrameDescriptor:
    frame_index: int
    timestamp: float
    histogram: BlockHistogram


@dataclass(frozen=True)
class Shot:
    id: int
    start_frame: int
    end_frame: int
    start_time: float
    end_time: float

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass
class ShotLabeling:
    """Label of every shot plus the raw pairwise similarity edges."""

    labels: list[int]
    edges: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def n_labels(self) -> int:
        return len(set(self.labels))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB (uint8 or [0,1] floats) to HSV in [0,1]^3.

    Follows the same arithmetic as :func:`colorsys.rgb_to_hsv` so that both
    give bit-identical results.
    """
    rgb = np.asarray(rgb)
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float64) / 255.0
    else:
        rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    rangec = maxc - minc
    grey = rangec == 0
    safe_max = np.where(maxc == 0, 1.0, maxc)
    safe_range = np.where(grey, 1.0, rangec)
    s = np.where(grey, 0.0, rangec / safe_max)
    rc = (maxc - r) / safe_range
    gc = (maxc - g) / safe_range
    bc = (maxc - b) / safe_range
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.mod(h / 6.0, 1.0)
    h = np.where(grey, 0.0, h)
    return np.stack([h, s, maxc], axis=-1)


def _bin(values: np.ndarray, n: int) -> np.ndarray:
    return np.minimum((values * n).astype(np.int64), n - 1)


def _block_edges(size: int, parts: int) -> list[int]:
    step = size // parts
    return [i * step for i in range(parts)] + [size]


def compute_block_histograms(pixels: np.ndarray, config: ShotConfig = ShotConfig()) -> BlockHistogram:
    pixels = np.asarray(pixels)
    if pixels.size == 0:
        raise EmptyImage("image has no pixels")
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShotAnalysisError(f"expected an HxWx3 RGB raster, got shape {pixels.shape}")
    height, width = pixels.shape[:2]
    if height < config.block_rows or width < config.block_cols:
        raise EmptyImage(
            f"image {height}x{width} is smaller than the {config.block_rows}x{config.block_cols} grid"
        )

    hsv = rgb_to_hsv(pixels)
    idx = (
        _bin(hsv[..., 0], config.bins_h) * config.bins_s + _bin(hsv[..., 1], config.bins_s)
    ) * config.bins_v + _bin(hsv[..., 2], config.bins_v)

    rows = _block_edges(height, config.block_rows)
    cols = _block_edges(width, config.block_cols)
    masses = np.empty((config.n_blocks, config.n_bins))
    for i in range(config.block_rows):
        for j in range(config.block_cols):
            block = idx[rows[i]:rows[i + 1], cols[j]:cols[j + 1]]
            counts = np.bincount(block.ravel(), minlength=config.n_bins)
            masses[i * config.block_cols + j] = counts / block.size
    return BlockHistogram(
        masses=masses,
        grid=(config.block_rows, config.block_cols),
        bins=(config.bins_h, config.bins_s, config.bins_v),
    )


def _block_correlations(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # rows are blocks; constant rows follow the fixed conventions
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    na = np.sqrt((ac * ac).sum(axis=1))
    nb = np.sqrt((bc * bc).sum(axis=1))
    const_a = na <= 1e-15
    const_b = nb <= 1e-15
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (ac * bc).sum(axis=1) / (na * nb)
    r = np.clip(r, -1.0, 1.0)
    both = const_a & const_b
    r = np.where(const_a | const_b, 0.0, r)
    r = np.where(both & np.all(np.abs(a - b) <= 1e-15, axis=1), 1.0, r)
    return r


def histogram_similarity(a: BlockHistogram, b: BlockHistogram) -> float:
    if a.layout != b.layout or a.masses.shape != b.masses.shape:
        raise LayoutMismatch(f"histogram layouts differ: {a.layout} vs {b.layout}")
    return float(_block_correlations(a.masses, b.masses).mean())


def frame_similarity(a: FrameDescriptor, b: FrameDescriptor) -> float:
    """Mean per-block Pearson correlation between two frames, in [-1, 1]."""
    return histogram_similarity(a.histogram, b.histogram)


def adjacent_similarities(frames: Sequence[FrameDescriptor]) -> np.ndarray:
    return np.array([frame_similarity(frames[i], frames[i + 1]) for i in range(len(frames) - 1)])


def _frame_duration(frames: Sequence[FrameDescriptor]) -> float:
    if len(frames) < 2:
        return 0.0
    deltas = np.diff([f.timestamp for f in frames])
    return float(np.median(deltas))


def shots_from_cuts(
    frames: Sequence[FrameDescriptor], cut_after: Sequence[int], frame_duration: Optional[float] = None
) -> list[Shot]:
    """Build shots from the indices ``i`` such that a cut lies between frames i and i+1."""
    if not frames:
        raise EmptyInput("no frames")
    if frame_duration is None:
        frame_duration = _frame_duration(frames)
    starts = [0] + [i + 1 for i in sorted(cut_after)]
    ends = [s - 1 for s in starts[1:]] + [len(frames) - 1]
    shots = []
    for k, (s, e) in enumerate(zip(starts, ends)):
        end_time = frames[e + 1].timestamp if e + 1 < len(frames) else frames[e].timestamp + frame_duration
        shots.append(
            Shot(
                id=k,
                start_frame=frames[s].frame_index,
                end_frame=frames[e].frame_index,
                start_time=frames[s].timestamp,
                end_time=end_time,
            )
        )
    return shots


def _check_stream(frames: Sequence[FrameDescriptor]) -> None:
    for prev, cur in zip(frames, frames[1:]):
        if cur.frame_index <= prev.frame_index:
            raise ShotAnalysisError(f"frame indices not strictly increasing at {cur.frame_index}")
        if cur.timestamp < prev.timestamp:
            raise ShotAnalysisError(f"timestamps decrease at frame {cur.frame_index}")


def detect_cuts(
    frames: Sequence[FrameDescriptor], config: ShotConfig = ShotConfig(), frame_duration: Optional[float] = None
) -> list[Shot]:
    """Split the frame stream at every abrupt transition.

    Only hard cuts are detected; gradual transitions are not modelled.
    """
    if not frames:
        raise EmptyInput("no frames")
    _check_stream(frames)
    sims = adjacent_similarities(frames)
    cuts = [i for i, s in enumerate(sims) if s < config.cut_threshold]
    return shots_from_cuts(frames, cuts, frame_duration)


def _frame_position(frames: Sequence[FrameDescriptor]) -> dict[int, int]:
    return {f.frame_index: pos for pos, f in enumerate(frames)}


def detect_similar_shots(
    shots: Sequence[Shot], frames: Sequence[FrameDescriptor], config: ShotConfig = ShotConfig()
) -> ShotLabeling:
    """Label shots so that recurring camera setups share a label.

    Each shot's first frame is compared with the last frame of every earlier
    shot (optionally only the ``lookback_shots`` most recent ones). Labels are
    the connected components of the resulting similarity graph, numbered in
    order of first appearance.
    """
    pos = _frame_position(frames)
    for shot in shots:
        if shot.start_frame not in pos or shot.end_frame not in pos:
            raise ShotAnalysisError(f"shot {shot.id} refers to frames absent from the stream")
        if shot.start_frame > shot.end_frame:
            raise ShotAnalysisError(f"shot {shot.id} has start_frame > end_frame")

    n = len(shots)
    components = DisjointSet(range(n))
    edges = []
    for j in range(1, n):
        first = frames[pos[shots[j].start_frame]]
        lo = 0 if config.lookback_shots is None else max(0, j - config.lookback_shots)
        for i in range(lo, j):
            last = frames[pos[shots[i].end_frame]]
            if frame_similarity(first, last) >= config.similarity_threshold:
                edges.append((i, j))
                components.merge(i, j)
    return ShotLabeling(labels=labels_from_components(components, n), edges=edges)


def labels_from_components(components: DisjointSet, n: int) -> list[int]:
    names: dict = {}
    labels = []
    for i in range(n):
        root = components[i]
        if root not in names:
            names[root] = len(names)
        labels.append(names[root])
    return labels


def cut_positions(shots: Sequence[Shot]) -> list[int]:
    """Frame index of the first frame after each cut."""
    return [s.start_frame for s in shots[1:]]
