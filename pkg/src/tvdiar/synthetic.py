"""Synthetic episodes with planted dialogues, speakers and embeddings.

An episode is a shot timeline in which each dialogue is a run of two
alternating shot labels and the gaps between dialogues hold filler shots
with labels of their own. Speakers are isotropic Gaussian clusters; the
within-speaker standard deviation is the root-mean-square distance of an
embedding to its speaker center, so ``separation`` means the same thing in
any dimension.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .embedding_space import EmbeddingSet
from .segments import SpeechSegment
from .shot_analysis import Shot


class InfeasibleConfig(ValueError):
    pass


@dataclass
class SyntheticEpisodeConfig:
    num_speakers: int = 6
    num_dialogues: int = 8
    speakers_per_dialogue: int = 2
    segments_per_speaker: int = 5
    dim: int = 60
    separation: float = 10.0
    coverage: float = 0.6
    seed: int = 0
    within_std: float = 1.0
    synchronized: bool = False
    # norm of a per-dialogue offset shared by all its segments, in within_std units
    dialogue_shift: float = 0.0
    train_speakers: int = 30
    train_segments_per_speaker: int = 10
    min_duration: float = 1.0
    max_duration: float = 4.0

    def validate(self) -> None:
        counts = ("num_speakers", "num_dialogues", "speakers_per_dialogue", "segments_per_speaker", "dim")
        for name in counts:
            if getattr(self, name) < 1:
                raise InfeasibleConfig(f"{name} must be >= 1")
        if self.speakers_per_dialogue > self.num_speakers:
            raise InfeasibleConfig("more speakers per dialogue than speakers")
        if self.separation <= 0:
            raise InfeasibleConfig("separation must be > 0")
        if not 0 < self.coverage <= 1:
            raise InfeasibleConfig("coverage must lie in (0, 1]")
        if self.within_std <= 0:
            raise InfeasibleConfig("within_std must be > 0")
        if self.synchronized and self.speakers_per_dialogue > 2:
            raise InfeasibleConfig("synchronized shots need at most 2 speakers per dialogue")
        if not 0 < self.min_duration <= self.max_duration:
            raise InfeasibleConfig("invalid duration range")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticEpisodeConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InfeasibleConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PlantedDialogue:
    dialogue_id: int
    speakers: list[str]
    labels: tuple[int, int]
    start_shot: int
    end_shot: int
    start_time: float
    end_time: float
    segment_ids: list[str] = field(default_factory=list)


@dataclass
class SyntheticEpisode:
    config: SyntheticEpisodeConfig
    shots: list[Shot]
    shot_labels: list[int]
    segments: list[SpeechSegment]
    embeddings: EmbeddingSet
    train_vectors: np.ndarray
    train_speakers: list[str]
    reference: dict[str, str]
    dialogues: list[PlantedDialogue]
    speaker_centers: dict[str, np.ndarray]

    @property
    def segment_dialogue(self) -> dict[str, int]:
        return {s: d.dialogue_id for d in self.dialogues for s in d.segment_ids}

    @property
    def covered_segments(self) -> list[str]:
        return [s for d in self.dialogues for s in d.segment_ids]


def _centers(rng: np.random.Generator, k: int, dim: int, spacing: float) -> np.ndarray:
    if dim >= k:
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return q[:, :k].T * (spacing / np.sqrt(2.0))
    c = rng.standard_normal((k, dim))
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    d[np.diag_indices(k)] = np.inf
    return c * (spacing / d.min())


def _speaker_order(rng, cfg) -> list[list[int]]:
    # least-used speakers first so that everyone appears and recurs evenly
    counts = np.zeros(cfg.num_speakers)
    casts = []
    for _ in range(cfg.num_dialogues):
        order = np.lexsort((rng.random(cfg.num_speakers), counts))
        cast = [int(s) for s in order[: cfg.speakers_per_dialogue]]
        counts[cast] += 1
        casts.append(cast)
    return casts


def _dialogue_block(rng, cfg, cast):
    """Turns of one dialogue in time relative to its start."""
    n_turns = cfg.segments_per_speaker * len(cast)
    turns = [cast[k % len(cast)] for k in range(n_turns)]
    t = 0.0
    bounds = []
    for _ in turns:
        t += rng.uniform(0.1, 0.5)
        dur = rng.uniform(cfg.min_duration, cfg.max_duration)
        bounds.append((t, t + dur))
        t += dur
    length = t + rng.uniform(0.1, 0.5)
    cuts = []
    for k in range(1, n_turns):
        if cfg.synchronized:
            cuts.append(0.5 * (bounds[k - 1][1] + bounds[k][0]))
        else:
            # picture lags the speaker change, sometimes past mid-utterance
            start, end = bounds[k]
            cuts.append(start + rng.uniform(0.0, 0.8) * (end - start))
    return turns, bounds, [0.0] + cuts + [length]


def generate_synthetic_episode(config: SyntheticEpisodeConfig) -> SyntheticEpisode:
    cfg = config
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.within_std / np.sqrt(cfg.dim)
    spacing = cfg.separation * cfg.within_std
    names = [f"spk{i:02d}" for i in range(cfg.num_speakers)]
    centers = _centers(rng, cfg.num_speakers, cfg.dim, spacing)
    casts = _speaker_order(rng, cfg)
    blocks = [_dialogue_block(rng, cfg, cast) for cast in casts]

    covered = sum(e - s for _, bounds, _ in blocks for s, e in bounds)
    uncovered = covered * (1.0 - cfg.coverage) / cfg.coverage
    n_fillers = len(blocks) + 1
    per_filler = uncovered / n_fillers
    mean_dur = 0.5 * (cfg.min_duration + cfg.max_duration)
    pieces = int(round(per_filler / mean_dur)) if per_filler > 1e-12 else 0
    if per_filler > 1e-12:
        pieces = max(pieces, 1)

    shots: list[Shot] = []
    labels: list[int] = []
    segments: list[SpeechSegment] = []
    vectors: list[np.ndarray] = []
    reference: dict[str, str] = {}
    dialogues: list[PlantedDialogue] = []
    next_label = 0
    t = 0.0

    def add_shot(start, end, label):
        shots.append(Shot(len(shots), len(shots), len(shots), start, end))
        labels.append(label)

    def add_segment(start, end, speaker, offset):
        seg_id = f"seg{len(segments):04d}"
        segments.append(SpeechSegment(seg_id, start, end, "", names[speaker]))
        vectors.append(centers[speaker] + offset + sigma * rng.standard_normal(cfg.dim))
        reference[seg_id] = names[speaker]
        return seg_id

    def filler():
        nonlocal t, next_label
        gap = 0.2
        if pieces:
            dur = per_filler / pieces
            cursor = t + gap
            for _ in range(pieces):
                add_segment(cursor, cursor + dur, int(rng.integers(cfg.num_speakers)), 0.0)
                cursor += dur + gap
            length = cursor - t
        else:
            length = rng.uniform(2.0, 5.0)
        add_shot(t, t + length, next_label)
        next_label += 1
        t += length

    for d, (cast, (turns, bounds, cuts)) in enumerate(zip(casts, blocks)):
        filler()
        pair = (next_label, next_label + 1)
        next_label += 2
        offset = np.zeros(cfg.dim)
        if cfg.dialogue_shift > 0:
            direction = rng.standard_normal(cfg.dim)
            offset = direction / np.linalg.norm(direction) * cfg.dialogue_shift * cfg.within_std
        start_shot, start_time = len(shots), t
        seg_ids = [add_segment(t + s0, t + s1, spk, offset) for spk, (s0, s1) in zip(turns, bounds)]
        for k, spk in enumerate(turns):
            label = pair[cast.index(spk)] if cfg.synchronized else pair[k % 2]
            add_shot(t + cuts[k], t + cuts[k + 1], label)
        t += cuts[-1]
        dialogues.append(
            PlantedDialogue(
                dialogue_id=d,
                speakers=[names[s] for s in cast],
                labels=pair,
                start_shot=start_shot,
                end_shot=len(shots) - 1,
                start_time=start_time,
                end_time=t,
                segment_ids=seg_ids,
            )
        )
    filler()

    train_vectors, train_speakers = _training_set(rng, cfg, sigma, spacing)
    return SyntheticEpisode(
        config=cfg,
        shots=shots,
        shot_labels=labels,
        segments=segments,
        embeddings=EmbeddingSet([s.segment_id for s in segments], np.vstack(vectors)),
        train_vectors=train_vectors,
        train_speakers=train_speakers,
        reference=reference,
        dialogues=dialogues,
        speaker_centers=dict(zip(names, centers)),
    )


def _training_set(rng, cfg, sigma, spacing):
    if cfg.train_speakers < 1 or cfg.train_segments_per_speaker < 2:
        return np.zeros((0, cfg.dim)), []
    centers = rng.standard_normal((cfg.train_speakers, cfg.dim)) * spacing
    xs, ys = [], []
    for k in range(cfg.train_speakers):
        for _ in range(cfg.train_segments_per_speaker):
            xs.append(centers[k] + sigma * rng.standard_normal(cfg.dim))
            ys.append(f"train{k:03d}")
    return np.vstack(xs), ys


def nearest_centroid_accuracy(episode: SyntheticEpisode) -> float:
    names = list(episode.speaker_centers)
    c = np.vstack([episode.speaker_centers[n] for n in names])
    x = episode.embeddings.vectors
    d = ((x[:, None, :] - c[None]) ** 2).sum(-1)
    guess = [names[i] for i in d.argmin(axis=1)]
    truth = [episode.reference[s] for s in episode.embeddings.ids]
    return float(np.mean([g == t for g, t in zip(guess, truth)]))
