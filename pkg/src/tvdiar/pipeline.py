"""Two-step speaker diarization driven by dialogue patterns.

Utterances covered by a dialogue pattern are first clustered within that
dialogue. Each resulting local speaker is then represented by the mean of its
embeddings and clustered across dialogues, optionally forbidding the merge of
speakers found distinct inside one dialogue.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import constrained_hac as hac
from .embedding_space import (
    EmbeddingSet,
    WithinClassCovariance,
    compute_within_class_cov,
    unit_normalize,
    whitening_matrix,
)
from .pattern_miner import (
    PatternSet,
    ShotSequence,
    assign_utterances,
    coverage_stats,
    extract_patterns,
    merge_patterns,
)
from .segments import SpeechSegment
from .shot_analysis import Shot

log = logging.getLogger(__name__)

MODES = ("naive", "local", "2s", "cst2s")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class MissingEmbedding(KeyError):
    def __init__(self, segment_id):
        self.segment_id = segment_id
        super().__init__(f"no embedding for segment {segment_id!r}")


@dataclass
class LocalSpeaker:
    dialogue_id: int
    index: int
    members: list[str]
    representative: np.ndarray = field(repr=False)

    @property
    def id(self) -> str:
        return f"d{self.dialogue_id}s{self.index}"


@dataclass
class Diarization:
    labels: dict[str, str]
    mode: str = "reference"
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    @property
    def speakers(self) -> set[str]:
        return set(self.labels.values())

    def restricted(self, segment_ids) -> "Diarization":
        keep = set(segment_ids)
        return Diarization({s: l for s, l in self.labels.items() if s in keep}, self.mode, dict(self.metadata))


def _lookup(embeddings: Mapping, segment_ids: Sequence[str]) -> np.ndarray:
    rows = []
    for seg in segment_ids:
        if seg not in embeddings:
            raise MissingEmbedding(seg)
        rows.append(np.asarray(embeddings[seg], dtype=float))
    return np.vstack(rows)


def local_diarize(segment_ids: Sequence[str], embeddings: Mapping, whitener: Optional[np.ndarray] = None) -> dict[str, int]:
    """Cluster one dialogue's utterances; returns the local cluster of each segment."""
    segment_ids = list(segment_ids)
    if not segment_ids:
        return {}
    x = _lookup(embeddings, segment_ids)
    if whitener is not None:
        x = x @ whitener
    if len(segment_ids) == 1:
        return {segment_ids[0]: 0}
    _, partition = hac.cluster(x)
    return dict(zip(segment_ids, partition.labels))


def naive_assign(pattern, patterns: PatternSet, segments: Sequence[SpeechSegment]) -> dict[str, str]:
    """Label each of the pattern's segments with the shot label at its midpoint."""
    seq = patterns.sequence
    occ_shots = [k for run in pattern.occurrences for k in range(run.start_pos, run.end_pos + 1)]
    out = {}
    for seg in segments:
        if seg.segment_id not in pattern.utterances:
            continue
        mid = seg.midpoint
        inside = [k for k in occ_shots if seq.spans[k][0] <= mid < seq.spans[k][1]]
        if inside:
            k = inside[0]
        else:
            k = min(occ_shots, key=lambda j: min(abs(mid - seq.spans[j][0]), abs(mid - seq.spans[j][1])))
        out[seg.segment_id] = str(seq.labels[k])
    return out


def build_global_instances(
    local_partitions: Mapping[int, Mapping[str, int]], embeddings: Mapping, normalize: bool = False
) -> list[LocalSpeaker]:
    """One instance per local cluster, represented by the mean member embedding."""
    seen: set[str] = set()
    speakers = []
    for dialogue_id in sorted(local_partitions):
        part = local_partitions[dialogue_id]
        overlap = seen.intersection(part)
        if overlap:
            raise ValueError(f"segments {sorted(overlap)} belong to several dialogues")
        seen.update(part)
        groups: dict[int, list[str]] = {}
        for seg, k in part.items():
            groups.setdefault(k, []).append(seg)
        for k in sorted(groups):
            members = groups[k]
            mean = _lookup(embeddings, members).mean(axis=0)
            if normalize:
                mean = unit_normalize(mean)
            speakers.append(LocalSpeaker(dialogue_id, k, members, mean))
    return speakers


def derive_constraints(local_speakers: Sequence[LocalSpeaker]) -> set[tuple[int, int]]:
    """Cannot-link every pair of local speakers from the same dialogue (by list index)."""
    out = set()
    for i, a in enumerate(local_speakers):
        for j in range(i + 1, len(local_speakers)):
            if local_speakers[j].dialogue_id == a.dialogue_id:
                out.add((i, j))
    return out


@dataclass
class GlobalResult:
    diarization: Diarization
    forest: hac.DendrogramForest
    partition: hac.Partition
    constraints: set


def global_diarize(
    local_speakers: Sequence[LocalSpeaker],
    constraints=None,
    constrained: bool = True,
    whitener: Optional[np.ndarray] = None,
) -> GlobalResult:
    if constraints is None:
        constraints = derive_constraints(local_speakers)
    used = set(constraints) if constrained else set()
    mode = "cst2s" if constrained else "2s"
    if not local_speakers:
        forest = hac.DendrogramForest(0, [])
        return GlobalResult(Diarization({}, mode), forest, hac.Partition([]), used)
    x = np.vstack([s.representative for s in local_speakers])
    if whitener is not None:
        x = x @ whitener
    forest = hac.agglomerate(x, used, leaf_ids=[s.id for s in local_speakers])
    partition = hac.cut_forest(forest, hac.pairwise_distances(x))
    labels = {}
    for spk, cluster in zip(local_speakers, partition.labels):
        for seg in spk.members:
            labels[seg] = f"S{cluster}"
    return GlobalResult(Diarization(labels, mode), forest, partition, used)


@dataclass
class PipelineConfig:
    mode: str = "cst2s"
    extended: bool = False
    merge: bool = True
    normalize: bool = False
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class PipelineResult:
    config: PipelineConfig
    patterns: PatternSet
    diarization: Diarization
    local_partitions: dict[int, dict[str, int]]
    local_speakers: list[LocalSpeaker]
    global_result: Optional[GlobalResult]
    coverage: object
    manifest: dict

    def dialogue_segments(self) -> dict[int, list[str]]:
        return {k: sorted(p.utterances) for k, p in enumerate(self.patterns.patterns) if p.utterances}


def resolve_covariance(
    dim: int,
    training: Optional[tuple[np.ndarray, Sequence]] = None,
    epsilon: Optional[float] = None,
) -> WithinClassCovariance:
    if training is None or len(training[1]) == 0:
        return WithinClassCovariance.identity(dim)
    vectors, speakers = training
    w = compute_within_class_cov(vectors, speakers, epsilon)
    if np.trace(w.matrix) == 0 and w.epsilon == 0:
        log.warning("training set has no within-speaker variance; using the identity metric")
        return WithinClassCovariance.identity(dim)
    return w


def run_pipeline(
    shots: Sequence[Shot],
    shot_labels: Sequence,
    segments: Sequence[SpeechSegment],
    embeddings: EmbeddingSet,
    config: PipelineConfig = PipelineConfig(),
    training: Optional[tuple[np.ndarray, Sequence]] = None,
) -> PipelineResult:
    """Patterns, local clustering and the global step for one episode."""
    try:
        seq = ShotSequence.from_shots(shots, shot_labels)
        patterns = extract_patterns(seq, extended=config.extended)
        if config.merge:
            patterns = merge_patterns(patterns)
        patterns = assign_utterances(patterns, segments)
        stats = coverage_stats(patterns, segments, _reference(segments))
    except Exception as exc:
        raise PipelineError("patterns", str(exc)) from exc

    emb = embeddings.normalized() if config.normalize else embeddings
    vectors = emb.as_dict()
    if training is not None and config.normalize and len(training[1]):
        training = (unit_normalize(training[0]), training[1])
    try:
        w = resolve_covariance(emb.dim, training, config.epsilon)
        whitener = whitening_matrix(w)
    except Exception as exc:
        raise PipelineError("covariance", str(exc)) from exc

    order = {s.segment_id: s.start_time for s in segments}
    dialogue_segs = {
        k: sorted(p.utterances, key=lambda s: (order[s], s)) for k, p in enumerate(patterns.patterns) if p.utterances
    }

    local_partitions: dict[int, dict[str, int]] = {}
    local_speakers: list[LocalSpeaker] = []
    global_result = None
    if config.mode == "naive":
        labels = {}
        for k, segs in dialogue_segs.items():
            for seg, lab in naive_assign(patterns.patterns[k], patterns, segments).items():
                labels[seg] = f"d{k}_{lab}"
        diarization = Diarization(labels, "naive")
    else:
        for k, segs in dialogue_segs.items():
            try:
                local_partitions[k] = local_diarize(segs, vectors, whitener)
            except MissingEmbedding as exc:
                raise PipelineError("local", f"dialogue {k}: {exc.args[0]}") from exc
        local_speakers = build_global_instances(local_partitions, vectors, config.normalize)
        if config.mode == "local":
            labels = {seg: spk.id for spk in local_speakers for seg in spk.members}
            diarization = Diarization(labels, "local")
        else:
            global_result = global_diarize(local_speakers, None, config.mode == "cst2s", whitener)
            diarization = global_result.diarization

    manifest = {
        "mode": config.mode,
        "extended": config.extended,
        "merge": config.merge,
        "normalize": config.normalize,
        "covariance": {"source": w.source, "epsilon": w.epsilon, "dim": w.dim},
        "representative": "mean of member embeddings" + (", unit-normalized" if config.normalize else ""),
        "n_shots": len(shots),
        "n_segments": len(segments),
        "n_patterns": len(patterns),
        "n_dialogues_with_speech": len(dialogue_segs),
        "n_local_speakers": len(local_speakers),
        "n_trees": global_result.forest.n_trees if global_result else None,
        "n_speakers": len(diarization.speakers),
        "pattern_stats": stats.as_dict(),
    }
    diarization.metadata.update(manifest)
    return PipelineResult(
        config, patterns, diarization, local_partitions, local_speakers, global_result, stats, manifest
    )


def _reference(segments: Sequence[SpeechSegment]) -> Optional[dict]:
    ref = {s.segment_id: s.reference_speaker for s in segments if s.reference_speaker is not None}
    return ref or None
