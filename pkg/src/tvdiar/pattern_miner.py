"""Dialogue pattern mining over shot-label strings.

A dialogue pattern is a pair of shot labels that alternate, ``a b a`` or
longer (``a (b a)+``). The extended rule also accepts isolated ``a b``
alternations. Patterns sharing a label can be merged, since a speaker filmed
from two cameras yields ``a b a c a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

from scipy.cluster.hierarchy import DisjointSet

Label = Hashable


@dataclass(frozen=True)
class ShotSequence:
    labels: tuple
    spans: tuple  # (start_time, end_time) per shot

    def __post_init__(self):
        if len(self.labels) != len(self.spans):
            raise ValueError("labels and spans must have the same length")

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_labels(cls, labels: Iterable[Label], spans: Optional[Iterable] = None) -> "ShotSequence":
        labels = tuple(labels)
        if spans is None:
            spans = tuple((float(i), float(i + 1)) for i in range(len(labels)))
        return cls(labels, tuple(tuple(s) for s in spans))

    @classmethod
    def from_shots(cls, shots, labels: Sequence[Label]) -> "ShotSequence":
        return cls(tuple(labels), tuple((s.start_time, s.end_time) for s in shots))


@dataclass(frozen=True, order=True)
class AlternationRun:
    start_pos: int
    end_pos: int
    pair: frozenset = field(compare=False)

    @property
    def length(self) -> int:
        return self.end_pos - self.start_pos + 1


@dataclass
class DialoguePattern:
    label_set: frozenset
    occurrences: list[AlternationRun]
    utterances: set = field(default_factory=set)
    extended: bool = False  # True when found only thanks to length-2 runs

    def span(self, seq: ShotSequence, run: AlternationRun) -> tuple[float, float]:
        return seq.spans[run.start_pos][0], seq.spans[run.end_pos][1]


@dataclass
class PatternSet:
    patterns: list[DialoguePattern]
    sequence: ShotSequence

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def label_pairs(self) -> set[frozenset]:
        return {run.pair for p in self.patterns for run in p.occurrences}

    def occurrence_spans(self, pattern: DialoguePattern) -> list[tuple[float, float]]:
        return [pattern.span(self.sequence, run) for run in pattern.occurrences]

    def segment_to_pattern(self) -> dict:
        return {seg: k for k, p in enumerate(self.patterns) for seg in p.utterances}


def scan_alternations(seq: ShotSequence | Sequence[Label], min_len: int = 3) -> list[AlternationRun]:
    """All maximal runs of two strictly alternating labels of length >= ``min_len``.

    Every pair of adjacent distinct labels belongs to exactly one maximal run;
    two runs of different pairs may share one boundary shot.
    """
    if min_len not in (2, 3):
        raise ValueError("min_len must be 2 or 3")
    labels = seq.labels if isinstance(seq, ShotSequence) else tuple(seq)
    runs = []
    i, k = 0, len(labels)
    while i < k - 1:
        if labels[i] == labels[i + 1]:
            i += 1
            continue
        start = i
        # extend while the next step keeps alternating over the same pair
        while i + 2 < k and labels[i + 2] == labels[i]:
            i += 1
        end = i + 1
        if end - start + 1 >= min_len:
            runs.append(AlternationRun(start, end, frozenset((labels[start], labels[start + 1]))))
        # the boundary shot may open a run with another label
        i = end
    return runs


def extract_patterns(seq: ShotSequence, extended: bool = False) -> PatternSet:
    """One pattern per label pair owning at least one qualifying run.

    With ``extended`` length-2 alternations count as occurrences too, which
    may create patterns the base rule does not find.
    """
    runs = scan_alternations(seq, 2 if extended else 3)
    by_pair: dict[frozenset, list[AlternationRun]] = {}
    for run in runs:
        by_pair.setdefault(run.pair, []).append(run)
    patterns = []
    for pair, occ in by_pair.items():
        patterns.append(
            DialoguePattern(
                label_set=pair,
                occurrences=sorted(occ),
                extended=all(r.length < 3 for r in occ),
            )
        )
    patterns.sort(key=lambda p: p.occurrences[0].start_pos)
    return PatternSet(patterns, seq)


def merge_patterns(ps: PatternSet) -> PatternSet:
    """Union patterns that share at least one label (transitively)."""
    n = len(ps.patterns)
    groups = DisjointSet(range(n))
    owner: dict = {}
    for k, p in enumerate(ps.patterns):
        for label in p.label_set:
            if label in owner:
                groups.merge(owner[label], k)
            else:
                owner[label] = k
    merged = []
    for subset in groups.subsets():
        members = [ps.patterns[k] for k in sorted(subset)]
        merged.append(
            DialoguePattern(
                label_set=frozenset().union(*(p.label_set for p in members)),
                occurrences=sorted(r for p in members for r in p.occurrences),
                utterances=set().union(*(p.utterances for p in members)),
                extended=all(p.extended for p in members),
            )
        )
    merged.sort(key=lambda p: p.occurrences[0].start_pos)
    return PatternSet(merged, ps.sequence)


def assign_utterances(ps: PatternSet, segments: Sequence) -> PatternSet:
    """Attach each segment to the pattern whose occurrence contains its midpoint.

    Occurrence spans are half-open ``[start, end)``. On overlap the occurrence
    starting first wins. Returns a new PatternSet; existing assignments are
    replaced.
    """
    spans = []
    for k, p in enumerate(ps.patterns):
        for run in p.occurrences:
            start, end = p.span(ps.sequence, run)
            spans.append((start, end, run.start_pos, k))
    spans.sort()
    assigned: list[set] = [set() for _ in ps.patterns]
    for seg in segments:
        mid = 0.5 * (seg.start_time + seg.end_time)
        for start, end, _, k in spans:
            if start > mid:
                break
            if start <= mid < end:
                assigned[k].add(seg.segment_id)
                break
    patterns = [
        DialoguePattern(p.label_set, list(p.occurrences), assigned[k], p.extended)
        for k, p in enumerate(ps.patterns)
    ]
    return PatternSet(patterns, ps.sequence)


@dataclass
class CoverageReport:
    coverage: float
    speech_per_pattern: float
    speakers_per_pattern: Optional[float]
    n_patterns: int
    covered_speech: float
    total_speech: float

    def as_dict(self) -> dict:
        return {
            "coverage_pct": 100.0 * self.coverage,
            "speech_per_pattern_s": self.speech_per_pattern,
            "speakers_per_pattern": self.speakers_per_pattern,
            "n_patterns": self.n_patterns,
            "covered_speech_s": self.covered_speech,
            "total_speech_s": self.total_speech,
        }


def coverage_stats(ps: PatternSet, segments: Sequence, reference_speakers: Optional[dict] = None) -> CoverageReport:
    durations = {s.segment_id: s.end_time - s.start_time for s in segments}
    total = sum(durations.values())
    per_pattern = [sum(durations[u] for u in p.utterances if u in durations) for p in ps.patterns]
    covered = sum(per_pattern)
    n = len(ps.patterns)
    speakers = None
    if reference_speakers is not None and n:
        speakers = sum(
            len({reference_speakers[u] for u in p.utterances if u in reference_speakers}) for p in ps.patterns
        ) / n
    return CoverageReport(
        coverage=covered / total if total > 0 else 0.0,
        speech_per_pattern=covered / n if n else 0.0,
        speakers_per_pattern=speakers,
        n_patterns=n,
        covered_speech=covered,
        total_speech=total,
    )
