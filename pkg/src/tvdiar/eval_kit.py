"""Scoring: shot cut / shot similarity F1, DER and single-show DER."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class F1Report:
    precision: float
    recall: float
    f1: float
    n_ref: int = 0
    n_hyp: int = 0
    n_matched: int = 0

    @classmethod
    def from_pr(cls, precision: float, recall: float, **counts) -> "F1Report":
        total = precision + recall
        f1 = 2 * precision * recall / total if total > 0 else 0.0
        return cls(precision, recall, f1, **counts)


@dataclass
class DerReport:
    total: float
    confusion: float
    der: float
    mapping: dict = field(default_factory=dict)

    @property
    def correct(self) -> float:
        return self.total - self.confusion


def _labels(d) -> Mapping:
    return d.labels if hasattr(d, "labels") else d


def der(reference, hypothesis, durations: Mapping[str, float]) -> DerReport:
    """Speaker confusion time over scored time under the best one-to-one label mapping.

    Only the segments labeled by the hypothesis are scored; each must also
    carry a reference label.
    """
    ref = _labels(reference)
    hyp = _labels(hypothesis)
    segs = [s for s in hyp if durations.get(s, 0.0) > 0]
    missing = [s for s in segs if s not in ref]
    if missing:
        raise EvaluationError(f"hypothesis labels segments absent from the reference: {missing[:5]}")
    total = float(sum(durations[s] for s in segs))
    if total <= 0:
        raise EvaluationError("empty scored region")
    ref_names = sorted({ref[s] for s in segs}, key=str)
    hyp_names = sorted({hyp[s] for s in segs}, key=str)
    ri = {r: k for k, r in enumerate(ref_names)}
    hi = {h: k for k, h in enumerate(hyp_names)}
    overlap = np.zeros((len(hyp_names), len(ref_names)))
    for s in segs:
        overlap[hi[hyp[s]], ri[ref[s]]] += durations[s]
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    mapping = {hyp_names[r]: ref_names[c] for r, c in zip(rows, cols) if overlap[r, c] > 0}
    # summing the off-assignment cells keeps a perfect match at exactly 0
    off = np.ones_like(overlap, dtype=bool)
    off[rows, cols] = False
    confusion = float(overlap[off].sum())
    return DerReport(total, confusion, confusion / total, mapping)


def single_show_der(reports: Sequence) -> float:
    """Duration-weighted mean of per-dialogue DER.

    Accepts DerReport objects or ``(der, duration)`` pairs.
    """
    pairs = [(r.der, r.total) if isinstance(r, DerReport) else (float(r[0]), float(r[1])) for r in reports]
    total = sum(d for _, d in pairs)
    if not pairs or total <= 0:
        raise EvaluationError("zero total duration")
    return sum(e * d for e, d in pairs) / total


def per_dialogue_der(reference, hypothesis, durations, dialogues: Mapping[object, Sequence[str]]) -> dict:
    hyp = _labels(hypothesis)
    out = {}
    for key, segs in dialogues.items():
        sub = {s: hyp[s] for s in segs if s in hyp}
        if sub and sum(durations.get(s, 0.0) for s in sub) > 0:
            out[key] = der(reference, sub, durations)
    return out


def f1_cuts(reference: Sequence[int], hypothesis: Sequence[int], tolerance: int = 1) -> F1Report:
    """Greedy one-to-one matching of cuts within ``tolerance`` frames."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    ref = sorted(reference)
    unmatched = set(range(len(ref)))
    matched = 0
    for h in sorted(hypothesis):
        best = None
        for k in unmatched:
            gap = abs(ref[k] - h)
            if gap <= tolerance and (best is None or (gap, ref[k]) < (abs(ref[best] - h), ref[best])):
                best = k
        if best is not None:
            unmatched.discard(best)
            matched += 1
    precision = matched / len(hypothesis) if hypothesis else 0.0
    recall = matched / len(ref) if ref else 0.0
    if not ref and not hypothesis:
        precision = recall = 1.0
    return F1Report.from_pr(precision, recall, n_ref=len(ref), n_hyp=len(hypothesis), n_matched=matched)


def similar_lists(labels: Sequence) -> list[set[int]]:
    groups: dict = {}
    for k, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(k)
    return [groups[lab] - {k} for k, lab in enumerate(labels)]


def f1_similarity(reference: Sequence, hypothesis: Sequence) -> F1Report:
    """Per-shot similar-shot lists compared by non-empty intersection."""
    if len(reference) != len(hypothesis):
        raise EvaluationError("labelings cover different shot inventories; align them first")
    ref = similar_lists(reference)
    hyp = similar_lists(hypothesis)
    ref_shots = [k for k, r in enumerate(ref) if r]
    hyp_shots = [k for k, h in enumerate(hyp) if h]
    if not ref_shots and not hyp_shots:
        raise EvaluationError("no shot has a similar shot on either side")
    recall = sum(1 for k in ref_shots if ref[k] & hyp[k]) / len(ref_shots) if ref_shots else 0.0
    precision = sum(1 for k in hyp_shots if hyp[k] & ref[k]) / len(hyp_shots) if hyp_shots else 0.0
    return F1Report.from_pr(precision, recall, n_ref=len(ref_shots), n_hyp=len(hyp_shots))


def align_shots(reference_shots, hypothesis_shots) -> list[int]:
    """Index of the hypothesis shot overlapping each reference shot the most (in frames)."""
    out = []
    for r in reference_shots:
        best, best_overlap = 0, -1
        for k, h in enumerate(hypothesis_shots):
            ov = min(r.end_frame, h.end_frame) - max(r.start_frame, h.start_frame) + 1
            if ov > best_overlap:
                best, best_overlap = k, ov
        out.append(best)
    return out


def aligned_labels(reference_shots, hypothesis_shots, hypothesis_labels) -> list:
    return [hypothesis_labels[k] for k in align_shots(reference_shots, hypothesis_shots)]


def speaker_count_report(systems: Mapping[str, object], reference=None, segment_ids=None) -> list[dict]:
    """Distinct hypothesized speakers per system over the scored segments."""
    rows = []
    scope = set(segment_ids) if segment_ids is not None else None
    if reference is not None:
        ref = _labels(reference)
        keys = scope if scope is not None else set().union(*(set(_labels(h)) for h in systems.values()) or [set()])
        rows.append({"system": "truth", "speakers": len({ref[s] for s in keys if s in ref})})
    for name, hyp in systems.items():
        labels = _labels(hyp)
        vals = {lab for s, lab in labels.items() if scope is None or s in scope}
        rows.append({"system": name, "speakers": len(vals)})
    return rows


def format_table(rows: Sequence[Mapping], columns: Optional[Sequence[str]] = None, digits: int = 2) -> str:
    """Aligned-column text rendering of a list of records."""
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())

    def cell(v):
        if isinstance(v, float):
            return f"{v:.{digits}f}"
        return "" if v is None else str(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
