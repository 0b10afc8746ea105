"""Readers and writers for the on-disk formats.

Structured records are JSON lines. Tabular data (segments, embeddings,
histograms) is CSV with an optional header row. Diarizations are RTTM.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .embedding_space import EmbeddingSet
from .pattern_miner import AlternationRun, DialoguePattern, PatternSet, ShotSequence
from .segments import SpeechSegment, parse_subtitles
from .shot_analysis import BlockHistogram, FrameDescriptor, Shot, ShotConfig, compute_block_histograms


class FormatError(ValueError):
    pass


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _csv_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows


def _drop_header(rows: list[list[str]], numeric_col: int) -> list[list[str]]:
    if rows and len(rows[0]) > numeric_col and not _is_number(rows[0][numeric_col]):
        return rows[1:]
    return rows


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{n}: {exc}") from None
    return out


# frames


def read_frame_dir(directory, config: ShotConfig = ShotConfig(), fps: float = 25.0) -> list[FrameDescriptor]:
    """Frames from ``NNNNNN.ppm`` files; the numeric stem gives the frame index."""
    paths = sorted(Path(directory).glob("*.ppm"), key=lambda p: int(p.stem))
    if not paths:
        raise FormatError(f"no .ppm frames in {directory}")
    frames = []
    for p in paths:
        with Image.open(p) as img:
            pixels = np.asarray(img.convert("RGB"))
        idx = int(p.stem)
        frames.append(FrameDescriptor(idx, idx / fps, compute_block_histograms(pixels, config)))
    return frames


def write_ppm(path, pixels: np.ndarray) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), "RGB").save(path, format="PPM")


def write_histogram_csv(path, frames: Sequence[FrameDescriptor]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "timestamp", "block_index", "bin_index", "mass"])
        for f in frames:
            for b, row in enumerate(f.histogram.masses):
                for k in np.flatnonzero(row):
                    w.writerow([f.frame_index, repr(f.timestamp), b, int(k), repr(float(row[k]))])


def read_histogram_csv(path, config: ShotConfig = ShotConfig()) -> list[FrameDescriptor]:
    """Sparse histogram records; missing (block, bin) entries are zero."""
    rows = _drop_header(_csv_rows(path), 0)
    frames: dict[int, tuple[float, np.ndarray]] = {}
    for n, r in enumerate(rows, 1):
        try:
            fi, ts, b, k, mass = int(r[0]), float(r[1]), int(r[2]), int(r[3]), float(r[4])
        except (ValueError, IndexError):
            raise FormatError(f"{path}: bad histogram record {r}") from None
        if not (0 <= b < config.n_blocks and 0 <= k < config.n_bins):
            raise FormatError(f"{path}: block/bin out of range in {r}")
        if fi not in frames:
            frames[fi] = (ts, np.zeros((config.n_blocks, config.n_bins)))
        frames[fi][1][b, k] = mass
    grid = (config.block_rows, config.block_cols)
    bins = (config.bins_h, config.bins_s, config.bins_v)
    return [FrameDescriptor(fi, ts, BlockHistogram(m, grid, bins)) for fi, (ts, m) in sorted(frames.items())]


# shots and patterns


def shot_records(shots: Sequence[Shot], labels: Sequence) -> list[dict]:
    return [
        {
            "id": s.id,
            "start_frame": s.start_frame,
            "end_frame": s.end_frame,
            "start_time": s.start_time,
            "end_time": s.end_time,
            "label": lab,
        }
        for s, lab in zip(shots, labels)
    ]


def write_shots(path, shots: Sequence[Shot], labels: Sequence) -> None:
    write_jsonl(path, shot_records(shots, labels))


def read_shots(path) -> tuple[list[Shot], list]:
    shots, labels = [], []
    for rec in read_jsonl(path):
        try:
            shots.append(
                Shot(int(rec["id"]), int(rec["start_frame"]), int(rec["end_frame"]), float(rec["start_time"]), float(rec["end_time"]))
            )
        except KeyError as exc:
            raise FormatError(f"{path}: shot record lacks {exc}") from None
        labels.append(rec.get("label", rec["id"]))
    return shots, labels


def pattern_records(ps: PatternSet) -> list[dict]:
    out = []
    for k, p in enumerate(ps.patterns):
        occ = []
        for run in p.occurrences:
            start, end = p.span(ps.sequence, run)
            occ.append({"start_shot": run.start_pos, "end_shot": run.end_pos, "start_time": start, "end_time": end})
        out.append(
            {
                "pattern_id": k,
                "labels": sorted(p.label_set, key=str),
                "occurrences": occ,
                "segment_ids": sorted(p.utterances),
                "extended_only": p.extended,
            }
        )
    return out


def write_patterns(path, ps: PatternSet) -> None:
    write_jsonl(path, pattern_records(ps))


def read_patterns(path, sequence: Optional[ShotSequence] = None) -> PatternSet:
    """Rebuild a PatternSet; without ``sequence`` spans come from the records."""
    records = read_jsonl(path)
    if sequence is None:
        n = 1 + max((o["end_shot"] for r in records for o in r["occurrences"]), default=-1)
        spans = [(math.nan, math.nan)] * n
        labels: list = [None] * n
        for r in records:
            for o in r["occurrences"]:
                spans[o["start_shot"]] = (o["start_time"], spans[o["start_shot"]][1])
                spans[o["end_shot"]] = (spans[o["end_shot"]][0], o["end_time"])
        sequence = ShotSequence(tuple(labels), tuple(spans))
    patterns = []
    for r in records:
        pair = frozenset(r["labels"])
        runs = [AlternationRun(o["start_shot"], o["end_shot"], pair) for o in r["occurrences"]]
        patterns.append(DialoguePattern(pair, runs, set(r.get("segment_ids", [])), bool(r.get("extended_only", False))))
    return PatternSet(patterns, sequence)


def dialogue_spans(path) -> dict[int, list[tuple[float, float]]]:
    return {
        r["pattern_id"]: [(o["start_time"], o["end_time"]) for o in r["occurrences"]] for r in read_jsonl(path)
    }


# segments and embeddings


def read_segments(path) -> list[SpeechSegment]:
    """SRT (by extension) or CSV ``segment_id,start,end[,speaker]``."""
    path = Path(path)
    if path.suffix.lower() == ".srt":
        return parse_subtitles(path.read_text(encoding="utf-8-sig"))
    rows = _drop_header(_csv_rows(path), 1)
    out = []
    for r in rows:
        try:
            speaker = r[3] if len(r) > 3 and r[3] != "" else None
            out.append(SpeechSegment(r[0], float(r[1]), float(r[2]), "", speaker))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: bad segment record {r}: {exc}") from None
    return out


def write_segments(path, segments: Sequence[SpeechSegment], with_speaker: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id", "start", "end"] + (["speaker"] if with_speaker else []))
        for s in segments:
            row = [s.segment_id, repr(s.start_time), repr(s.end_time)]
            if with_speaker:
                row.append(s.reference_speaker or "")
            w.writerow(row)


def read_embeddings(path) -> EmbeddingSet:
    rows = _drop_header(_csv_rows(path), 1)
    if not rows:
        raise FormatError(f"{path}: no embeddings")
    dims = {len(r) - 1 for r in rows}
    if len(dims) != 1:
        raise FormatError(f"{path}: embeddings of differing dimensions")
    try:
        vectors = np.array([[float(v) for v in r[1:]] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return EmbeddingSet([r[0] for r in rows], vectors)


def write_embeddings(path, embeddings: EmbeddingSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id"] + [f"v{k + 1}" for k in range(embeddings.dim)])
        for sid, v in zip(embeddings.ids, embeddings.vectors):
            w.writerow([sid] + [repr(float(x)) for x in v])


def read_training(path) -> tuple[np.ndarray, list[str]]:
    """CSV ``segment_id,speaker_label,v1..vd``."""
    rows = _drop_header(_csv_rows(path), 2)
    if not rows:
        raise FormatError(f"{path}: empty training file")
    try:
        vectors = np.array([[float(v) for v in r[2:]] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return vectors, [r[1] for r in rows]


def write_training(path, vectors: np.ndarray, speakers: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id", "speaker_label"] + [f"v{k + 1}" for k in range(vectors.shape[1])])
        for k, (v, spk) in enumerate(zip(vectors, speakers)):
            w.writerow([f"train{k:05d}", spk] + [repr(float(x)) for x in v])


# diarizations


def write_rttm(path, labels: dict, segments: Sequence[SpeechSegment], recording: str = "episode") -> None:
    with open(path, "w") as fh:
        for s in sorted(segments, key=lambda s: s.start_time):
            if s.segment_id in labels:
                fh.write(
                    f"SPEAKER {recording} 1 {s.start_time:.3f} {s.duration:.3f} <NA> <NA> {labels[s.segment_id]} <NA>\n"
                )


def read_rttm(path) -> list[tuple[float, float, str]]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] != "SPEAKER":
                continue
            if len(parts) < 8:
                raise FormatError(f"{path}:{n}: truncated RTTM line")
            out.append((float(parts[3]), float(parts[4]), parts[7]))
    return out


def read_labeled_turns(path) -> list[tuple[float, float, str]]:
    """(onset, duration, speaker) from an RTTM file or a segment CSV with speakers."""
    path = Path(path)
    if path.suffix.lower() == ".rttm":
        return read_rttm(path)
    turns = []
    for s in read_segments(path):
        if s.reference_speaker is None:
            raise FormatError(f"{path}: segment {s.segment_id} has no speaker")
        turns.append((s.start_time, s.duration, s.reference_speaker))
    return turns


def turn_key(onset: float, duration: float) -> str:
    return f"{onset:.3f}+{duration:.3f}"


def write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj, key=str)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def write_episode(directory, episode) -> dict[str, str]:
    """Write a synthetic episode in the standard input formats."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "shots": out / "shots.jsonl",
        "segments": out / "segments.csv",
        "embeddings": out / "embeddings.csv",
        "train": out / "train.csv",
        "reference": out / "reference.rttm",
        "dialogues": out / "dialogues.jsonl",
        "config": out / "config.json",
    }
    write_shots(paths["shots"], episode.shots, episode.shot_labels)
    write_segments(paths["segments"], episode.segments)
    write_embeddings(paths["embeddings"], episode.embeddings)
    if len(episode.train_speakers):
        write_training(paths["train"], episode.train_vectors, episode.train_speakers)
    else:
        del paths["train"]
    write_rttm(paths["reference"], episode.reference, episode.segments)
    write_jsonl(
        paths["dialogues"],
        (
            {
                "dialogue_id": d.dialogue_id,
                "speakers": d.speakers,
                "labels": list(d.labels),
                "start_shot": d.start_shot,
                "end_shot": d.end_shot,
                "start_time": d.start_time,
                "end_time": d.end_time,
                "segment_ids": d.segment_ids,
            }
            for d in episode.dialogues
        ),
    )
    write_json(paths["config"], episode.config.to_dict())
    return {k: str(v) for k, v in paths.items()}
