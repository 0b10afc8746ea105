"""Speech segments and their derivation from SRT subtitles."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional

log = logging.getLogger(__name__)

_TIMESTAMP = r"(\d{1,2}):(\d{2}):(\d{2})[,.](\d{1,3})"
_ARROW = re.compile(rf"^\s*{_TIMESTAMP}\s*-->\s*{_TIMESTAMP}\s*$")


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SpeechSegment:
    segment_id: str
    start_time: float
    end_time: float
    text: str = ""
    reference_speaker: Optional[str] = None

    def __post_init__(self):
        if not self.start_time < self.end_time:
            raise ValueError(f"segment {self.segment_id}: start must precede end")

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start_time + self.end_time)


def parse_timestamp(text: str, line: Optional[int] = None) -> float:
    m = re.fullmatch(_TIMESTAMP, text.strip())
    if not m:
        raise ParseError(f"malformed timestamp {text!r}", line)
    return _seconds(m.groups())


def _seconds(parts) -> float:
    h, m, s, ms = parts
    if int(m) >= 60 or int(s) >= 60:
        raise ValueError("minutes and seconds must be < 60")
    return int(h) * 3600 + int(m) * 60 + int(s) + int(ms.ljust(3, "0")) / 1000.0


def format_timestamp(seconds: float) -> str:
    total_ms = int(round(seconds * 1000))
    h, rem = divmod(total_ms, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d},{ms:03d}"


def _split_dialogue(block_id: str, start: float, end: float, lines: list[str]) -> list[SpeechSegment]:
    # dialogue-dash subtitles hold one utterance per line
    if len(lines) < 2 or not all(ln.lstrip().startswith("-") for ln in lines):
        return [SpeechSegment(block_id, start, end, "\n".join(lines))]
    weights = [len(ln.strip()) for ln in lines]
    total = sum(weights)
    out = []
    cursor = start
    acc = 0
    for k, (ln, w) in enumerate(zip(lines, weights)):
        acc += w
        stop = end if k == len(lines) - 1 else start + (end - start) * acc / total
        out.append(SpeechSegment(f"{block_id}.{k + 1}", cursor, stop, ln.strip().lstrip("-").strip()))
        cursor = stop
    return out


def parse_subtitles(text: str) -> list[SpeechSegment]:
    """Parse SRT text into speech segments.

    Subtitles whose lines all start with a dash are split into one segment
    per line, the duration shared in proportion to line lengths. A block
    overlapping the previous one is clipped to start where the previous ended.
    """
    lines = text.replace("\r\n", "\n").replace("\r", "\n").lstrip("﻿").split("\n")
    segments: list[SpeechSegment] = []
    i = 0
    n = len(lines)
    last_end = float("-inf")
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        index_line = i + 1
        block_id = lines[i].strip()
        if not block_id.isdigit():
            raise ParseError(f"expected a subtitle index, got {lines[i]!r}", index_line)
        i += 1
        if i >= n:
            raise ParseError("subtitle block ends before its timing line", index_line)
        timing_line = i + 1
        if "-->" not in lines[i]:
            raise ParseError("missing '-->' separator", timing_line)
        m = _ARROW.match(lines[i])
        if not m:
            raise ParseError(f"malformed timestamp in {lines[i].strip()!r}", timing_line)
        try:
            start = _seconds(m.groups()[:4])
            end = _seconds(m.groups()[4:])
        except ValueError as exc:
            raise ParseError(str(exc), timing_line) from None
        i += 1
        body = []
        while i < n and lines[i].strip():
            body.append(lines[i].rstrip())
            i += 1
        if start < last_end:
            log.warning("subtitle %s overlaps the previous one; clipping its start", block_id)
            start = last_end
        if end <= start:
            log.warning("subtitle %s is empty after clipping; dropped", block_id)
            continue
        segments.extend(_split_dialogue(block_id, start, end, body))
        last_end = end
    return segments


def write_srt(segments, handle) -> None:
    for k, seg in enumerate(segments, 1):
        handle.write(f"{k}\n{format_timestamp(seg.start_time)} --> {format_timestamp(seg.end_time)}\n")
        handle.write(f"{seg.text or '...'}\n\n")
