"""Exact time representation and validated interval timelines.

All times are integer ticks of 100 microseconds. Seconds only appear at
I/O boundaries (see :mod:`emodiar.annotation_io`). Segments are half-open
``[start, end)`` and the neutral state is the absence of any segment.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Iterable, NamedTuple, Optional, Union

from .errors import (
    DegenerateSegment,
    DurationMismatch,
    EmptyTimelineDuration,
    InvalidConfidence,
    OutOfRange,
    OverlapInReference,
    UnknownLabel,
)

TICKS_PER_SECOND = 10_000

Seconds = Union[int, float, str, Decimal]


def to_ticks(seconds: Seconds) -> int:
    """Convert seconds to the nearest tick (ties to even).

    Floats go through their shortest repr so that ``0.1`` maps to exactly
    1000 ticks rather than to whatever its binary expansion rounds to.
    """
    if isinstance(seconds, float):
        if not math.isfinite(seconds):
            raise ValueError(f"non-finite time value: {seconds!r}")
        seconds = repr(seconds)
    try:
        value = Decimal(seconds) if not isinstance(seconds, Decimal) else seconds
        scaled = value.scaleb(4).quantize(Decimal(1), rounding=ROUND_HALF_EVEN)
    except InvalidOperation as exc:
        raise ValueError(f"not a time value: {seconds!r}") from exc
    return int(scaled)


def to_seconds(ticks: int) -> float:
    return ticks / TICKS_PER_SECOND


def format_seconds(ticks: int) -> str:
    """Fixed 4-decimal rendering; lossless at tick resolution."""
    sign = "-" if ticks < 0 else ""
    whole, frac = divmod(abs(ticks), TICKS_PER_SECOND)
    return f"{sign}{whole}.{frac:04d}"


class EmotionLabel(str, enum.Enum):
    HAPPY = "happy"
    SAD = "sad"
    ANGRY = "angry"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "EmotionLabel":
        try:
            return cls(name)
        except ValueError:
            raise UnknownLabel(f"unknown emotion label {name!r}") from None


#: Fixed class order used for posteriors and rating tables; ``None`` is null.
CLASS_ORDER: tuple[Optional[EmotionLabel], ...] = (
    EmotionLabel.HAPPY, EmotionLabel.SAD, EmotionLabel.ANGRY, None)

NULL_NAME = "null"


def label_name(label: Optional[EmotionLabel]) -> str:
    return NULL_NAME if label is None else label.value


class Kind(str, enum.Enum):
    REFERENCE = "reference"
    HYPOTHESIS = "hypothesis"


@dataclass(frozen=True)
class Segment:
    label: EmotionLabel
    start: int
    end: int
    confidence: Optional[float] = None

    @property
    def length(self) -> int:
        return self.end - self.start

    def sort_key(self) -> tuple[int, int, str]:
        return (self.start, self.end, self.label.value)


@dataclass(frozen=True)
class Timeline:
    utterance_id: str
    duration: int
    segments: tuple[Segment, ...]
    kind: Kind = Kind.REFERENCE

    def emotional_duration(self) -> int:
        """Time covered by at least one segment."""
        covered = 0
        cursor = 0
        for seg in self.segments:
            lo = max(seg.start, cursor)
            if seg.end > lo:
                covered += seg.end - lo
                cursor = seg.end
        return covered

    def labels(self) -> set[EmotionLabel]:
        return {seg.label for seg in self.segments}


def _merge_same_label(segments: list[Segment]) -> list[Segment]:
    by_label: dict[EmotionLabel, list[Segment]] = {}
    for seg in segments:
        by_label.setdefault(seg.label, []).append(seg)
    merged: list[Segment] = []
    for label, group in by_label.items():
        group.sort(key=Segment.sort_key)
        current = group[0]
        for seg in group[1:]:
            if seg.start <= current.end:
                if current.confidence is None or seg.confidence is None:
                    conf = None
                else:
                    conf = max(current.confidence, seg.confidence)
                current = Segment(label, current.start, max(current.end, seg.end), conf)
            else:
                merged.append(current)
                current = seg
        merged.append(current)
    return merged


def normalize(raw_segments: Iterable[Segment], duration: int,
              kind: Kind = Kind.REFERENCE, mode: str = "strict",
              utterance_id: str = "") -> Timeline:
    """Validate and canonicalize raw segments into a :class:`Timeline`.

    ``strict`` rejects anything out of range, degenerate, or (for
    references) overlapping. ``lenient`` clips to ``[0, duration]``, drops
    segments that become empty and merges touching or overlapping segments
    that share a label. Different-label overlap in a reference is an error
    in both modes.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    kind = Kind(kind)
    if duration <= 0:
        raise EmptyTimelineDuration(f"utterance duration must be positive, got {duration} ticks",
                                    utterance_id=utterance_id)
    strict = mode == "strict"
    kept: list[Segment] = []
    for i, seg in enumerate(raw_segments):
        where = f"segment {i}"
        conf = seg.confidence
        if conf is not None and not (0.0 <= conf <= 1.0):
            raise InvalidConfidence(f"confidence {conf!r} outside [0, 1]",
                                    utterance_id=utterance_id, location=where, index=i)
        start, end = seg.start, seg.end
        if strict:
            if start >= end:
                raise DegenerateSegment(
                    f"start {format_seconds(start)} s is not before end {format_seconds(end)} s",
                    utterance_id=utterance_id, location=where, index=i)
            if start < 0 or end > duration:
                raise OutOfRange(
                    f"[{format_seconds(start)}, {format_seconds(end)}) s lies outside "
                    f"[0, {format_seconds(duration)}] s",
                    utterance_id=utterance_id, location=where, index=i)
        else:
            start, end = max(start, 0), min(end, duration)
            if start >= end:
                continue
        kept.append(Segment(EmotionLabel(seg.label), start, end, conf))

    if not strict:
        kept = _merge_same_label(kept)
    kept.sort(key=Segment.sort_key)

    if kind is Kind.REFERENCE:
        for prev, seg in zip(kept, kept[1:]):
            if seg.start < prev.end:
                raise OverlapInReference(
                    f"{prev.label} [{format_seconds(prev.start)}, {format_seconds(prev.end)}) "
                    f"overlaps {seg.label} [{format_seconds(seg.start)}, {format_seconds(seg.end)})",
                    utterance_id=utterance_id)
    return Timeline(utterance_id, duration, tuple(kept), kind)


def label_at(timeline: Timeline, t: int) -> frozenset[EmotionLabel]:
    """Labels active at instant ``t``; the empty set means null."""
    if not 0 <= t < timeline.duration:
        raise OutOfRange(f"instant {format_seconds(t)} s outside [0, {format_seconds(timeline.duration)}) s",
                         utterance_id=timeline.utterance_id)
    return frozenset(seg.label for seg in timeline.segments if seg.start <= t < seg.end)


class Region(NamedTuple):
    start: int
    end: int
    ref_label: Optional[EmotionLabel]
    hyp_labels: frozenset[EmotionLabel]


def boundary_sweep(ref: Timeline, hyp: Timeline) -> list[Region]:
    """Partition ``[0, duration)`` into maximal regions of constant labelling.

    Region boundaries are a subset of the segment endpoints plus ``0`` and
    ``duration``; an endpoint where neither side changes (e.g. between two
    touching same-label segments) does not start a new region.
    """
    if ref.kind is not Kind.REFERENCE:
        raise ValueError("boundary_sweep expects a reference timeline as first argument")
    if ref.duration != hyp.duration:
        raise DurationMismatch(
            f"reference lasts {format_seconds(ref.duration)} s but hypothesis lasts "
            f"{format_seconds(hyp.duration)} s", utterance_id=ref.utterance_id)
    duration = ref.duration
    if duration <= 0:
        raise EmptyTimelineDuration("utterance duration must be positive",
                                    utterance_id=ref.utterance_id)

    # (tick, delta, side, label); side 0 = reference, 1 = hypothesis
    events: list[tuple[int, int, int, EmotionLabel]] = []
    for side, tl in ((0, ref), (1, hyp)):
        for seg in tl.segments:
            events.append((seg.start, 1, side, seg.label))
            events.append((seg.end, -1, side, seg.label))
    events.sort(key=lambda e: e[0])

    active: tuple[Counter, Counter] = (Counter(), Counter())
    regions: list[Region] = []
    cursor = 0
    i = 0
    n = len(events)
    while cursor < duration:
        while i < n and events[i][0] <= cursor:
            tick, delta, side, label = events[i]
            active[side][label] += delta
            if not active[side][label]:
                del active[side][label]
            i += 1
        nxt = events[i][0] if i < n else duration
        nxt = min(nxt, duration)
        ref_labels = list(active[0])
        ref_label = ref_labels[0] if ref_labels else None
        hyp_labels = frozenset(active[1])
        if regions and regions[-1].ref_label == ref_label and regions[-1].hyp_labels == hyp_labels:
            regions[-1] = regions[-1]._replace(end=nxt)
        else:
            regions.append(Region(cursor, nxt, ref_label, hyp_labels))
        cursor = nxt
    return regions
