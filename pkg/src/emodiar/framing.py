"""Frame-level views of timelines and emotion-transition analysis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

from .errors import InvalidReferencePattern, MissingPosteriors, OverlapInReference
from .timeline import (
    CLASS_ORDER,
    EmotionLabel,
    Kind,
    Segment,
    Timeline,
    format_seconds,
    label_name,
)

Label = Optional[EmotionLabel]
Run = tuple[Label, int]

POSTERIOR_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FrameSpec:
    stride: int = 200
    receptive_field: int = 250

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError(f"frame stride must be positive, got {self.stride} ticks")

    def n_frames(self, duration: int) -> int:
        return -(-duration // self.stride)


@dataclass(frozen=True)
class FrameSequence:
    utterance_id: str
    spec: FrameSpec
    duration: int
    labels: tuple[Label, ...]
    posteriors: Optional[tuple[tuple[float, ...], ...]] = None

    def __post_init__(self):
        expected = self.spec.n_frames(self.duration)
        if len(self.labels) != expected:
            raise ValueError(
                f"{self.utterance_id}: {len(self.labels)} labels for {expected} frames "
                f"({format_seconds(self.duration)} s at stride {format_seconds(self.spec.stride)} s)")
        if self.posteriors is not None:
            if len(self.posteriors) != len(self.labels):
                raise ValueError(f"{self.utterance_id}: posteriors and labels differ in length")
            for i, row in enumerate(self.posteriors):
                if len(row) != len(CLASS_ORDER) or abs(math.fsum(row) - 1.0) > POSTERIOR_TOLERANCE:
                    raise ValueError(f"{self.utterance_id}: posterior row {i} is not a distribution")

    def frame_bounds(self, i: int) -> tuple[int, int]:
        lo = i * self.spec.stride
        return lo, min(lo + self.spec.stride, self.duration)


def _check_no_overlap(timeline: Timeline) -> None:
    for prev, seg in zip(timeline.segments, timeline.segments[1:]):
        if seg.start < prev.end:
            raise OverlapInReference("frame labelling needs non-overlapping segments",
                                     utterance_id=timeline.utterance_id)


def _frame_label(segments: Sequence[Segment], lo: int, hi: int) -> Label:
    covered: dict[Label, int] = {}
    onset: dict[Label, int] = {}
    cursor = lo
    for seg in segments:
        a, b = max(seg.start, lo), min(seg.end, hi)
        if a >= b:
            continue
        if a > cursor and None not in onset:
            onset[None] = cursor
        covered[seg.label] = covered.get(seg.label, 0) + (b - a)
        onset.setdefault(seg.label, a)
        cursor = b
    if cursor < hi and None not in onset:
        onset[None] = cursor
    null_time = (hi - lo) - sum(covered.values())
    if null_time > 0:
        covered[None] = null_time
    # longest presence, then earliest onset, then label name
    return min(covered, key=lambda lab: (-covered[lab], onset[lab], label_name(lab)))


def intervals_to_frames(timeline: Timeline, spec: FrameSpec = FrameSpec()) -> FrameSequence:
    """Label each frame with the class (null included) covering most of it."""
    _check_no_overlap(timeline)
    segs = timeline.segments
    n = spec.n_frames(timeline.duration)
    labels: list[Label] = []
    first = 0
    for i in range(n):
        lo = i * spec.stride
        hi = min(lo + spec.stride, timeline.duration)
        while first < len(segs) and segs[first].end <= lo:
            first += 1
        last = first
        while last < len(segs) and segs[last].start < hi:
            last += 1
        labels.append(_frame_label(segs[first:last], lo, hi))
    return FrameSequence(timeline.utterance_id, spec, timeline.duration, tuple(labels))


def frames_to_intervals(frames: FrameSequence) -> Timeline:
    segments = []
    start = 0
    for label, length in collapse_runs(frames):
        end = start + length
        if label is not None:
            lo, _ = frames.frame_bounds(start)
            _, hi = frames.frame_bounds(end - 1)
            segments.append(Segment(label, lo, hi))
        start = end
    return Timeline(frames.utterance_id, frames.duration, tuple(segments), Kind.HYPOTHESIS)


def collapse_runs(frames: Union[FrameSequence, Iterable[Label]]) -> list[Run]:
    labels = frames.labels if isinstance(frames, FrameSequence) else frames
    runs: list[list] = []
    for label in labels:
        if runs and runs[-1][0] == label:
            runs[-1][1] += 1
        else:
            runs.append([label, 1])
    return [(label, n) for label, n in runs]


def expand_runs(runs: Iterable[Run]) -> list[Label]:
    out: list[Label] = []
    for label, n in runs:
        out.extend([label] * n)
    return out


class Shape(str, enum.Enum):
    EMO = "emo"
    NULL_EMO = "null-emo"
    EMO_NULL = "emo-null"
    NULL_EMO_NULL = "null-emo-null"
    INVALID = "invalid"


SHAPES = (Shape.EMO, Shape.NULL_EMO, Shape.EMO_NULL, Shape.NULL_EMO_NULL)

_SHAPE_BY_NULLS = {
    (False, False): Shape.EMO,
    (True, False): Shape.NULL_EMO,
    (False, True): Shape.EMO_NULL,
    (True, True): Shape.NULL_EMO_NULL,
}


@dataclass(frozen=True)
class TransitionPattern:
    shape: Shape
    emotion: Optional[EmotionLabel] = None

    def __post_init__(self):
        if (self.shape is Shape.INVALID) != (self.emotion is None):
            raise ValueError("only valid shapes carry an emotion")

    @property
    def is_valid(self) -> bool:
        return self.shape is not Shape.INVALID

    @property
    def name(self) -> str:
        if not self.is_valid:
            return "invalid"
        return self.shape.value.replace("emo", self.emotion.value)

    @classmethod
    def parse(cls, name: str) -> "TransitionPattern":
        if name == "invalid":
            return INVALID
        parts = name.split("-")
        emotions = [p for p in parts if p != "null"]
        if len(emotions) != 1:
            raise ValueError(f"not a transition pattern: {name!r}")
        emotion = EmotionLabel.parse(emotions[0])
        shape = Shape("-".join("emo" if p != "null" else p for p in parts))
        return cls(shape, emotion)


INVALID = TransitionPattern(Shape.INVALID)


def classify_transition(runs: Iterable[Run]) -> TransitionPattern:
    """Map a run sequence to one of the four single-event shapes, or INVALID."""
    seq = [label for label, _ in collapse_runs(label for label, n in runs if n > 0)]
    emotions = [label for label in seq if label is not None]
    if len(emotions) != 1 or len(seq) > 3:
        return INVALID
    idx = seq.index(emotions[0])
    lead, trail = idx == 1, idx == len(seq) - 2
    if len(seq) != 1 + lead + trail:
        return INVALID
    return TransitionPattern(_SHAPE_BY_NULLS[(lead, trail)], emotions[0])


def timeline_runs(timeline: Timeline) -> list[Run]:
    """Exact (tick-length) runs of a non-overlapping timeline, gaps as null."""
    _check_no_overlap(timeline)
    runs: list[list] = []

    def push(label: Label, length: int) -> None:
        if runs and runs[-1][0] == label:
            runs[-1][1] += length
        else:
            runs.append([label, length])

    cursor = 0
    for seg in timeline.segments:
        if seg.start > cursor:
            push(None, seg.start - cursor)
        push(seg.label, seg.length)
        cursor = seg.end
    if cursor < timeline.duration:
        push(None, timeline.duration - cursor)
    return [(label, n) for label, n in runs]


def apply_confidence_mask(frames: FrameSequence, threshold: float) -> FrameSequence:
    """Null out frames whose top posterior is below ``threshold``."""
    if frames.posteriors is None:
        raise MissingPosteriors("confidence masking needs per-frame posteriors",
                                utterance_id=frames.utterance_id)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold!r} outside [0, 1]")
    labels = tuple(None if max(row) < threshold else label
                   for label, row in zip(frames.labels, frames.posteriors))
    return replace(frames, labels=labels)


@dataclass(frozen=True)
class TransitionRow:
    pattern: TransitionPattern
    tn: int
    cn: int

    @property
    def acc(self) -> Optional[float]:
        return self.cn / self.tn if self.tn else None


@dataclass(frozen=True)
class TransitionTable:
    rows: tuple[TransitionRow, ...]
    per_utterance: tuple[tuple[str, TransitionPattern, TransitionPattern], ...] = field(default=())

    @property
    def total(self) -> TransitionRow:
        return TransitionRow(INVALID, sum(r.tn for r in self.rows), sum(r.cn for r in self.rows))


#: Row order: per emotion, the four shapes.
TABLE_PATTERNS = tuple(TransitionPattern(shape, emotion)
                       for emotion in (EmotionLabel.HAPPY, EmotionLabel.SAD, EmotionLabel.ANGRY)
                       for shape in SHAPES)


def transition_accuracy(pairs: Iterable[tuple[Timeline, FrameSequence]],
                        spec: FrameSpec = FrameSpec()) -> TransitionTable:
    """Per-pattern counts of references (TN) and correctly predicted ones (CN).

    A hypothesis is correct when its collapsed frame sequence yields the
    same shape with the same emotion as the reference.
    """
    tn = dict.fromkeys(TABLE_PATTERNS, 0)
    cn = dict.fromkeys(TABLE_PATTERNS, 0)
    details = []
    for ref, hyp_frames in sorted(pairs, key=lambda p: p[0].utterance_id):
        ref_pattern = classify_transition(collapse_runs(intervals_to_frames(ref, spec)))
        if not ref_pattern.is_valid:
            raise InvalidReferencePattern("reference does not match any single-event pattern",
                                          utterance_id=ref.utterance_id)
        hyp_pattern = classify_transition(collapse_runs(hyp_frames))
        tn[ref_pattern] += 1
        cn[ref_pattern] += hyp_pattern == ref_pattern
        details.append((ref.utterance_id, ref_pattern, hyp_pattern))
    rows = tuple(TransitionRow(p, tn[p], cn[p]) for p in TABLE_PATTERNS)
    return TransitionTable(rows, tuple(details))
