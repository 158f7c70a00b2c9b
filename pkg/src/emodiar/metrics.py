"""Emotion Diarization Error Rate.

EDER = (FA + ME + CF + OL) / utterance duration, where every instant of the
utterance falls into exactly one of the categories in
:class:`InstantCategory`. Durations are accumulated in ticks, so the result
carries no discretization error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import AbstractSet, Iterable, Optional

from .errors import DurationMismatch, EmptyCorpus, EmptyTimelineDuration
from .timeline import EmotionLabel, Kind, Timeline, boundary_sweep


class InstantCategory(enum.Enum):
    CORRECT = "correct"
    FALSE_ALARM = "fa"
    MISSED_EMOTION = "me"
    CONFUSION = "cf"
    OVERLAP = "ol"


def classify_instant(ref_label: Optional[EmotionLabel],
                     hyp_labels: AbstractSet[EmotionLabel]) -> InstantCategory:
    if ref_label is None:
        return InstantCategory.FALSE_ALARM if hyp_labels else InstantCategory.CORRECT
    if not hyp_labels:
        return InstantCategory.MISSED_EMOTION
    if ref_label not in hyp_labels:
        return InstantCategory.CONFUSION
    if len(hyp_labels) == 1:
        return InstantCategory.CORRECT
    return InstantCategory.OVERLAP


@dataclass(frozen=True)
class EderBreakdown:
    """Per-utterance error durations in ticks."""

    fa: int
    me: int
    cf: int
    ol: int
    correct: int
    duration: int

    @property
    def errors(self) -> int:
        return self.fa + self.me + self.cf + self.ol

    @property
    def eder(self) -> float:
        return self.errors / self.duration


def eder(ref: Timeline, hyp: Timeline) -> EderBreakdown:
    if ref.duration <= 0:
        raise EmptyTimelineDuration("utterance duration must be positive",
                                    utterance_id=ref.utterance_id)
    totals = dict.fromkeys(InstantCategory, 0)
    for region in boundary_sweep(ref, hyp):
        totals[classify_instant(region.ref_label, region.hyp_labels)] += region.end - region.start
    return EderBreakdown(
        fa=totals[InstantCategory.FALSE_ALARM],
        me=totals[InstantCategory.MISSED_EMOTION],
        cf=totals[InstantCategory.CONFUSION],
        ol=totals[InstantCategory.OVERLAP],
        correct=totals[InstantCategory.CORRECT],
        duration=ref.duration,
    )


@dataclass(frozen=True)
class AggregateReport:
    """Corpus-level scores; utterances are kept sorted by id."""

    per_utterance: tuple[tuple[str, EderBreakdown], ...]

    @property
    def macro_eder(self) -> float:
        return math.fsum(b.eder for _, b in self.per_utterance) / len(self.per_utterance)

    @property
    def micro_eder(self) -> float:
        errors = sum(b.errors for _, b in self.per_utterance)
        return errors / sum(b.duration for _, b in self.per_utterance)

    @property
    def std_eder(self) -> float:
        """Population standard deviation of per-utterance EDER."""
        mean = self.macro_eder
        var = math.fsum((b.eder - mean) ** 2 for _, b in self.per_utterance) / len(self.per_utterance)
        return math.sqrt(var)

    @property
    def component_totals(self) -> dict[str, int]:
        return {name: sum(getattr(b, name) for _, b in self.per_utterance)
                for name in ("fa", "me", "cf", "ol", "correct", "duration")}


def aggregate(reports: Iterable[tuple[str, EderBreakdown]]) -> AggregateReport:
    items = sorted(reports, key=lambda item: item[0])
    if not items:
        raise EmptyCorpus("no utterances to aggregate")
    return AggregateReport(tuple(items))


def score_pairs(pairs: Iterable[tuple[Timeline, Timeline]]) -> AggregateReport:
    """Score matched (reference, hypothesis) pairs and aggregate them."""
    reports = []
    for ref, hyp in pairs:
        if ref.kind is not Kind.REFERENCE:
            raise ValueError(f"{ref.utterance_id}: first element must be a reference")
        if ref.duration != hyp.duration:
            raise DurationMismatch("reference and hypothesis durations differ",
                                   utterance_id=ref.utterance_id)
        reports.append((ref.utterance_id, eder(ref, hyp)))
    return aggregate(reports)
