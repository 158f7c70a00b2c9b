"""Frame-wise Fleiss' kappa across annotators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DurationMismatch, SingleRaterPerItem, TooFewRaters
from .framing import FrameSpec, intervals_to_frames
from .timeline import CLASS_ORDER, Timeline, format_seconds

AGREEMENT_FRAME = 100  # 0.01 s in ticks


@dataclass(frozen=True)
class RatingTable:
    """Per-item category tallies; columns follow ``CLASS_ORDER``."""

    counts: np.ndarray
    n_raters: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2:
            raise ValueError("rating counts must be a 2-D (items x categories) array")
        if counts.size and (counts < 0).any():
            raise ValueError("rating counts must be non-negative")
        if counts.size and (counts.sum(axis=1) != self.n_raters).any():
            raise ValueError(f"every item must collect exactly {self.n_raters} ratings")
        object.__setattr__(self, "counts", counts)

    @property
    def n_items(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def concat(cls, tables: Sequence["RatingTable"]) -> "RatingTable":
        raters = {t.n_raters for t in tables}
        if len(raters) != 1:
            raise TooFewRaters(f"cannot pool tables with rater counts {sorted(raters)}")
        return cls(np.concatenate([t.counts for t in tables]), raters.pop())


def build_rating_table(annotations: Sequence[Timeline], frame: int = AGREEMENT_FRAME) -> RatingTable:
    """One item per ``frame``-long slice of the utterance, one vote per annotator.

    Votes come from :func:`intervals_to_frames`, so each annotator's label
    for a frame is the class covering most of it.
    """
    if len(annotations) < 2:
        raise TooFewRaters(f"need at least 2 annotators, got {len(annotations)}")
    duration = annotations[0].duration
    for tl in annotations[1:]:
        if tl.duration != duration:
            raise DurationMismatch(
                f"annotators disagree on duration ({format_seconds(duration)} s vs "
                f"{format_seconds(tl.duration)} s)", utterance_id=tl.utterance_id)
    spec = FrameSpec(stride=frame, receptive_field=frame)
    column = {label: j for j, label in enumerate(CLASS_ORDER)}
    votes = np.array([[column[label] for label in intervals_to_frames(tl, spec).labels]
                      for tl in annotations])
    counts = np.zeros((votes.shape[1], len(CLASS_ORDER)), dtype=np.int64)
    for rater_votes in votes:
        counts[np.arange(votes.shape[1]), rater_votes] += 1
    return RatingTable(counts, len(annotations))


def fleiss_kappa(table: RatingTable) -> float:
    n = table.n_raters
    if n < 2:
        raise SingleRaterPerItem(f"kappa needs at least 2 ratings per item, got {n}")
    if table.n_items < 1:
        raise ValueError("rating table has no items")
    counts = table.counts.astype(np.float64)
    p_item = ((counts ** 2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_item.mean()
    if p_bar == 1.0:
        return 1.0
    p_cat = counts.sum(axis=0) / (table.n_items * n)
    p_e = float((p_cat ** 2).sum())
    return float((p_bar - p_e) / (1.0 - p_e))


@dataclass(frozen=True)
class AgreementReport:
    kappa: float
    n_raters: int
    n_items: int
    per_utterance: tuple[tuple[str, float], ...] = ()


def corpus_kappa(annotator_sets: Iterable[Sequence[Timeline]], frame: int = AGREEMENT_FRAME,
                 per_utterance: bool = False) -> AgreementReport:
    """Kappa over one table pooling every frame of every utterance.

    Each element of ``annotator_sets`` holds one utterance's annotations.
    """
    tables = []
    per_utt = []
    for annotations in annotator_sets:
        table = build_rating_table(annotations, frame)
        tables.append(table)
        if per_utterance:
            per_utt.append((annotations[0].utterance_id, fleiss_kappa(table)))
    if not tables:
        raise TooFewRaters("no utterances to compare")
    pooled = RatingTable.concat(tables)
    return AgreementReport(fleiss_kappa(pooled), pooled.n_raters, pooled.n_items, tuple(per_utt))
