"""Seeded random fixtures and brute-force oracles shared by the tests."""

from __future__ import annotations

import random
from fractions import Fraction

import numpy as np

from emodiar.metrics import InstantCategory, classify_instant
from emodiar.timeline import EmotionLabel, Kind, Segment, Timeline, label_at, normalize

LABELS = (EmotionLabel.HAPPY, EmotionLabel.SAD, EmotionLabel.ANGRY)


def random_reference(rng: random.Random, duration: int, max_cuts: int = 6, uid: str = "u") -> Timeline:
    """Non-overlapping timeline; touching same-label neighbours are allowed."""
    cuts = sorted(rng.sample(range(1, duration), min(duration - 1, rng.randint(0, max_cuts))))
    bounds = [0, *cuts, duration]
    segs = []
    for a, b in zip(bounds, bounds[1:]):
        choice = rng.choice((None, *LABELS))
        if choice is not None:
            segs.append(Segment(choice, a, b))
    return normalize(segs, duration, Kind.REFERENCE, utterance_id=uid)


def random_hypothesis(rng: random.Random, duration: int, max_segments: int = 5, uid: str = "u") -> Timeline:
    """Possibly overlapping segments."""
    segs = []
    for _ in range(rng.randint(0, max_segments)):
        a = rng.randrange(0, duration)
        b = rng.randrange(a + 1, duration + 1)
        segs.append(Segment(rng.choice(LABELS), a, b))
    return normalize(segs, duration, Kind.HYPOTHESIS, utterance_id=uid)


def paint(timeline: Timeline) -> np.ndarray:
    """Per-tick bitmask of active labels (bit i for LABELS[i])."""
    mask = np.zeros(timeline.duration, dtype=np.int8)
    for seg in timeline.segments:
        mask[seg.start:seg.end] |= 1 << LABELS.index(seg.label)
    return mask


def grid_oracle(ref: Timeline, hyp: Timeline) -> dict[InstantCategory, int]:
    """Classify every 0.1 ms instant independently of the sweep."""
    ref_mask, hyp_mask = paint(ref), paint(hyp)
    combos, counts = np.unique(ref_mask.astype(np.int16) * 8 + hyp_mask, return_counts=True)
    totals = dict.fromkeys(InstantCategory, 0)
    for combo, count in zip(combos.tolist(), counts.tolist()):
        r, h = divmod(combo, 8)
        ref_label = LABELS[r.bit_length() - 1] if r else None
        hyp_labels = {lab for i, lab in enumerate(LABELS) if h >> i & 1}
        totals[classify_instant(ref_label, hyp_labels)] += count
    return totals


def label_at_oracle(ref: Timeline, hyp: Timeline) -> dict[InstantCategory, int]:
    """Slow literal version: label_at on every tick."""
    totals = dict.fromkeys(InstantCategory, 0)
    for t in range(ref.duration):
        refs = label_at(ref, t)
        totals[classify_instant(next(iter(refs)) if refs else None, label_at(hyp, t))] += 1
    return totals


def kappa_oracle(rows: list[list[int]]) -> Fraction:
    """Textbook Fleiss' kappa in exact rational arithmetic."""
    N = len(rows)
    n = sum(rows[0])
    k = len(rows[0])
    P = [Fraction(sum(c * c for c in row) - n, n * (n - 1)) for row in rows]
    P_bar = sum(P) / N
    p = [Fraction(sum(row[j] for row in rows), N * n) for j in range(k)]
    P_e = sum(x * x for x in p)
    if P_bar == 1:
        return Fraction(1)
    return (P_bar - P_e) / (1 - P_e)
