import random

import pytest
from hypothesis import given, strategies as st

from emodiar.errors import InvalidReferencePattern, MissingPosteriors, OverlapInReference
from emodiar.framing import (
    INVALID,
    FrameSequence,
    FrameSpec,
    Shape,
    TransitionPattern,
    apply_confidence_mask,
    classify_transition,
    collapse_runs,
    expand_runs,
    frames_to_intervals,
    intervals_to_frames,
    timeline_runs,
    transition_accuracy,
)
from emodiar.timeline import EmotionLabel, Kind, Segment, Timeline, normalize

from helpers import LABELS, random_reference

H, S, A = EmotionLabel.HAPPY, EmotionLabel.SAD, EmotionLabel.ANGRY
MS = 10  # ticks per millisecond
SPEC = FrameSpec()


def ref_of(*segs, d):
    return normalize([Segment(l, a, b) for l, a, b in segs], d, Kind.REFERENCE, utterance_id="u")


def frames_of(labels, stride=200, duration=None, posteriors=None, uid="u"):
    duration = duration if duration is not None else stride * len(labels)
    return FrameSequence(uid, FrameSpec(stride), duration, tuple(labels), posteriors)


def random_frame_aligned(rng, stride, uid="u"):
    n = rng.randint(1, 60)
    duration = stride * n - rng.randint(0, stride - 1)
    labels = [rng.choice((None, *LABELS)) for _ in range(n)]
    return frames_to_intervals(frames_of(labels, stride, duration, uid=uid))


class TestIntervalsToFrames:
    def test_longer_presence_wins(self):
        f = intervals_to_frames(ref_of((H, 0, 12 * MS), d=20 * MS), SPEC)
        assert f.labels == (H,)

    def test_tie_goes_to_earliest_onset(self):
        f = intervals_to_frames(ref_of((H, 0, 10 * MS), (S, 10 * MS, 20 * MS), d=20 * MS), SPEC)
        assert f.labels == (H,)
        f = intervals_to_frames(ref_of((S, 0, 10 * MS), (H, 10 * MS, 20 * MS), d=20 * MS), SPEC)
        assert f.labels == (S,)

    def test_null_tie_by_onset(self):
        f = intervals_to_frames(ref_of((A, 10 * MS, 20 * MS), d=20 * MS), SPEC)
        assert f.labels == (None,)
        f = intervals_to_frames(ref_of((A, 0, 10 * MS), d=20 * MS), SPEC)
        assert f.labels == (A,)

    def test_frame_aligned_event(self):
        ref = ref_of((H, 5 * 200, 10 * 200), d=15 * 200)
        f = intervals_to_frames(ref, SPEC)
        assert f.labels == (None,) * 5 + (H,) * 5 + (None,) * 5
        back = frames_to_intervals(f)
        assert back.segments == ref.segments and back.duration == ref.duration

    def test_partial_final_frame(self):
        ref = ref_of((S, 200, 250), d=250)
        f = intervals_to_frames(ref, SPEC)
        assert f.labels == (None, S)
        assert frames_to_intervals(f).segments == (Segment(S, 200, 250),)

    def test_overlap_rejected(self):
        hyp = normalize([Segment(H, 0, 100), Segment(S, 50, 150)], 200, Kind.HYPOTHESIS)
        with pytest.raises(OverlapInReference):
            intervals_to_frames(hyp, SPEC)

    def test_majority_by_direct_measurement(self):
        rng = random.Random(99)
        for _ in range(300):
            stride = rng.choice((7, 50, 200))
            ref = random_reference(rng, rng.randint(1, 1500), max_cuts=20)
            f = intervals_to_frames(ref, FrameSpec(stride))
            assert len(f.labels) == -(-ref.duration // stride)
            tick_labels = [None] * ref.duration
            for s in ref.segments:
                tick_labels[s.start:s.end] = [s.label] * s.length
            for i, chosen in enumerate(f.labels):
                window = tick_labels[i * stride:(i + 1) * stride]
                counts = {lab: window.count(lab) for lab in (None, *LABELS)}
                assert counts[chosen] == max(counts.values())
                tied = [lab for lab, c in counts.items() if c == counts[chosen]]
                if len(tied) > 1:
                    assert window.index(chosen) == min(window.index(t) for t in tied)


class TestFramesToIntervals:
    def test_example(self):
        tl = frames_to_intervals(frames_of([None, H, H, None], duration=80 * MS))
        assert tl.segments == (Segment(H, 20 * MS, 60 * MS),)
        assert tl.kind is Kind.HYPOTHESIS

    def test_all_null(self):
        assert frames_to_intervals(frames_of([None] * 4)).segments == ()

    def test_round_trip_random(self):
        rng = random.Random(1)
        for _ in range(500):
            n = rng.randint(1, 80)
            labels = tuple(rng.choice((None, *LABELS)) for _ in range(n))
            f = frames_of(labels, 200, 200 * n - rng.randint(0, 199))
            assert intervals_to_frames(frames_to_intervals(f), f.spec).labels == labels


class TestRuns:
    def test_examples(self):
        assert collapse_runs([None, None, H, H, None]) == [(None, 2), (H, 2), (None, 1)]
        assert collapse_runs([H]) == [(H, 1)]

    @given(st.lists(st.sampled_from((None, *LABELS)), max_size=60))
    def test_expand_collapse(self, labels):
        runs = collapse_runs(labels)
        assert expand_runs(runs) == labels
        assert collapse_runs(expand_runs(runs)) == runs
        assert all(a[0] != b[0] for a, b in zip(runs, runs[1:]))


class TestClassifyTransition:
    @pytest.mark.parametrize("seq, expected", [
        ([H], TransitionPattern(Shape.EMO, H)),
        ([None, H], TransitionPattern(Shape.NULL_EMO, H)),
        ([A, None], TransitionPattern(Shape.EMO_NULL, A)),
        ([None, S, None], TransitionPattern(Shape.NULL_EMO_NULL, S)),
        ([H, S], INVALID),
        ([None], INVALID),
        ([H, None, H], INVALID),
        ([None, H, None, S], INVALID),
        ([None, H, None, H, None], INVALID),
        ([], INVALID),
    ])
    def test_shapes(self, seq, expected):
        assert classify_transition([(lab, 3) for lab in seq]) == expected

    @given(st.lists(st.tuples(st.sampled_from((None, *LABELS)), st.integers(1, 50)), max_size=6),
           st.integers(1, 50))
    def test_run_lengths_ignored(self, runs, scale):
        assert classify_transition(runs) == classify_transition([(lab, n * scale + 7) for lab, n in runs])

    def test_names(self):
        assert TransitionPattern(Shape.NULL_EMO_NULL, H).name == "null-happy-null"
        assert TransitionPattern.parse("sad-null") == TransitionPattern(Shape.EMO_NULL, S)
        assert TransitionPattern.parse("angry") == TransitionPattern(Shape.EMO, A)

    def test_timeline_runs(self):
        ref = ref_of((H, 100, 200), (H, 200, 300), d=400)
        assert timeline_runs(ref) == [(None, 100), (H, 200), (None, 100)]


class TestConfidenceMask:
    POST = ((0.55, 0.2, 0.15, 0.1), (0.1, 0.1, 0.1, 0.7), (0.9, 0.05, 0.05, 0.0))

    def test_threshold_zero_is_identity(self):
        f = frames_of([H, None, H], posteriors=self.POST)
        assert apply_confidence_mask(f, 0.0) == f

    def test_threshold_one_masks_all(self):
        f = frames_of([H, None, H], posteriors=self.POST)
        assert apply_confidence_mask(f, 1.0).labels == (None, None, None)

    def test_below_threshold(self):
        f = frames_of([H, None, H], posteriors=self.POST)
        out = apply_confidence_mask(f, 0.6)
        assert out.labels == (None, None, H) and out.posteriors == self.POST

    def test_missing_posteriors(self):
        with pytest.raises(MissingPosteriors):
            apply_confidence_mask(frames_of([H]), 0.5)

    def test_monotone(self):
        rng = random.Random(4)
        for _ in range(100):
            n = rng.randint(1, 30)
            post = []
            for _ in range(n):
                w = [rng.random() for _ in range(4)]
                post.append(tuple(x / sum(w) for x in w))
            f = frames_of([rng.choice((None, *LABELS)) for _ in range(n)], posteriors=tuple(post))
            prev = n + 1
            for th in (0.0, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9, 1.0):
                count = sum(lab is not None for lab in apply_confidence_mask(f, th).labels)
                assert count <= prev
                prev = count


class TestTransitionAccuracy:
    def test_single_correct(self):
        ref = ref_of((H, 1000, 3000), d=3000)
        table = transition_accuracy([(ref, intervals_to_frames(ref, SPEC))], SPEC)
        row = next(r for r in table.rows if r.pattern.name == "null-happy")
        assert (row.tn, row.cn, row.acc) == (1, 1, 1.0)
        assert (table.total.tn, table.total.cn) == (1, 1)
        assert len(table.rows) == 12

    def test_emotion_must_match(self):
        ref = ref_of((S, 1000, 3000), d=3000)
        hyp = intervals_to_frames(ref_of((A, 1000, 3000), d=3000), SPEC)
        table = transition_accuracy([(ref, hyp)], SPEC)
        row = next(r for r in table.rows if r.pattern.name == "null-sad")
        assert (row.tn, row.cn) == (1, 0)

    def test_invalid_reference(self):
        ref = ref_of((S, 0, 1000), (H, 1000, 2000), d=3000)
        with pytest.raises(InvalidReferencePattern):
            transition_accuracy([(ref, intervals_to_frames(ref, SPEC))], SPEC)

    def test_totals_bounded(self):
        rng = random.Random(8)
        pairs = []
        for k in range(60):
            d = rng.randint(2000, 6000)
            a, b = sorted(rng.sample(range(0, d + 1, 200), 2)) if rng.random() < 0.8 else (0, d)
            ref = ref_of((rng.choice(LABELS), a, b), d=d)
            hyp = intervals_to_frames(random_reference(rng, d, max_cuts=3), SPEC)
            pairs.append((ref, hyp))
        table = transition_accuracy(pairs, SPEC)
        assert table.total.tn == 60 and 0 <= table.total.cn <= 60
        assert all(r.acc is None or 0 <= r.acc <= 1 for r in table.rows)
