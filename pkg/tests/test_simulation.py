import hashlib
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from emodiar.errors import (
    BadSampleRate,
    ClipDurationMismatch,
    EmptyAudio,
    EmptyCorpus,
    InsufficientClips,
    MissingFile,
    ParseError,
    SchemaError,
    UnknownLabel,
)
from emodiar.framing import SHAPES, Shape, classify_transition, timeline_runs
from emodiar.simulation import (
    ClipMeta,
    SimulationConfig,
    SplitMix64,
    detect_silence_runs,
    load_config,
    load_manifest,
    plan_simulation,
    read_wav,
    render_utterance,
    samples_to_ticks,
    validate_recording,
    write_simulation,
    write_wav,
)
from emodiar.timeline import EmotionLabel, Segment

H, S, A = EmotionLabel.HAPPY, EmotionLabel.SAD, EmotionLabel.ANGRY
HEADER = "clip_id,path,speaker_id,label,duration_s,sample_rate\n"
ONLY = {s: tuple(1.0 if t is s else 0.0 for t in SHAPES) for s in SHAPES}


def tone(n_samples, freq=220.0, amp=0.5):
    t = np.arange(n_samples) / 16000.0
    return (amp * 32767 * np.sin(2 * np.pi * freq * t)).astype(np.int16)


def make_corpus(root: Path, rows):
    """rows: (clip_id, speaker, label, n_samples); writes WAVs and a manifest."""
    (root / "clips").mkdir(parents=True, exist_ok=True)
    lines = [HEADER]
    for i, (cid, spk, label, n) in enumerate(rows):
        write_wav(root / "clips" / f"{cid}.wav", tone(n, 200 + 30 * i))
        lines.append(f"{cid},clips/{cid}.wav,{spk},{label},{n / 16000},16000\n")
    manifest = root / "manifest.csv"
    manifest.write_text("".join(lines))
    return manifest


def clip(cid, spk, label, seconds):
    return ClipMeta(cid, Path(f"/nonexistent/{cid}.wav"), spk, label, int(seconds * 10000))


def synthetic_corpus(n_speakers=6):
    out = []
    for s in range(n_speakers):
        for j in range(3):
            out.append(clip(f"s{s}n{j}", f"spk{s}", None, 1.0 + 0.1 * j))
        for j, emo in enumerate((H, S, A)):
            out.append(clip(f"s{s}e{j}", f"spk{s}", emo, 2.0 + 0.1 * j))
    return out


class TestSplitMix64:
    def test_reference_outputs(self):
        # published test vectors of the reference C implementation
        r = SplitMix64(1234567)
        assert r.next_u64() == 6457827717110365317
        assert r.next_u64() == 3203168211198807973
        assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

    def test_below_range(self):
        r = SplitMix64(3)
        draws = [r.below(7) for _ in range(7000)]
        assert set(draws) == set(range(7))
        assert all(800 < c < 1200 for c in Counter(draws).values())

    def test_random_range(self):
        r = SplitMix64(9)
        assert all(0.0 <= r.random() < 1.0 for _ in range(1000))


class TestManifest:
    def test_well_formed(self, tmp_path):
        m = make_corpus(tmp_path, [("n1", "A", "neutral", 48000), ("h1", "A", "happy", 32000),
                                   ("s1", "B", "sad", 16000)])
        clips = load_manifest(m, require_files=True)
        assert [c.clip_id for c in clips] == ["n1", "h1", "s1"]
        assert clips[0].label is None and clips[1].label is H
        assert clips[0].duration == 30000 and clips[1].duration == 20000
        assert clips[0].path == tmp_path / "clips" / "n1.wav"

    def test_unknown_label(self, tmp_path):
        m = tmp_path / "m.csv"
        m.write_text(HEADER + "x1,x1.wav,A,excited,1.0,16000\n")
        with pytest.raises(UnknownLabel):
            load_manifest(m)

    def test_duration_mismatch_names_clip(self, tmp_path):
        make_corpus(tmp_path, [("h1", "A", "happy", 16000)])
        m = tmp_path / "bad.csv"
        m.write_text(HEADER + "h1,clips/h1.wav,A,happy,1.5,16000\n")
        with pytest.raises(ClipDurationMismatch) as exc:
            load_manifest(m)
        assert "h1" in str(exc.value)

    def test_one_tick_slack(self, tmp_path):
        make_corpus(tmp_path, [("h1", "A", "happy", 16000)])
        m = tmp_path / "ok.csv"
        m.write_text(HEADER + "h1,clips/h1.wav,A,happy,1.0001,16000\n")
        assert load_manifest(m)[0].duration == 10001

    def test_bad_rate_and_rows(self, tmp_path):
        m = tmp_path / "m.csv"
        m.write_text(HEADER + "x1,x1.wav,A,happy,1.0,44100\n")
        with pytest.raises(BadSampleRate):
            load_manifest(m)
        m.write_text(HEADER + "x1,x1.wav,A,happy\n")
        with pytest.raises(ParseError):
            load_manifest(m)
        m.write_text("clip,path\n")
        with pytest.raises(ParseError):
            load_manifest(m)

    def test_missing_files(self, tmp_path):
        m = tmp_path / "m.csv"
        m.write_text(HEADER + "x1,x1.wav,A,happy,1.0,16000\n")
        assert len(load_manifest(m)) == 1
        with pytest.raises(MissingFile):
            load_manifest(m, require_files=True)


class TestPlan:
    CORPUS = [clip("n1", "A", None, 3.0), clip("h1", "A", H, 2.0)]

    def test_null_emo(self):
        plan = plan_simulation(self.CORPUS, SimulationConfig(pattern_probs=ONLY[Shape.NULL_EMO]))
        (u,) = plan.utterances
        assert u.reference.duration == 50000
        assert u.reference.segments == (Segment(H, 30000, 50000),)
        assert [s.clip_ids for s in u.slots] == [("n1",), ("h1",)]

    def test_emo(self):
        plan = plan_simulation(self.CORPUS, SimulationConfig(pattern_probs=ONLY[Shape.EMO]))
        (u,) = plan.utterances
        assert u.reference.duration == 20000
        assert u.reference.segments == (Segment(H, 0, 20000),)

    def test_null_emo_null_needs_two_neutral(self):
        with pytest.raises(InsufficientClips):
            plan_simulation(self.CORPUS, SimulationConfig(pattern_probs=ONLY[Shape.NULL_EMO_NULL]))

    def test_errors(self):
        with pytest.raises(EmptyCorpus):
            plan_simulation([], SimulationConfig())
        with pytest.raises(InsufficientClips):
            plan_simulation([clip("h1", "A", H, 1.0)], SimulationConfig())

    def test_pattern_frequencies(self):
        plan = plan_simulation(synthetic_corpus(), SimulationConfig(seed=2024, target_count=10_000))
        freq = Counter(u.pattern.shape for u in plan.utterances)
        for shape in SHAPES:
            assert abs(freq[shape] / 10_000 - 0.25) <= 0.02

    def test_plan_invariants(self):
        corpus = synthetic_corpus()
        by_id = {c.clip_id: c for c in corpus}
        plan = plan_simulation(corpus, SimulationConfig(seed=5, target_count=500, clips_per_slot=(1, 2)))
        for u in plan.utterances:
            assert classify_transition(timeline_runs(u.reference)) == u.pattern
            ids = [cid for s in u.slots for cid in s.clip_ids]
            assert len(ids) == len(set(ids))
            assert {by_id[c].speaker_id for c in ids} == {u.speaker_id}
            emo_labels = {by_id[c].label for s in u.slots if s.label is not None for c in s.clip_ids}
            assert emo_labels == {u.pattern.emotion}
            # boundaries equal cumulative clip durations
            cuts = np.cumsum([sum(by_id[c].duration for c in s.clip_ids) for s in u.slots]).tolist()
            seg = u.reference.segments[0]
            assert seg.end in cuts and (seg.start == 0 or seg.start in cuts)
            assert cuts[-1] == u.reference.duration

    def test_deterministic(self):
        cfg = SimulationConfig(seed=77, target_count=200)
        assert plan_simulation(synthetic_corpus(), cfg).dumps() == plan_simulation(synthetic_corpus(), cfg).dumps()
        other = SimulationConfig(seed=78, target_count=200)
        assert plan_simulation(synthetic_corpus(), cfg).dumps() != plan_simulation(synthetic_corpus(), other).dumps()

    def test_no_reuse_across_utterances(self):
        corpus = synthetic_corpus(2)
        cfg = SimulationConfig(pattern_probs=ONLY[Shape.EMO], target_count=6, reuse_across_utterances=False)
        plan = plan_simulation(corpus, cfg)
        ids = [c for u in plan.utterances for s in u.slots for c in s.clip_ids]
        assert len(ids) == len(set(ids)) == 6

    def test_config_validation(self, tmp_path):
        with pytest.raises(ValueError):
            SimulationConfig(pattern_probs=(0.5, 0.5, 0.5, 0.0))
        cfg = tmp_path / "c.json"
        cfg.write_text('{"pattern_probs": {"emo": 1.0}, "max_silence_s": 0.3, "seed": 4}')
        loaded = load_config(cfg)
        assert loaded.pattern_probs == (1.0, 0.0, 0.0, 0.0) and loaded.max_silence == 3000
        cfg.write_text('{"bogus": 1}')
        with pytest.raises(SchemaError):
            load_config(cfg)


class TestRender:
    def test_concatenation(self, tmp_path):
        m = make_corpus(tmp_path, [("n1", "A", "neutral", 48000), ("h1", "A", "happy", 32000)])
        clips = load_manifest(m)
        plan = plan_simulation(clips, SimulationConfig(pattern_probs=ONLY[Shape.NULL_EMO]))
        audio, ref = render_utterance(plan.utterances[0], plan.clips)
        assert len(audio) == 80000
        assert ref == plan.utterances[0].reference
        assert samples_to_ticks(len(audio)) == ref.duration
        np.testing.assert_array_equal(audio[:48000], read_wav(clips[0].path)[0])

    def test_sample_count_mismatch(self, tmp_path):
        m = make_corpus(tmp_path, [("n1", "A", "neutral", 48000), ("h1", "A", "happy", 32000)])
        plan = plan_simulation(load_manifest(m), SimulationConfig(pattern_probs=ONLY[Shape.EMO]))
        short = lambda path: (np.zeros(100, dtype=np.int16), 16000)
        with pytest.raises(ClipDurationMismatch):
            render_utterance(plan.utterances[0], plan.clips, short)

    def test_byte_identical_runs(self, tmp_path):
        rows = [(f"n{i}", f"S{i % 2}", "neutral", 8000 + 800 * i) for i in range(4)]
        rows += [(f"e{i}", f"S{i % 2}", ("happy", "sad", "angry")[i % 3], 12000 + 160 * i) for i in range(6)]
        m = make_corpus(tmp_path / "corpus", rows)
        digests = []
        for run in ("a", "b"):
            plan = plan_simulation(load_manifest(m), SimulationConfig(seed=11, target_count=12))
            write_simulation(plan, tmp_path / run, jobs=2 if run == "b" else 1)
            files = sorted(p for p in (tmp_path / run).rglob("*") if p.is_file())
            digests.append({str(p.relative_to(tmp_path / run)): hashlib.sha256(p.read_bytes()).hexdigest()
                            for p in files})
        assert digests[0] == digests[1]
        assert len(digests[0]) == 1 + 2 * 12


def speech_gap_speech(gap_s):
    gap = np.zeros(int(round(gap_s * 16000)), dtype=np.int16)
    return np.concatenate([tone(16000), gap, tone(16000)])


class TestSilence:
    def test_all_zero(self):
        runs = detect_silence_runs(np.zeros(16000, dtype=np.int16))
        assert runs == [(0, 10000)]

    def test_sine(self):
        assert detect_silence_runs(tone(16000, amp=1.0)) == []

    def test_empty(self):
        with pytest.raises(EmptyAudio):
            detect_silence_runs(np.zeros(0, dtype=np.int16))

    def test_gap_025_rejected(self):
        runs = detect_silence_runs(speech_gap_speech(0.25))
        assert len(runs) == 1 and runs[0][1] - runs[0][0] >= 2000
        result = validate_recording(speech_gap_speech(0.25))
        assert not result.accepted and "0.2" in result.reason

    def test_gap_015_accepted(self):
        result = validate_recording(speech_gap_speech(0.15))
        assert result.accepted and 0 < result.longest_run <= 1500

    def test_gap_020_accepted(self):
        assert validate_recording(speech_gap_speech(0.20)).accepted

    def test_strict_boundary(self):
        samples = speech_gap_speech(0.25)
        longest = validate_recording(samples).longest_run
        assert validate_recording(samples, max_silence=longest).accepted
        assert not validate_recording(samples, max_silence=longest - 1).accepted

    def test_floor(self):
        quiet = tone(16000, amp=10 ** (-50 / 20) * 1.414)
        assert detect_silence_runs(quiet) == [(0, 10000)]
        assert detect_silence_runs(quiet, floor_dbfs=-60) == []
