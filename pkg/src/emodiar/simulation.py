"""Training-corpus simulation from utterance-level emotion clips.

Clips from one speaker are concatenated into the four single-event
shapes (emo, null-emo, emo-null, null-emo-null). Planning draws from
:class:`SplitMix64`, so a plan depends only on the manifest order, the
config and the seed.

Per planned utterance the draws are, in order:

1. ``random()`` once, picking the shape by cumulative ``pattern_probs``;
2. ``below(n_eligible)`` for the speaker, then ``below(k)`` per slot for
   its clip count when ``clips_per_slot`` spans ``k > 1`` values; a speaker
   who cannot fill the shape is re-drawn (step 2 only), at most
   ``max_retries`` times;
3. ``below(n_emotions)`` over the speaker's fillable emotions, in the order
   happy, sad, angry;
4. neutral clips, then emotional clips, each by a partial Fisher-Yates
   shuffle of the pool in manifest order (``below(len(pool) - i)`` per pick).
"""

from __future__ import annotations

import csv
import json
import math
import wave
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import canonical_json
from .annotation_io import record_to_json, write_reference
from .errors import (
    BadSampleRate,
    BadWavFormat,
    ChannelCountMismatch,
    ClipDurationMismatch,
    EmptyAudio,
    EmptyCorpus,
    InsufficientClips,
    MissingFile,
    ParseError,
    SampleRateMismatch,
    SchemaError,
    UnknownLabel,
)
from .framing import SHAPES, Shape, TransitionPattern
from .timeline import (
    CLASS_ORDER,
    TICKS_PER_SECOND,
    EmotionLabel,
    Kind,
    Segment,
    Timeline,
    format_seconds,
    label_name,
    to_ticks,
)

SAMPLE_RATE = 16_000
MANIFEST_FIELDS = ("clip_id", "path", "speaker_id", "label", "duration_s", "sample_rate")
EMOTIONS = tuple(label for label in CLASS_ORDER if label is not None)
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele, Lea & Flood 2014): output k is ``mix(seed + k * GAMMA)``.

    ``below(n)`` rejects the low ``2**64 mod n`` outputs, so it is exactly
    uniform; ``random()`` uses the top 53 bits.
    """

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        threshold = (1 << 64) % n
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class ClipMeta:
    clip_id: str
    path: Path
    speaker_id: str
    label: Optional[EmotionLabel]  # None marks a neutral clip
    duration: int
    sample_rate: int = SAMPLE_RATE


@dataclass(frozen=True)
class SimulationConfig:
    pattern_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    clips_per_slot: tuple[int, int] = (1, 1)
    seed: int = 0
    max_silence: int = 2000
    target_count: int = 1
    reuse_across_utterances: bool = True
    max_retries: int = 32

    def __post_init__(self):
        probs = tuple(float(p) for p in self.pattern_probs)
        if len(probs) != 4 or any(p < 0 or not math.isfinite(p) for p in probs):
            raise ValueError("pattern_probs must be 4 non-negative numbers")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"pattern_probs sum to {math.fsum(probs)!r}, not 1")
        lo, hi = self.clips_per_slot
        if not 1 <= lo <= hi:
            raise ValueError("clips_per_slot must be a range with 1 <= min <= max")
        if self.target_count < 0 or self.max_retries < 1:
            raise ValueError("target_count must be >= 0 and max_retries >= 1")
        object.__setattr__(self, "pattern_probs", probs)
        object.__setattr__(self, "clips_per_slot", (int(lo), int(hi)))

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimulationConfig":
        """Build from a JSON config; ``max_silence_s`` is in seconds."""
        known = {"pattern_probs", "clips_per_slot", "seed", "max_silence_s", "target_count",
                 "reuse_across_utterances", "max_retries"}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs = {k: data[k] for k in known & set(data) if k != "max_silence_s"}
        probs = kwargs.get("pattern_probs")
        if isinstance(probs, Mapping):
            kwargs["pattern_probs"] = tuple(probs.get(s.value, 0.0) for s in SHAPES)
        if "clips_per_slot" in kwargs:
            cps = kwargs["clips_per_slot"]
            kwargs["clips_per_slot"] = (cps, cps) if isinstance(cps, int) else tuple(cps)
        if "max_silence_s" in data:
            kwargs["max_silence"] = to_ticks(data["max_silence_s"])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad simulation config: {exc}") from None


@dataclass(frozen=True)
class Slot:
    label: Optional[EmotionLabel]
    clip_ids: tuple[str, ...]


@dataclass(frozen=True)
class PlannedUtterance:
    utterance_id: str
    speaker_id: str
    pattern: TransitionPattern
    slots: tuple[Slot, ...]
    reference: Timeline


@dataclass(frozen=True)
class SimulationPlan:
    utterances: tuple[PlannedUtterance, ...]
    clips: Mapping[str, ClipMeta] = field(default_factory=dict, compare=False, repr=False)

    def to_json(self) -> list:
        return [
            {
                "utterance_id": u.utterance_id,
                "speaker_id": u.speaker_id,
                "pattern": u.pattern.name,
                "slots": [{"label": label_name(s.label), "clips": list(s.clip_ids)} for s in u.slots],
                "reference": record_to_json(u.reference),
            }
            for u in self.utterances
        ]

    def dumps(self) -> str:
        return canonical_json.dumps(self.to_json())


# manifest and WAV I/O

def samples_to_ticks(n_samples: int, sample_rate: int = SAMPLE_RATE) -> int:
    """Nearest tick, ties rounded up."""
    num = n_samples * TICKS_PER_SECOND
    return (2 * num + sample_rate) // (2 * sample_rate)


def read_wav(path: Union[str, Path]) -> tuple[np.ndarray, int]:
    """Mono 16-bit PCM samples and the sample rate."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise BadWavFormat("compressed WAV not supported", location=str(path))
            if wf.getsampwidth() != 2:
                raise BadWavFormat(f"expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit",
                                   location=str(path))
            if wf.getnchannels() != 1:
                raise ChannelCountMismatch(f"expected mono, got {wf.getnchannels()} channels",
                                           location=str(path))
            rate = wf.getframerate()
            data = wf.readframes(wf.getnframes())
    except FileNotFoundError:
        raise MissingFile("audio file not found", location=str(path)) from None
    except (wave.Error, EOFError) as exc:
        raise BadWavFormat(f"not a PCM WAV file: {exc}", location=str(path)) from None
    return np.frombuffer(data, dtype="<i2").astype(np.int16), rate


def write_wav(path: Union[str, Path], samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.asarray(samples, dtype="<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def _wav_frames(path: Path) -> tuple[int, int]:
    try:
        with wave.open(str(path), "rb") as wf:
            return wf.getnframes(), wf.getframerate()
    except (wave.Error, EOFError) as exc:
        raise BadWavFormat(f"not a PCM WAV file: {exc}", location=str(path)) from None


def load_manifest(path: Union[str, Path], require_files: bool = False) -> list[ClipMeta]:
    """Read a clip manifest CSV.

    Paths are resolved against the manifest's directory. Declared durations
    are checked against WAV headers for every file that exists.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError:
        raise MissingFile("cannot open manifest", location=str(path)) from None
    clips: list[ClipMeta] = []
    seen: set[str] = set()
    with handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise ParseError(f"manifest header must be {','.join(MANIFEST_FIELDS)}", location=str(path))
        for row in reader:
            where = f"{path}, line {reader.line_num}"
            if None in row or any(row[k] is None or not row[k].strip() for k in MANIFEST_FIELDS):
                raise ParseError("malformed row", location=where)
            clip_id = row["clip_id"].strip()
            if clip_id in seen:
                raise ParseError(f"duplicate clip_id {clip_id!r}", location=where)
            seen.add(clip_id)
            name = row["label"].strip()
            if name == "neutral":
                label = None
            else:
                try:
                    label = EmotionLabel.parse(name)
                except UnknownLabel:
                    raise UnknownLabel(f"unknown clip label {name!r} (expected happy, sad, angry or neutral)",
                                       utterance_id=clip_id, location=where) from None
            try:
                duration = to_ticks(Decimal(row["duration_s"].strip()))
                rate = int(row["sample_rate"].strip())
            except (ValueError, InvalidOperation):
                raise ParseError("duration_s / sample_rate not numeric", location=where) from None
            if duration <= 0:
                raise ParseError("duration_s must be positive", utterance_id=clip_id, location=where)
            if rate != SAMPLE_RATE:
                raise BadSampleRate(f"sample_rate {rate} Hz, expected {SAMPLE_RATE}",
                                    utterance_id=clip_id, location=where)
            clip_path = Path(row["path"].strip())
            if not clip_path.is_absolute():
                clip_path = path.parent / clip_path
            if clip_path.exists():
                frames, file_rate = _wav_frames(clip_path)
                if file_rate != SAMPLE_RATE:
                    raise BadSampleRate(f"WAV header says {file_rate} Hz", utterance_id=clip_id,
                                        location=str(clip_path))
                actual = samples_to_ticks(frames)
                if abs(actual - duration) > 1:
                    raise ClipDurationMismatch(
                        f"declared {format_seconds(duration)} s but WAV holds {format_seconds(actual)} s",
                        utterance_id=clip_id, location=where)
            elif require_files:
                raise MissingFile(f"clip audio {clip_path} not found", utterance_id=clip_id, location=where)
            clips.append(ClipMeta(clip_id, clip_path, row["speaker_id"].strip(), label, duration, rate))
    return clips


# planning

_SLOT_LAYOUT = {
    Shape.EMO: (False,),
    Shape.NULL_EMO: (True, False),
    Shape.EMO_NULL: (False, True),
    Shape.NULL_EMO_NULL: (True, False, True),
}


def _sample(rng: SplitMix64, pool: Sequence[ClipMeta], k: int) -> list[ClipMeta]:
    items = list(pool)
    for i in range(k):
        j = i + rng.below(len(items) - i)
        items[i], items[j] = items[j], items[i]
    return items[:k]


def plan_simulation(corpus: Sequence[ClipMeta], config: SimulationConfig) -> SimulationPlan:
    if not corpus:
        raise EmptyCorpus("manifest lists no clips")
    speakers: dict[str, dict[Optional[EmotionLabel], list[ClipMeta]]] = {}
    for clip in corpus:
        speakers.setdefault(clip.speaker_id, {}).setdefault(clip.label, []).append(clip)
    eligible = sorted(spk for spk, pools in speakers.items()
                      if pools.get(None) and any(pools.get(e) for e in EMOTIONS))
    if not eligible:
        raise InsufficientClips("no speaker has both a neutral and an emotional clip")

    rng = SplitMix64(config.seed)
    cumulative = np.cumsum(config.pattern_probs).tolist()
    lo, hi = config.clips_per_slot
    used: set[str] = set()
    planned = []
    for k in range(config.target_count):
        u = rng.random()
        shape = next((s for s, c in zip(SHAPES, cumulative) if u < c), None)
        if shape is None:  # u landed in the rounding gap above the last cumulative sum
            shape = [s for s, p in zip(SHAPES, config.pattern_probs) if p > 0][-1]
        layout = _SLOT_LAYOUT[shape]

        for _ in range(config.max_retries):
            speaker = eligible[rng.below(len(eligible))]
            counts = [lo + rng.below(hi - lo + 1) if hi > lo else lo for _ in layout]
            pools = {label: [c for c in clips if c.clip_id not in used]
                     for label, clips in speakers[speaker].items()}
            n_null = sum(n for is_null, n in zip(layout, counts) if is_null)
            n_emo = sum(n for is_null, n in zip(layout, counts) if not is_null)
            emotions = [e for e in EMOTIONS if len(pools.get(e, ())) >= n_emo]
            if len(pools.get(None, ())) >= n_null and emotions:
                break
        else:
            raise InsufficientClips(
                f"no eligible speaker could fill a {shape.value} utterance after "
                f"{config.max_retries} draws", utterance_id=f"sim_{k:06d}")

        emotion = emotions[rng.below(len(emotions))]
        neutral = iter(_sample(rng, pools.get(None, []), n_null))
        emotional = iter(_sample(rng, pools[emotion], n_emo))

        slots = []
        cursor = 0
        segment = None
        for is_null, n in zip(layout, counts):
            chosen = [next(neutral if is_null else emotional) for _ in range(n)]
            length = sum(c.duration for c in chosen)
            if not is_null:
                segment = Segment(emotion, cursor, cursor + length)
            cursor += length
            slots.append(Slot(None if is_null else emotion, tuple(c.clip_id for c in chosen)))
            if not config.reuse_across_utterances:
                used.update(c.clip_id for c in chosen)
        uid = f"sim_{k:06d}"
        reference = Timeline(uid, cursor, (segment,), Kind.REFERENCE)
        planned.append(PlannedUtterance(uid, speaker, TransitionPattern(shape, emotion),
                                        tuple(slots), reference))
    return SimulationPlan(tuple(planned), {c.clip_id: c for c in corpus})


# rendering

AudioReader = Callable[[Path], tuple[np.ndarray, int]]


def render_utterance(planned: PlannedUtterance, clips: Mapping[str, ClipMeta],
                     reader: AudioReader = read_wav) -> tuple[np.ndarray, Timeline]:
    """Concatenate the planned clips sample-accurately.

    The returned timeline is the planned one; every clip's sample count must
    agree with its declared duration to within one tick.
    """
    parts = []
    for slot in planned.slots:
        for clip_id in slot.clip_ids:
            clip = clips[clip_id]
            samples, rate = reader(clip.path)
            if rate != SAMPLE_RATE:
                raise SampleRateMismatch(f"{rate} Hz, expected {SAMPLE_RATE}", utterance_id=clip_id,
                                         location=str(clip.path))
            samples = np.asarray(samples)
            if samples.ndim != 1:
                raise ChannelCountMismatch("expected mono samples", utterance_id=clip_id,
                                           location=str(clip.path))
            if abs(samples_to_ticks(len(samples)) - clip.duration) > 1:
                raise ClipDurationMismatch(
                    f"declared {format_seconds(clip.duration)} s but audio holds "
                    f"{format_seconds(samples_to_ticks(len(samples)))} s",
                    utterance_id=clip_id, location=str(clip.path))
            parts.append(samples.astype(np.int16))
    audio = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int16)
    return audio, planned.reference


def _render_to_files(args) -> str:
    planned, clips, out_dir = args
    audio, reference = render_utterance(planned, clips)
    write_wav(Path(out_dir) / "wav" / f"{planned.utterance_id}.wav", audio)
    write_reference(reference, Path(out_dir) / "ref" / f"{planned.utterance_id}.json")
    return planned.utterance_id


def write_simulation(plan: SimulationPlan, out_dir: Union[str, Path], jobs: int = 1) -> None:
    """Write ``plan.json``, ``wav/<id>.wav`` and ``ref/<id>.json`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "ref").mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_bytes(plan.dumps().encode("utf-8"))
    tasks = [(u, plan.clips, str(out)) for u in plan.utterances]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_render_to_files, tasks))
    else:
        for task in tasks:
            _render_to_files(task)


# silence checks

@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    longest_run: int
    runs: tuple[tuple[int, int], ...]

    @property
    def reason(self) -> Optional[str]:
        if self.accepted:
            return None
        return f"silence of {format_seconds(self.longest_run)} s"


def detect_silence_runs(samples: np.ndarray, sample_rate: int = SAMPLE_RATE, frame_ms: int = 25,
                        hop_ms: int = 10, floor_dbfs: float = -45.0) -> list[tuple[int, int]]:
    """Maximal runs of frames whose RMS level is below ``floor_dbfs``.

    Frames start every hop and span ``frame_ms`` (truncated at the end of
    the signal). A run spans from its first silent frame's start to its last
    silent frame's end, in ticks. Integer input is scaled by 1/32768.
    """
    x = np.asarray(samples)
    if x.size == 0:
        raise EmptyAudio("no samples")
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / 32768.0
    else:
        x = x.astype(np.float64)
    n = x.size
    frame = sample_rate * frame_ms // 1000
    hop = sample_rate * hop_ms // 1000
    starts = np.arange(0, n, hop)
    ends = np.minimum(starts + frame, n)
    energy = np.concatenate(([0.0], np.cumsum(x * x)))
    mean_square = (energy[ends] - energy[starts]) / (ends - starts)
    # rms < 10**(floor/20)  <=>  mean square < 10**(floor/10)
    silent = mean_square < 10.0 ** (floor_dbfs / 10.0)

    runs = []
    i = 0
    while i < len(starts):
        if not silent[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(starts) and silent[j + 1]:
            j += 1
        runs.append((samples_to_ticks(int(starts[i]), sample_rate),
                     samples_to_ticks(int(ends[j]), sample_rate)))
        i = j + 1
    return runs


def validate_recording(samples: np.ndarray, max_silence: int = 2000, sample_rate: int = SAMPLE_RATE,
                       floor_dbfs: float = -45.0) -> ValidationResult:
    """Reject iff some silent run lasts strictly longer than ``max_silence`` ticks."""
    runs = detect_silence_runs(samples, sample_rate, floor_dbfs=floor_dbfs)
    longest = max((b - a for a, b in runs), default=0)
    return ValidationResult(longest <= max_silence, longest, tuple(runs))


def load_config(path: Union[str, Path]) -> SimulationConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError:
        raise MissingFile("cannot read config", location=str(path)) from None
    except ValueError as exc:
        raise ParseError(f"invalid JSON config: {exc}", location=str(path)) from None
    if not isinstance(data, dict):
        raise SchemaError("config must be a JSON object", location=str(path))
    return SimulationConfig.from_dict(data)
