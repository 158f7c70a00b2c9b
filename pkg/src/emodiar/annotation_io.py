"""Readers and writers for annotation exchange formats.

Interval JSON (references and hypotheses)::

    {"utterance_id": "utt1", "duration_s": 10.0, "speaker": "spk1",
     "transcript": "...", "segments": [
        {"label": "happy", "start_s": 2.0, "end_s": 5.0, "confidence": 0.9}]}

A file holds one such object or an array of them. Frame-hypothesis JSON::

    {"utterance_id": "utt1", "frame_stride_s": 0.02,
     "labels": ["null", "happy", ...],
     "posteriors": [[p_happy, p_sad, p_angry, p_null], ...],
     "duration_s": 10.0}

``posteriors`` and ``duration_s`` are optional; without ``duration_s`` the
utterance is taken to last ``len(labels) * frame_stride_s``. RTTM files use
the standard ten whitespace-separated fields with the emotion in the
speaker-name column. Seconds are written with exactly four decimals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from . import canonical_json
from .canonical_json import Fixed, PosDict
from .errors import (
    EmodiarError,
    MissingDuration,
    MissingFile,
    ParseError,
    PosteriorSumError,
    SchemaError,
    UnknownLabel,
)
from .framing import POSTERIOR_TOLERANCE, FrameSequence, FrameSpec
from .metrics import AggregateReport, EderBreakdown, aggregate
from .timeline import (
    CLASS_ORDER,
    EmotionLabel,
    Kind,
    Segment,
    Timeline,
    format_seconds,
    label_name,
    normalize,
    to_ticks,
)

PathLike = Union[str, Path]

_LABELS_WITH_NULL = {label_name(label): label for label in CLASS_ORDER}


@dataclass(frozen=True)
class UtteranceRecord:
    timeline: Timeline
    speaker: Optional[str] = None
    transcript: Optional[str] = None


class _Source:
    """Error-location helper for one parsed file."""

    def __init__(self, path: PathLike, text: str):
        self.path = str(path)
        self.text = text

    def where(self, node: Any = None, extra: str = "") -> str:
        loc = self.path
        if isinstance(node, PosDict):
            loc += f", byte {canonical_json.byte_offset(self.text, node.offset)}"
        return f"{loc}, {extra}" if extra else loc


def _load_json(path: PathLike) -> tuple[Any, _Source]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise MissingFile("file not found", location=str(path)) from None
    except OSError as exc:
        raise MissingFile(f"cannot read file: {exc.strerror}", location=str(path)) from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc.reason})", location=f"{path}, byte {exc.start}") from None
    src = _Source(path, text)
    try:
        data = canonical_json.loads_with_offsets(text)
    except ValueError as exc:
        pos = getattr(exc, "pos", None)
        loc = f"{path}, byte {canonical_json.byte_offset(text, pos)}" if pos is not None else str(path)
        raise ParseError(f"invalid JSON: {getattr(exc, 'msg', exc)}", location=loc) from None
    return data, src


def _objects(data: Any, src: _Source) -> list[PosDict]:
    items = data if isinstance(data, list) else [data]
    for item in items:
        if not isinstance(item, dict):
            raise SchemaError("expected a JSON object per utterance", location=src.where())
    return items


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, Decimal)) and not isinstance(value, bool)


def _field(obj: dict, key: str, check, what: str, src: _Source, uid: Optional[str],
           required: bool = True, extra: str = ""):
    if key not in obj or (obj[key] is None and not required):
        if required:
            raise SchemaError(f"missing field {key!r}", utterance_id=uid, location=src.where(obj, extra))
        return None
    value = obj[key]
    if not check(value):
        raise SchemaError(f"field {key!r} must be {what}", utterance_id=uid, location=src.where(obj, extra))
    return value


def _seconds(value: Any, key: str, obj, src: _Source, uid, extra: str = "") -> int:
    try:
        return to_ticks(value)
    except ValueError:
        raise SchemaError(f"field {key!r} is not a time value", utterance_id=uid,
                          location=src.where(obj, extra)) from None


def _parse_record(obj: PosDict, src: _Source, kind: Kind, mode: str) -> UtteranceRecord:
    uid = _field(obj, "utterance_id", lambda v: isinstance(v, str) and v, "a non-empty string", src, None)
    duration = _seconds(_field(obj, "duration_s", _is_number, "a number", src, uid), "duration_s", obj, src, uid)
    speaker = _field(obj, "speaker", lambda v: isinstance(v, str), "a string", src, uid, required=False)
    transcript = _field(obj, "transcript", lambda v: isinstance(v, str), "a string", src, uid, required=False)
    raw_segments = _field(obj, "segments", lambda v: isinstance(v, list), "an array", src, uid)

    segments = []
    for i, seg in enumerate(raw_segments):
        tag = f"segment {i}"
        if not isinstance(seg, dict):
            raise SchemaError("segment must be an object", utterance_id=uid, location=src.where(obj, tag))
        name = _field(seg, "label", lambda v: isinstance(v, str), "a string", src, uid, extra=tag)
        try:
            label = EmotionLabel.parse(name)
        except UnknownLabel as exc:
            raise UnknownLabel(exc.message, utterance_id=uid, location=src.where(seg, tag)) from None
        start = _seconds(_field(seg, "start_s", _is_number, "a number", src, uid, extra=tag),
                         "start_s", seg, src, uid, tag)
        end = _seconds(_field(seg, "end_s", _is_number, "a number", src, uid, extra=tag),
                       "end_s", seg, src, uid, tag)
        conf = _field(seg, "confidence", _is_number, "a number", src, uid, required=False, extra=tag)
        segments.append(Segment(label, start, end, None if conf is None else float(conf)))

    try:
        timeline = normalize(segments, duration, kind, mode, utterance_id=uid)
    except EmodiarError as exc:
        if exc.index is not None:
            raise exc.relocated(src.where(raw_segments[exc.index], f"segment {exc.index}")) from None
        raise exc.relocated(src.where(obj)) from None
    return UtteranceRecord(timeline, speaker, transcript)


def _json_files(path: PathLike) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix == ".json" and p.is_file())
    return [path]


def read_records(path: PathLike, kind: Kind = Kind.REFERENCE, mode: str = "strict") -> list[UtteranceRecord]:
    """All utterance records in a file or directory of ``*.json`` files, sorted by id."""
    records: dict[str, UtteranceRecord] = {}
    for file in _json_files(path):
        data, src = _load_json(file)
        for obj in _objects(data, src):
            rec = _parse_record(obj, src, Kind(kind), mode)
            uid = rec.timeline.utterance_id
            if uid in records:
                raise SchemaError("duplicate utterance_id", utterance_id=uid, location=src.where(obj))
            records[uid] = rec
    return [records[uid] for uid in sorted(records)]


def read_timelines(path: PathLike, kind: Kind = Kind.REFERENCE, mode: str = "strict") -> list[Timeline]:
    return [rec.timeline for rec in read_records(path, kind, mode)]


def _single(path: PathLike, kind: Kind, mode: str) -> Timeline:
    records = read_records(path, kind, mode)
    if len(records) != 1:
        raise SchemaError(f"expected exactly one utterance, found {len(records)}", location=str(path))
    return records[0].timeline


def read_reference(path: PathLike, mode: str = "strict") -> Timeline:
    return _single(path, Kind.REFERENCE, mode)


def read_hypothesis(path: PathLike, mode: str = "strict") -> Timeline:
    return _single(path, Kind.HYPOTHESIS, mode)


def record_to_json(record: Union[UtteranceRecord, Timeline]) -> dict:
    if isinstance(record, Timeline):
        record = UtteranceRecord(record)
    tl = record.timeline
    segments = []
    for seg in tl.segments:
        item = {"label": seg.label.value, "start_s": Fixed(format_seconds(seg.start)),
                "end_s": Fixed(format_seconds(seg.end))}
        if seg.confidence is not None:
            item["confidence"] = float(seg.confidence)
        segments.append(item)
    out = {"utterance_id": tl.utterance_id, "duration_s": Fixed(format_seconds(tl.duration)),
           "segments": segments}
    if record.speaker is not None:
        out["speaker"] = record.speaker
    if record.transcript is not None:
        out["transcript"] = record.transcript
    return out


def _write_text(path: PathLike, text: str) -> None:
    Path(path).write_bytes(text.encode("utf-8"))


def write_reference(record: Union[UtteranceRecord, Timeline, Sequence[UtteranceRecord]], path: PathLike) -> None:
    """Canonical interval JSON; a sequence is written as an array sorted by id."""
    if isinstance(record, (UtteranceRecord, Timeline)):
        payload: Any = record_to_json(record)
    else:
        items = [r if isinstance(r, UtteranceRecord) else UtteranceRecord(r) for r in record]
        payload = [record_to_json(r) for r in sorted(items, key=lambda r: r.timeline.utterance_id)]
    _write_text(path, canonical_json.dumps(payload))


write_hypothesis = write_reference


# frame hypotheses

def _parse_frames(obj: PosDict, src: _Source) -> FrameSequence:
    uid = _field(obj, "utterance_id", lambda v: isinstance(v, str) and v, "a non-empty string", src, None)
    stride_s = _field(obj, "frame_stride_s", _is_number, "a number", src, uid, required=False)
    stride = 200 if stride_s is None else _seconds(stride_s, "frame_stride_s", obj, src, uid)
    if stride <= 0:
        raise SchemaError("frame_stride_s must be at least 0.0001", utterance_id=uid, location=src.where(obj))
    names = _field(obj, "labels", lambda v: isinstance(v, list), "an array", src, uid)
    if not names:
        raise SchemaError("labels must not be empty", utterance_id=uid, location=src.where(obj))
    labels = []
    for i, name in enumerate(names):
        if not isinstance(name, str) or name not in _LABELS_WITH_NULL:
            raise UnknownLabel(f"unknown frame label {name!r}", utterance_id=uid,
                               location=src.where(obj, f"frame {i}"))
        labels.append(_LABELS_WITH_NULL[name])

    posteriors = None
    rows = _field(obj, "posteriors", lambda v: isinstance(v, list), "an array", src, uid, required=False)
    if rows is not None:
        if len(rows) != len(labels):
            raise SchemaError(f"{len(rows)} posterior rows for {len(labels)} frames",
                              utterance_id=uid, location=src.where(obj))
        posteriors = []
        for i, row in enumerate(rows):
            if not (isinstance(row, list) and len(row) == len(CLASS_ORDER) and all(map(_is_number, row))):
                raise SchemaError("posterior row must hold 4 numbers (happy, sad, angry, null)",
                                  utterance_id=uid, location=src.where(obj, f"frame {i}"))
            vec = tuple(float(p) for p in row)
            if any(p < 0 for p in vec) or abs(math.fsum(vec) - 1.0) > POSTERIOR_TOLERANCE:
                raise PosteriorSumError(f"posterior row sums to {math.fsum(vec):.6g}",
                                        utterance_id=uid, location=src.where(obj, f"frame {i}"))
            posteriors.append(vec)
        posteriors = tuple(posteriors)

    spec = FrameSpec(stride=stride)
    duration_s = _field(obj, "duration_s", _is_number, "a number", src, uid, required=False)
    if duration_s is None:
        duration = stride * len(labels)
    else:
        duration = _seconds(duration_s, "duration_s", obj, src, uid)
        if duration <= 0 or spec.n_frames(duration) != len(labels):
            raise SchemaError(
                f"{len(labels)} frames of {format_seconds(stride)} s do not span {format_seconds(duration)} s",
                utterance_id=uid, location=src.where(obj))
    return FrameSequence(uid, spec, duration, tuple(labels), posteriors)


def read_frame_hypotheses(path: PathLike) -> list[FrameSequence]:
    out: dict[str, FrameSequence] = {}
    for file in _json_files(path):
        data, src = _load_json(file)
        for obj in _objects(data, src):
            frames = _parse_frames(obj, src)
            if frames.utterance_id in out:
                raise SchemaError("duplicate utterance_id", utterance_id=frames.utterance_id,
                                  location=src.where(obj))
            out[frames.utterance_id] = frames
    return [out[k] for k in sorted(out)]


def read_frame_hypothesis(path: PathLike) -> FrameSequence:
    seqs = read_frame_hypotheses(path)
    if len(seqs) != 1:
        raise SchemaError(f"expected exactly one utterance, found {len(seqs)}", location=str(path))
    return seqs[0]


def frames_to_json(frames: FrameSequence) -> dict:
    out = {"utterance_id": frames.utterance_id,
           "frame_stride_s": Fixed(format_seconds(frames.spec.stride)),
           "duration_s": Fixed(format_seconds(frames.duration)),
           "labels": [label_name(label) for label in frames.labels]}
    if frames.posteriors is not None:
        out["posteriors"] = [list(row) for row in frames.posteriors]
    return out


def write_frame_hypothesis(frames: FrameSequence, path: PathLike) -> None:
    _write_text(path, canonical_json.dumps(frames_to_json(frames)))


# RTTM

def read_rttm(path: PathLike, duration_map: Mapping[str, int], kind: Kind = Kind.HYPOTHESIS,
              mode: str = "strict", include_empty: bool = False) -> list[Timeline]:
    """Timelines from SPEAKER lines; ``duration_map`` gives ticks per file id.

    With ``include_empty`` every id in ``duration_map`` yields a timeline,
    since an all-null utterance has no RTTM lines.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile("file not found", location=str(path)) from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read RTTM: {exc}", location=str(path)) from None

    raw: dict[str, list[Segment]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields or fields[0].startswith(";") or fields[0].startswith("#"):
            continue
        if fields[0] != "SPEAKER":
            continue
        where = f"{path}, line {lineno}"
        if len(fields) not in (9, 10):
            raise ParseError(f"expected 10 fields, got {len(fields)}", location=where)
        file_id, onset, dur, name = fields[1], fields[3], fields[4], fields[7]
        try:
            start, length = to_ticks(onset), to_ticks(dur)
        except ValueError:
            raise ParseError(f"bad onset/duration {onset!r} {dur!r}", location=where) from None
        if length < 0:
            raise ParseError(f"negative duration {dur!r}", location=where)
        try:
            label = EmotionLabel.parse(name)
        except UnknownLabel as exc:
            raise UnknownLabel(exc.message, utterance_id=file_id, location=where) from None
        raw.setdefault(file_id, []).append(Segment(label, start, start + length))

    ids = set(raw) | (set(duration_map) if include_empty else set())
    timelines = []
    for file_id in sorted(ids):
        if file_id not in duration_map:
            raise MissingDuration("no utterance duration known for RTTM file id",
                                  utterance_id=file_id, location=str(path))
        try:
            timelines.append(normalize(raw.get(file_id, []), duration_map[file_id], kind, mode,
                                       utterance_id=file_id))
        except EmodiarError as exc:
            raise exc.relocated(str(path)) from None
    return timelines


def write_rttm(timelines: Iterable[Timeline], path: PathLike) -> None:
    lines = []
    for tl in sorted(timelines, key=lambda t: t.utterance_id):
        for seg in tl.segments:
            lines.append(f"SPEAKER {tl.utterance_id} 1 {format_seconds(seg.start)} "
                         f"{format_seconds(seg.length)} <NA> <NA> {seg.label.value} <NA> <NA>\n")
    _write_text(path, "".join(lines))


# reports

def breakdown_to_json(b: EderBreakdown) -> dict:
    out = {name: Fixed(format_seconds(getattr(b, name)))
           for name in ("fa", "me", "cf", "ol", "correct", "duration")}
    out["eder"] = b.eder
    return out


def report_to_json(report: AggregateReport) -> dict:
    totals = report.component_totals
    return {
        "per_utterance": [dict(utterance_id=uid, **breakdown_to_json(b)) for uid, b in report.per_utterance],
        "macro_eder": report.macro_eder,
        "micro_eder": report.micro_eder,
        "std_eder": report.std_eder,
        "component_totals": {k: Fixed(format_seconds(v)) for k, v in totals.items()},
    }


def write_report(report: AggregateReport, path: PathLike) -> None:
    _write_text(path, canonical_json.dumps(report_to_json(report)))


def read_report(path: PathLike) -> AggregateReport:
    data, src = _load_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("per_utterance"), list):
        raise SchemaError("report must be an object with a 'per_utterance' array", location=src.where())
    items = []
    for row in data["per_utterance"]:
        uid = _field(row, "utterance_id", lambda v: isinstance(v, str), "a string", src, None)
        ticks = {name: _seconds(_field(row, name, _is_number, "a number", src, uid), name, row, src, uid)
                 for name in ("fa", "me", "cf", "ol", "correct", "duration")}
        b = EderBreakdown(**ticks)
        if b.errors + b.correct != b.duration or b.duration <= 0:
            raise SchemaError("components do not add up to the duration", utterance_id=uid,
                              location=src.where(row))
        items.append((uid, b))
    return aggregate(items)


def read_speaker_map(path: PathLike) -> dict[str, str]:
    """``utterance_id,speaker_id`` CSV with a header row."""
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError:
        raise MissingFile("cannot open speaker map", location=str(path)) from None
    with handle:
        reader = csv.DictReader(handle)
        if not reader.fieldnames or not {"utterance_id", "speaker_id"} <= set(reader.fieldnames):
            raise SchemaError("speaker map needs columns utterance_id,speaker_id", location=str(path))
        mapping = {}
        for row in reader:
            if not row["utterance_id"] or not row["speaker_id"]:
                raise ParseError("empty field", location=f"{path}, line {reader.line_num}")
            mapping[row["utterance_id"]] = row["speaker_id"]
    return mapping
