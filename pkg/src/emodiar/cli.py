"""Command-line interface: ``emodiar <command> ...``.

Exit codes: 0 success, 1 validation/domain error, 2 I/O or parse error,
3 usage error. Results go to stdout (or ``--output``), diagnostics to
stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from . import annotation_io as aio
from .agreement import corpus_kappa
from .errors import BadSampleRate, DurationMismatch, EmodiarError, UnmatchedUtterances
from .framing import (
    FrameSequence,
    FrameSpec,
    apply_confidence_mask,
    frames_to_intervals,
    intervals_to_frames,
    transition_accuracy,
)
from .metrics import aggregate, eder
from .reporting import FORMATS, dataset_stats, render
from .simulation import (
    SAMPLE_RATE,
    SimulationConfig,
    load_config,
    load_manifest,
    plan_simulation,
    read_wav,
    validate_recording,
    write_simulation,
)
from .timeline import Kind, Timeline, format_seconds, to_ticks

JOBS_ENV = "EMODIAR_JOBS"
USAGE_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _default_jobs() -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _positive_seconds(text: str) -> int:
    try:
        ticks = to_ticks(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a time in seconds: {text!r}") from None
    if ticks <= 0:
        raise argparse.ArgumentTypeError(f"must be at least 0.0001 s: {text!r}")
    return ticks


def _emit(data: bytes, output: Optional[str]) -> None:
    if output:
        Path(output).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, in worker processes when ``jobs > 1``."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(item) for item in items]


def _match(refs: Sequence[Timeline], hyp_ids: Iterable[str], what: str = "hypothesis") -> None:
    ref_ids = {r.utterance_id for r in refs}
    hyp_ids = set(hyp_ids)
    missing = sorted(ref_ids - hyp_ids)
    extra = sorted(hyp_ids - ref_ids)
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"no {what} for: {', '.join(missing)}")
        if extra:
            parts.append(f"no reference for: {', '.join(extra)}")
        raise UnmatchedUtterances("; ".join(parts))


def _fit_frames(frames: FrameSequence, ref: Timeline) -> FrameSequence:
    """Give a frame hypothesis the reference's duration when the frame count allows it."""
    if frames.duration == ref.duration:
        return frames
    if frames.spec.n_frames(ref.duration) != len(frames.labels):
        raise DurationMismatch(
            f"{len(frames.labels)} frames of {format_seconds(frames.spec.stride)} s do not cover "
            f"the reference's {format_seconds(ref.duration)} s", utterance_id=ref.utterance_id)
    return replace(frames, duration=ref.duration)


def _load_frames(path: str, refs: Sequence[Timeline], threshold: Optional[float]) -> dict[str, FrameSequence]:
    seqs = aio.read_frame_hypotheses(path)
    _match(refs, (f.utterance_id for f in seqs))
    by_id = {r.utterance_id: r for r in refs}
    out = {}
    for frames in seqs:
        frames = _fit_frames(frames, by_id[frames.utterance_id])
        if threshold is not None:
            frames = apply_confidence_mask(frames, threshold)
        out[frames.utterance_id] = frames
    return out


def _load_rttm(path: str, refs: Sequence[Timeline], mode: str) -> list[Timeline]:
    durations = {r.utterance_id: r.duration for r in refs}
    p = Path(path)
    files = sorted(p.glob("*.rttm")) if p.is_dir() else [p]
    merged: dict[str, Timeline] = {}
    for file in files:
        for tl in aio.read_rttm(file, durations, Kind.HYPOTHESIS, mode):
            if tl.utterance_id in merged:
                raise UnmatchedUtterances("file id appears in several RTTM files",
                                          utterance_id=tl.utterance_id, location=str(file))
            merged[tl.utterance_id] = tl
    # an utterance predicted all-null has no RTTM lines
    return [merged.get(uid) or Timeline(uid, d, (), Kind.HYPOTHESIS) for uid, d in sorted(durations.items())]


def _load_hypotheses(args, refs: Sequence[Timeline]) -> list[Timeline]:
    if args.hyp_format == "intervals":
        hyps = aio.read_timelines(args.hyp, Kind.HYPOTHESIS, args.mode)
    elif args.hyp_format == "frames":
        hyps = [frames_to_intervals(f) for f in _load_frames(args.hyp, refs, args.mask_threshold).values()]
    else:
        hyps = _load_rttm(args.hyp, refs, args.mode)
    _match(refs, (h.utterance_id for h in hyps))
    return hyps


def _score_pair(pair):
    ref, hyp = pair
    return ref.utterance_id, eder(ref, hyp)


def cmd_score(args) -> int:
    refs = aio.read_timelines(args.ref, Kind.REFERENCE, args.mode)
    hyps = {h.utterance_id: h for h in _load_hypotheses(args, refs)}
    pairs = [(r, hyps[r.utterance_id]) for r in refs]
    report = aggregate(_pmap(_score_pair, pairs, args.jobs))
    _emit(render(report, args.format, summary=args.aggregate), args.output)
    return 0


def cmd_transitions(args) -> int:
    spec = FrameSpec(stride=args.stride)
    refs = aio.read_timelines(args.ref, Kind.REFERENCE, args.mode)
    if args.hyp_format == "frames":
        frames = _load_frames(args.hyp, refs, args.mask_threshold)
    else:
        frames = {h.utterance_id: intervals_to_frames(h, spec) for h in _load_hypotheses(args, refs)}
    table = transition_accuracy([(r, frames[r.utterance_id]) for r in refs], spec)
    _emit(render(table, args.format), args.output)
    return 0


def cmd_agreement(args, parser) -> int:
    if not args.annotator or len(args.annotator) < 2:
        parser.error("agreement needs at least two --annotator filesets")
    filesets = [aio.read_timelines(path, Kind.REFERENCE, args.mode) for path in args.annotator]
    ids = [t.utterance_id for t in filesets[0]]
    for path, fs in zip(args.annotator[1:], filesets[1:]):
        _match(filesets[0], (t.utterance_id for t in fs), what=f"annotation in {path}")
    by_id = [{t.utterance_id: t for t in fs} for fs in filesets]
    groups = [[fs[uid] for fs in by_id] for uid in ids]
    report = corpus_kappa(groups, frame=args.frame, per_utterance=args.per_utterance)
    _emit(render(report, args.format), args.output)
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config) if args.config else SimulationConfig()
    overrides = {}
    if args.count is not None:
        overrides["target_count"] = args.count
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = replace(config, **overrides)
    clips = load_manifest(args.manifest, require_files=True)
    plan = plan_simulation(clips, config)
    write_simulation(plan, args.out, jobs=args.jobs)
    counts = Counter(u.pattern.shape.value for u in plan.utterances)
    total = sum(u.reference.duration for u in plan.utterances)
    n = len(plan.utterances)
    lines = [f"utterances      {n}", f"total duration  {format_seconds(total)} s"]
    for shape in ("emo", "null-emo", "emo-null", "null-emo-null"):
        freq = counts[shape] / n if n else 0.0
        lines.append(f"{shape:<15} {counts[shape]:>6}  {100 * freq:.1f}%")
    _emit(("\n".join(lines) + "\n").encode("utf-8"), None)
    return 0


def cmd_validate(args) -> int:
    target = Path(args.wav)
    files = sorted(target.glob("*.wav")) if target.is_dir() else [target]
    rejected = 0
    lines = []
    for file in files:
        samples, rate = read_wav(file)
        if rate != SAMPLE_RATE:
            raise BadSampleRate(f"{rate} Hz, expected {SAMPLE_RATE}", location=str(file))
        result = validate_recording(samples, args.max_silence, rate, args.floor_dbfs)
        status = "accept" if result.accepted else "reject"
        rejected += not result.accepted
        lines.append(f"{status}  {file}  longest_silence={format_seconds(result.longest_run)}s")
    _emit(("\n".join(lines) + "\n").encode("utf-8") if lines else b"", None)
    return 1 if rejected else 0


def cmd_stats(args) -> int:
    records = aio.read_records(args.ref, Kind.REFERENCE, args.mode)
    if args.speakers:
        speakers = aio.read_speaker_map(args.speakers)
    elif any(r.speaker for r in records):
        speakers = {r.timeline.utterance_id: r.speaker for r in records if r.speaker}
    else:
        speakers = None
    stats = dataset_stats([r.timeline for r in records], speakers, weighting=args.weighting)
    _emit(render(stats, args.format), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emodiar", description="Speech emotion diarization scoring and dataset tools.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, output=True):
        p.add_argument("--mode", choices=("strict", "lenient"), default="strict",
                       help="annotation parse mode (default: strict)")
        if output:
            p.add_argument("--format", choices=FORMATS, default="text")
            p.add_argument("--output", "-o", help="write the report here instead of stdout")

    def hypothesis(p):
        p.add_argument("--ref", required=True, help="reference JSON file or directory")
        p.add_argument("--hyp", required=True, help="hypothesis file or directory")
        p.add_argument("--hyp-format", choices=("intervals", "frames", "rttm"), default="intervals")
        p.add_argument("--mask-threshold", type=float, default=None,
                       help="null out frames whose top posterior is below this (frames only)")

    p = sub.add_parser("score", help="EDER of hypotheses against references")
    hypothesis(p)
    p.add_argument("--aggregate", choices=("macro", "micro", "both"), default="both")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    common(p)

    p = sub.add_parser("transitions", help="emotion-transition accuracy table")
    hypothesis(p)
    p.add_argument("--stride", type=_positive_seconds, default=200, help="frame stride in seconds (0.02)")
    common(p)

    p = sub.add_parser("agreement", help="frame-wise Fleiss' kappa across annotators")
    p.add_argument("--annotator", action="append", help="one annotator's reference file or directory")
    p.add_argument("--frame", type=_positive_seconds, default=100, help="frame length in seconds (0.01)")
    p.add_argument("--per-utterance", action="store_true")
    common(p)

    p = sub.add_parser("simulate", help="build a concatenated training corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with SimulationConfig fields")
    p.add_argument("--jobs", type=int, default=_default_jobs())

    p = sub.add_parser("validate", help="reject recordings with long silences")
    p.add_argument("--wav", required=True, help="WAV file or directory")
    p.add_argument("--max-silence", type=_positive_seconds, default=2000, help="seconds (0.2)")
    p.add_argument("--floor-dbfs", type=float, default=-45.0)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--ref", required=True)
    p.add_argument("--speakers", help="CSV with utterance_id,speaker_id")
    p.add_argument("--weighting", choices=("count", "duration"), default="count")
    common(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit status (usage errors included)."""
    try:
        return _run(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR


def _run(argv: Optional[Sequence[str]]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    commands = {
        "score": cmd_score,
        "transitions": cmd_transitions,
        "agreement": lambda a: cmd_agreement(a, parser),
        "simulate": cmd_simulate,
        "validate": cmd_validate,
        "stats": cmd_stats,
    }
    try:
        return commands[args.command](args)
    except EmodiarError as exc:
        print(f"emodiar {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"emodiar {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"emodiar {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
