"""Dataset statistics and report rendering (text, csv, json).

Renderers return bytes and never depend on the locale. Text tables print
percentages with one decimal; json keeps full precision and csv uses the
same numeric values as json.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from . import canonical_json
from .agreement import AgreementReport
from .annotation_io import breakdown_to_json, report_to_json
from .canonical_json import Fixed
from .errors import EmptyCorpus
from .framing import TransitionTable, classify_transition, timeline_runs
from .metrics import AggregateReport, EderBreakdown, aggregate
from .timeline import TICKS_PER_SECOND, EmotionLabel, Timeline, format_seconds

FORMATS = ("text", "csv", "json")
EMOTIONS = (EmotionLabel.HAPPY, EmotionLabel.SAD, EmotionLabel.ANGRY)


@dataclass(frozen=True)
class DatasetStats:
    n_utterances: int
    total_duration: int
    n_speakers: Optional[int]
    emotion_proportions: Mapping[str, float]
    duration_histogram: tuple[tuple[int, int], ...]  # (whole-second bin, count)
    pattern_counts: Mapping[str, int]
    invalid: tuple[str, ...] = ()
    weighting: str = "count"


def dataset_stats(references: Sequence[Timeline], speaker_map: Optional[Mapping[str, str]] = None,
                  weighting: str = "count") -> DatasetStats:
    """Corpus summary: size, speakers, emotion mix, durations and shapes.

    Utterances that do not hold exactly one emotional event are listed in
    ``invalid`` and left out of the emotion proportions.
    """
    if weighting not in ("count", "duration"):
        raise ValueError(f"unknown weighting {weighting!r}")
    if not references:
        raise EmptyCorpus("no reference utterances")
    weights: Counter = Counter()
    patterns: Counter = Counter()
    hist: Counter = Counter()
    invalid = []
    for tl in sorted(references, key=lambda t: t.utterance_id):
        hist[tl.duration // TICKS_PER_SECOND] += 1
        pattern = classify_transition(timeline_runs(tl))
        if not pattern.is_valid:
            invalid.append(tl.utterance_id)
            continue
        patterns[pattern.name] += 1
        weights[pattern.emotion.value] += 1 if weighting == "count" else tl.duration
    total_weight = sum(weights.values())
    proportions = {e.value: (weights[e.value] / total_weight if total_weight else 0.0) for e in EMOTIONS}
    n_speakers = None
    if speaker_map is not None:
        n_speakers = len({speaker_map[t.utterance_id] for t in references if t.utterance_id in speaker_map})
    return DatasetStats(
        n_utterances=len(references),
        total_duration=sum(t.duration for t in references),
        n_speakers=n_speakers,
        emotion_proportions=proportions,
        duration_histogram=tuple(sorted(hist.items())),
        pattern_counts=dict(sorted(patterns.items())),
        invalid=tuple(invalid),
        weighting=weighting,
    )


def _pct(x: Optional[float]) -> str:
    return "-" if x is None else f"{100.0 * x:.1f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]],
           footer: Optional[Sequence[str]] = None) -> list[str]:
    every = [header, *rows] + ([footer] if footer else [])
    widths = [max(len(str(r[i])) for r in every) for i in range(len(header))]

    def fmt(r):
        return "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                         for i, (c, w) in enumerate(zip(r, widths)))

    rule = "-" * len(fmt(header))
    lines = [fmt(header), rule, *(fmt(r) for r in rows)]
    if footer:
        lines += [rule, fmt(footer)]
    return lines


def _csv(rows: Sequence[Sequence]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


# EDER reports

_COMPONENTS = ("fa", "me", "cf", "ol")


def _render_aggregate(report: AggregateReport, fmt: str, summary: str) -> bytes:
    show = ("macro", "micro") if summary == "both" else (summary,)
    if fmt == "json":
        data = report_to_json(report)
        for key in ("macro", "micro"):
            if key not in show:
                del data[f"{key}_eder"]
        return canonical_json.dumps(data).encode("utf-8")
    if fmt == "csv":
        rows: list[list] = [["utterance_id", "duration_s", "fa_s", "me_s", "cf_s", "ol_s", "correct_s", "eder"]]
        for uid, b in report.per_utterance:
            j = breakdown_to_json(b)
            rows.append([uid, j["duration"], *(j[c] for c in _COMPONENTS), j["correct"], repr(b.eder)])
        totals = {k: format_seconds(v) for k, v in report.component_totals.items()}
        for key in show:
            value = report.macro_eder if key == "macro" else report.micro_eder
            rows.append([f"<{key}>", totals["duration"], *(totals[c] for c in _COMPONENTS),
                         totals["correct"], repr(value)])
        return _csv(rows)
    header = ["utterance", "duration_s", "FA_s", "ME_s", "CF_s", "OL_s", "EDER%"]
    rows = [[uid, format_seconds(b.duration), *(format_seconds(getattr(b, c)) for c in _COMPONENTS),
             _pct(b.eder)] for uid, b in report.per_utterance]
    lines = _table(header, rows)
    lines.append("")
    if "macro" in show:
        lines.append(f"macro EDER%  {_pct(report.macro_eder)} +/- {_pct(report.std_eder)}")
    if "micro" in show:
        lines.append(f"micro EDER%  {_pct(report.micro_eder)}")
    lines.append(f"utterances   {len(report.per_utterance)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# transition tables

def _render_transitions(table: TransitionTable, fmt: str) -> bytes:
    rows = [(r.pattern.name, r.tn, r.cn, r.acc) for r in table.rows]
    total = table.total
    if fmt == "json":
        data = {
            "rows": [{"transition": n, "tn": tn, "cn": cn, "acc": acc} for n, tn, cn, acc in rows],
            "total": {"tn": total.tn, "cn": total.cn, "acc": total.acc},
            "per_utterance": [{"utterance_id": uid, "reference": ref.name, "hypothesis": hyp.name}
                              for uid, ref, hyp in table.per_utterance],
        }
        return canonical_json.dumps(data).encode("utf-8")
    if fmt == "csv":
        out = [["transition", "tn", "cn", "acc"]]
        out += [[n, tn, cn, "" if acc is None else repr(acc)] for n, tn, cn, acc in rows]
        out.append(["total", total.tn, total.cn, "" if total.acc is None else repr(total.acc)])
        return _csv(out)
    acc = lambda x: "-" if x is None else _pct(x) + "%"
    body = [[n, str(tn), str(cn), acc(a)] for n, tn, cn, a in rows]
    lines = _table(["Transition", "TN", "CN", "ACC"], body,
                   footer=["Total", str(total.tn), str(total.cn), acc(total.acc)])
    return ("\n".join(lines) + "\n").encode("utf-8")


# dataset stats

def _render_stats(stats: DatasetStats, fmt: str) -> bytes:
    if fmt == "json":
        data = {
            "n_utterances": stats.n_utterances,
            "total_duration_s": Fixed(format_seconds(stats.total_duration)),
            "n_speakers": stats.n_speakers,
            "emotion_proportions": dict(stats.emotion_proportions),
            "weighting": stats.weighting,
            "duration_histogram": [{"bin_s": b, "count": c} for b, c in stats.duration_histogram],
            "pattern_counts": dict(stats.pattern_counts),
            "invalid": list(stats.invalid),
        }
        return canonical_json.dumps(data).encode("utf-8")
    if fmt == "csv":
        rows = [["key", "value"],
                ["n_utterances", stats.n_utterances],
                ["total_duration_s", format_seconds(stats.total_duration)],
                ["n_speakers", "" if stats.n_speakers is None else stats.n_speakers]]
        rows += [[f"proportion_{e}", repr(p)] for e, p in stats.emotion_proportions.items()]
        rows += [[f"pattern_{n}", c] for n, c in stats.pattern_counts.items()]
        rows += [[f"duration_bin_{b}s", c] for b, c in stats.duration_histogram]
        rows += [["invalid", uid] for uid in stats.invalid]
        return _csv(rows)
    minutes = stats.total_duration / (60 * TICKS_PER_SECOND)
    lines = [
        f"Number of utterances  {stats.n_utterances}",
        f"Total duration        {format_seconds(stats.total_duration)} s ({minutes:.1f} minutes)",
        f"Number of speakers    {'-' if stats.n_speakers is None else stats.n_speakers}",
    ]
    for e, p in stats.emotion_proportions.items():
        lines.append(f"% {e.capitalize():<19} {_pct(p)}%")
    if stats.weighting == "duration":
        lines.append("(proportions weighted by duration)")
    lines.append("")
    lines.append("Duration histogram (s)")
    lines += [f"  {b:>3}-{b + 1:<3} {c}" for b, c in stats.duration_histogram]
    if stats.invalid:
        lines.append("")
        lines.append(f"Utterances without a single emotional event ({len(stats.invalid)}):")
        lines += [f"  {uid}" for uid in stats.invalid]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_agreement(report: AgreementReport, fmt: str) -> bytes:
    if fmt == "json":
        data = {"kappa": report.kappa, "n_raters": report.n_raters, "n_items": report.n_items,
                "per_utterance": [{"utterance_id": u, "kappa": k} for u, k in report.per_utterance]}
        return canonical_json.dumps(data).encode("utf-8")
    if fmt == "csv":
        rows = [["utterance_id", "kappa"], *[[u, repr(k)] for u, k in report.per_utterance],
                ["<pooled>", repr(report.kappa)]]
        return _csv(rows)
    lines = [f"{u}  {k:.4f}" for u, k in report.per_utterance]
    lines.append(f"Fleiss kappa (pooled, {report.n_raters} raters, {report.n_items} frames)  {report.kappa:.4f}")
    return ("\n".join(lines) + "\n").encode("utf-8")


Renderable = Union[EderBreakdown, AggregateReport, TransitionTable, DatasetStats, AgreementReport]


def render(report: Renderable, fmt: str = "text", summary: str = "both") -> bytes:
    """Render any report type; ``summary`` picks macro/micro/both EDER lines."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if summary not in ("macro", "micro", "both"):
        raise ValueError(f"unknown summary {summary!r}")
    if isinstance(report, EderBreakdown):
        report = aggregate([("-", report)])
    if isinstance(report, AggregateReport):
        return _render_aggregate(report, fmt, summary)
    if isinstance(report, TransitionTable):
        return _render_transitions(report, fmt)
    if isinstance(report, DatasetStats):
        return _render_stats(report, fmt)
    if isinstance(report, AgreementReport):
        return _render_agreement(report, fmt)
    raise TypeError(f"cannot render {type(report).__name__}")
