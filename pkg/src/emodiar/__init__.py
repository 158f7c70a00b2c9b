"""Speech emotion diarization scoring (EDER) and dataset tooling."""

from .agreement import RatingTable, build_rating_table, corpus_kappa, fleiss_kappa
from .annotation_io import (
    read_frame_hypothesis,
    read_hypothesis,
    read_reference,
    read_rttm,
    read_timelines,
    write_reference,
    write_report,
)
from .framing import (
    FrameSequence,
    FrameSpec,
    TransitionPattern,
    apply_confidence_mask,
    classify_transition,
    collapse_runs,
    frames_to_intervals,
    intervals_to_frames,
    transition_accuracy,
)
from .metrics import AggregateReport, EderBreakdown, InstantCategory, aggregate, classify_instant, eder
from .reporting import dataset_stats, render
from .timeline import (
    EmotionLabel,
    Kind,
    Segment,
    Timeline,
    boundary_sweep,
    format_seconds,
    label_at,
    normalize,
    to_seconds,
    to_ticks,
)

__version__ = "0.1.0"
