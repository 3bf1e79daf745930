"""Orchestration of the five refinement stages over one song.

A song bundle holds three chord recognition passes (full mix, drums
removed, drums and vocals removed), a bass pitch-class track, local key
estimates, optional beats, and an optional reference for evaluation.
Stages run strictly in order: track selection, bass correction,
key-based correction against the runner-up, anomaly detection plus
repair, and beat-grid alignment.  Stages 1-4 never move boundaries; only
stage 5 does.  Every stage leaves an audit trace with the input digest,
per-segment diffs, and the reasoner transcript.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .beat_align import build_grid, snap_timeline
from .harte import NO_CHORD, format_chord, parse_chord
from .reasoners import LLMReasoner, Revision, RulebookReasoner, TrackChoice
from .rules import (
    Anomaly,
    SegmentDiff,
    TRACK_FULL,
    TRACK_NODRUMS,
    TRACK_NODRUMSVOCALS,
    detect_anomalies,
    parse_bass_label,
)
from .theory import parse_key
from .timeline import (
    EXTEND_PREVIOUS,
    SpanMismatch,
    Timeline,
    clip,
    co_partition,
    cover,
    pad,
    parse_lab,
    write_lab,
)

SPAN_ALIGN_TOLERANCE = 0.5

STAGE_NAMES = {
    1: "source_selection",
    2: "bass_correction",
    3: "key_correction",
    4: "anomaly_correction",
    5: "beat_alignment",
}


class MissingTrack(ValueError):
    pass


class ReportMismatch(ValueError):
    pass


class StageFailure(RuntimeError):
    """A stage blew up; carries which one."""

    def __init__(self, stage: int, cause: Exception):
        super().__init__(f"stage {stage} ({STAGE_NAMES[stage]}): {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SongBundle:
    acr_full: Timeline | None
    acr_nodrums: Timeline | None
    acr_nodrumsvocals: Timeline | None
    bass: Timeline
    keys: Timeline
    beats: Timeline | None = None
    reference: Timeline | None = None
    song_id: str = ""

    def candidates(self) -> dict[str, Timeline]:
        tracks = {
            TRACK_FULL: self.acr_full,
            TRACK_NODRUMS: self.acr_nodrums,
            TRACK_NODRUMSVOCALS: self.acr_nodrumsvocals,
        }
        missing = [name for name, t in tracks.items() if t is None]
        if missing:
            raise MissingTrack(f"missing ACR track(s): {', '.join(missing)}")
        return tracks


@dataclass(frozen=True)
class RefinementConfig:
    backend: str = "rulebook"
    stages: tuple[int, ...] = (1, 2, 3, 4, 5)
    beat_threshold: float = 0.125
    bass_max_n_proportion: float = 0.5
    bass_min_in_key: float = 0.7
    n_fill_max_duration: float = 1.0
    model: str = "gpt-4o"
    temperature: float = 0.0
    retry_count: int = 2
    max_in_flight: int = 4
    endpoint: str = ""
    api_key_env: str = "CHORDREFINE_API_KEY"
    fixture: str = ""
    fixture_mode: str = "replay"

    def __post_init__(self):
        if self.backend not in ("rulebook", "llm"):
            raise ValueError(f"unknown backend {self.backend!r}")
        for name in ("beat_threshold", "bass_max_n_proportion", "bass_min_in_key", "n_fill_max_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.retry_count < 0:
            raise ValueError("retry_count must be >= 0")
        bad = [s for s in self.stages if s not in STAGE_NAMES]
        if bad:
            raise ValueError(f"unknown stage number(s) {bad}")


@dataclass
class StageTrace:
    stage: int
    name: str
    input_digest: str
    output: Timeline
    diffs: list[SegmentDiff] = field(default_factory=list)
    transcript: list = field(default_factory=list)
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "name": self.name,
            "input_digest": self.input_digest,
            "skipped": self.skipped,
            "diffs": [d.to_dict() for d in self.diffs],
            "transcript": self.transcript,
            "output_lab": write_lab(self.output, format_chord),
        }


def timeline_digest(t: Timeline) -> str:
    return hashlib.sha256(write_lab(t, format_chord).encode()).hexdigest()[:16]


def build_reasoner(config: RefinementConfig, transport=None):
    """Construct the configured backend; LLM transports are injectable."""
    if config.backend == "rulebook":
        return RulebookReasoner(config)
    from .llm_gateway import ChatClient, FixtureTransport, HttpTransport

    if transport is None:
        if config.fixture:
            inner = HttpTransport(config.endpoint, config.api_key_env) if config.fixture_mode == "record" else None
            transport = FixtureTransport(config.fixture, config.fixture_mode, inner)
        else:
            transport = HttpTransport(config.endpoint, config.api_key_env)
    client = ChatClient(transport, max_in_flight=config.max_in_flight)
    return LLMReasoner(client, config)


def load_song_bundle(paths: Mapping[str, str | Path], song_id: str = "") -> SongBundle:
    """Read a song's lab files and align every track to the full-mix span."""

    def read(key):
        return Path(paths[key]).read_text()

    acr = {}
    for key in ("acr_full", "acr_nodrums", "acr_nodrumsvocals"):
        if key not in paths:
            raise MissingTrack(f"manifest entry lacks {key}")
        acr[key] = parse_lab(read(key), label_parser=parse_chord, gap_fill="N")

    bass = parse_lab(read("bass"), label_parser=parse_bass_label, gap_fill="N")
    keys = parse_lab(read("keys"), label_parser=parse_key, gap_fill=EXTEND_PREVIOUS)
    beats = None
    if paths.get("beats"):
        beats = parse_lab(read("beats"), gap_fill=None)
    reference = None
    if paths.get("reference"):
        reference = parse_lab(read("reference"), label_parser=parse_chord, gap_fill="N")

    target = acr["acr_full"].span
    for name, t in {**acr, "bass": bass}.items():
        if abs(t.span[0] - target[0]) > SPAN_ALIGN_TOLERANCE or abs(
            t.span[1] - target[1]
        ) > SPAN_ALIGN_TOLERANCE:
            raise SpanMismatch(
                f"{name} span {t.span} too far from full-mix span {target}"
            )

    def align_chords(t):
        return pad(clip(t, *target), *target, NO_CHORD)

    def align_bass(t):
        return pad(clip(t, *target), *target, None)

    return SongBundle(
        acr_full=acr["acr_full"],
        acr_nodrums=align_chords(acr["acr_nodrums"]),
        acr_nodrumsvocals=align_chords(acr["acr_nodrumsvocals"]),
        bass=align_bass(bass),
        keys=cover(keys, *target),
        beats=beats,
        reference=reference,
        song_id=song_id,
    )


def _bundle_digest(bundle: SongBundle) -> str:
    joined = "|".join(timeline_digest(t) for t in bundle.candidates().values())
    return hashlib.sha256(joined.encode()).hexdigest()[:16]


def _diffs_from_comparison(before: Timeline, after: Timeline, reason: str) -> list[SegmentDiff]:
    diffs = []
    for s, e, old, new in co_partition(before, after):
        if old != new:
            diffs.append(SegmentDiff(s, e, format_chord(old), format_chord(new), reason))
    return diffs


def _trace_from_revision(stage: int, current: Timeline, revision: Revision) -> StageTrace:
    diffs = revision.diffs
    if diffs is None:
        diffs = _diffs_from_comparison(current, revision.timeline, "model revision")
    return StageTrace(
        stage=stage,
        name=STAGE_NAMES[stage],
        input_digest=timeline_digest(current),
        output=revision.timeline,
        diffs=diffs,
        transcript=revision.transcript,
        skipped=revision.skipped,
    )


def _passthrough_trace(stage: int, current: Timeline, note: str) -> StageTrace:
    return StageTrace(
        stage=stage,
        name=STAGE_NAMES[stage],
        input_digest=timeline_digest(current),
        output=current,
        transcript=[{"note": note}],
        skipped=True,
    )


def stage1_select(bundle: SongBundle, reasoner) -> tuple[Timeline, Timeline, StageTrace]:
    """Pick the primary and runner-up recognition pass; labels untouched."""
    candidates = bundle.candidates()
    choice: TrackChoice = reasoner.choose_tracks(candidates)
    primary = candidates[choice.primary]
    secondary = candidates[choice.secondary]
    trace = StageTrace(
        stage=1,
        name=STAGE_NAMES[1],
        input_digest=_bundle_digest(bundle),
        output=primary,
        transcript=list(choice.transcript)
        + [{"primary": choice.primary, "secondary": choice.secondary}],
        skipped=choice.skipped,
    )
    return primary, secondary, trace


def stage2_bass_correct(
    current: Timeline, bundle: SongBundle, reasoner, config: RefinementConfig
) -> tuple[Timeline, StageTrace]:
    keys = cover(bundle.keys, *current.span)
    revision = reasoner.correct_bass(current, bundle.bass, keys)
    return revision.timeline, _trace_from_revision(2, current, revision)


def stage3_key_correct(
    current: Timeline, secondary: Timeline, keys: Timeline, reasoner, config: RefinementConfig
) -> tuple[Timeline, StageTrace]:
    keys = cover(keys, *current.span)
    revision = reasoner.correct_key(current, secondary, keys)
    return revision.timeline, _trace_from_revision(3, current, revision)


def stage4_detect_anomalies(
    current: Timeline, keys: Timeline, config: RefinementConfig
) -> list[Anomaly]:
    return detect_anomalies(current, cover(keys, *current.span), config.n_fill_max_duration)


def stage4_apply(
    current: Timeline,
    report: list[Anomaly],
    keys: Timeline,
    reasoner,
    config: RefinementConfig,
) -> tuple[Timeline, StageTrace]:
    keys_cov = cover(keys, *current.span)
    index = {(iv.start, iv.end) for iv in current.intervals}
    stray = [a for a in report if (a.start, a.end) not in index]
    if stray:
        raise ReportMismatch(
            f"{len(stray)} report entr(ies) reference intervals not in the timeline"
        )
    revision = reasoner.fix_anomalies(current, report, keys_cov)
    trace = _trace_from_revision(4, current, revision)
    trace.transcript = [{"report": [a.to_dict() for a in report]}] + list(trace.transcript)
    return revision.timeline, trace


def run_pipeline(
    bundle: SongBundle, config: RefinementConfig, reasoner=None
) -> tuple[Timeline, list[StageTrace]]:
    """Run stages 1-5 in order; disabled stages pass through, skipped."""
    if reasoner is None:
        reasoner = build_reasoner(config)
    traces: list[StageTrace] = []
    enabled = set(config.stages)

    def guard(stage, fn, *args):
        try:
            return fn(*args)
        except Exception as exc:
            raise StageFailure(stage, exc) from exc

    if 1 in enabled:
        primary, secondary, trace = guard(1, stage1_select, bundle, reasoner)
    else:
        candidates = bundle.candidates()
        primary, secondary = candidates[TRACK_FULL], candidates[TRACK_NODRUMS]
        trace = _passthrough_trace(1, primary, "stage disabled; defaulted to full mix")
    traces.append(trace)
    current = primary

    if 2 in enabled:
        current, trace = guard(2, stage2_bass_correct, current, bundle, reasoner, config)
    else:
        trace = _passthrough_trace(2, current, "stage disabled")
    traces.append(trace)

    if 3 in enabled:
        current, trace = guard(
            3, stage3_key_correct, current, secondary, bundle.keys, reasoner, config
        )
    else:
        trace = _passthrough_trace(3, current, "stage disabled")
    traces.append(trace)

    if 4 in enabled:
        def run_stage4(current_):
            report = stage4_detect_anomalies(current_, bundle.keys, config)
            return stage4_apply(current_, report, bundle.keys, reasoner, config)

        current, trace = guard(4, run_stage4, current)
    else:
        trace = _passthrough_trace(4, current, "stage disabled")
    traces.append(trace)

    if 5 in enabled and bundle.beats is not None:
        def run_stage5(current_):
            grid = build_grid(bundle.beats)
            snapped, report = snap_timeline(current_, grid, config.beat_threshold)
            trace = StageTrace(
                stage=5,
                name=STAGE_NAMES[5],
                input_digest=timeline_digest(current_),
                output=snapped,
                transcript=[{"snap_report": report.to_dict()}],
                skipped=report.skipped,
            )
            return snapped, trace

        current, trace = guard(5, run_stage5, current)
    else:
        note = "no beat track" if 5 in enabled else "stage disabled"
        trace = _passthrough_trace(5, current, note)
    traces.append(trace)

    return current, traces
