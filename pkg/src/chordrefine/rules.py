"""Deterministic stage rules for the refinement pipeline.

These are the rulebook backend's substance: candidate scoring for track
selection, the bass-note correction table, conservative key-based
replacement, and the two-step anomaly pass (detect, then repair).  All
functions are pure; the reasoner layer wraps them with bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

from .harte import (
    ChordLabel,
    MalformedLabel,
    format_chord,
    in_vocabulary,
    parse_pitch_class,
    pitch_class_name,
    pitch_class_set,
)
from .theory import (
    Key,
    diatonic_chord,
    diatonic_triads,
    format_key,
    is_diatonic,
    is_plausible,
    scale_pitch_classes,
)
from .timeline import (
    Timeline,
    co_partition,
    cover,
    label_proportion,
    majority_label,
    normalize,
    overlap_duration,
)

# Segments shorter than this read as recognizer flicker, not real changes.
FLICKER_SECONDS = 0.3

# Track keys in stage-1 tie-break priority order.
TRACK_FULL = "full"
TRACK_NODRUMS = "nodrums"
TRACK_NODRUMSVOCALS = "nodrumsvocals"
TRACK_PRIORITY = (TRACK_FULL, TRACK_NODRUMS, TRACK_NODRUMSVOCALS)

OUT_OF_KEY = "OutOfKey"
SUSPICIOUS_N = "SuspiciousN"


@dataclass(frozen=True)
class SegmentDiff:
    start: float
    end: float
    old: str
    new: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "old": self.old,
            "new": self.new,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class Anomaly:
    start: float
    end: float
    category: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "category": self.category,
            "reason": self.reason,
        }


def parse_bass_label(text: str) -> int | None:
    """Bass lab labels are bare note names or N; value is a pitch class."""
    token = text.strip()
    if token == "N":
        return None
    return parse_pitch_class(token)


def format_bass_label(pc: int | None) -> str:
    return "N" if pc is None else pitch_class_name(pc)


# ---------------------------------------------------------------- stage 1

def candidate_stats(t: Timeline) -> dict:
    """No-chord proportion, flicker rate, and the combined score.

    Lower scores are better: heavy no-chord coverage and rapid label
    flicker both mark an unusable recognition pass.
    """
    n_proportion = label_proportion(t, lambda lab: lab.is_no_chord)
    flicker = (
        sum(iv.end - iv.start for iv in t.intervals if iv.end - iv.start < FLICKER_SECONDS)
        / t.duration
    )
    return {
        "n_proportion": n_proportion,
        "flicker": flicker,
        "score": n_proportion + 0.5 * flicker,
    }


def rank_candidates(candidates: dict[str, Timeline]) -> tuple[list[str], dict[str, dict]]:
    """Order track names best-first; ties resolve by track priority."""
    stats = {name: candidate_stats(t) for name, t in candidates.items()}
    ordered = sorted(
        candidates,
        key=lambda name: (stats[name]["score"], TRACK_PRIORITY.index(name)),
    )
    return ordered, stats


# ---------------------------------------------------------------- stage 2

def bass_reliability(bass: Timeline, keys: Timeline, max_n: float, min_in_key: float) -> tuple[bool, dict]:
    """Gate before any bass-driven edit.

    The bass track must be mostly voiced (no-chord share <= max_n) and its
    sounding notes must sit in the concurrent key (>= min_in_key of the
    voiced duration).
    """
    n_proportion = label_proportion(bass, lambda pc: pc is None)
    keys_cov = cover(keys, *bass.span)
    voiced = 0.0
    in_key = 0.0
    for s, e, pc, key in co_partition(bass, keys_cov):
        if pc is None:
            continue
        voiced += e - s
        if pc in scale_pitch_classes(key) or pc == (key.tonic + 11) % 12:
            in_key += e - s
    in_key_fraction = in_key / voiced if voiced else 0.0
    reliable = n_proportion <= max_n and in_key_fraction >= min_in_key
    return reliable, {
        "n_proportion": n_proportion,
        "in_key_fraction": in_key_fraction,
        "reliable": reliable,
    }


def decide_bass_rule(chord: ChordLabel, bass_pc: int | None, key: Key) -> tuple[str, ChordLabel]:
    """One chord segment against its majority bass note.

    Rules: (a) bass is the root -> unchanged; (b) bass is another chord
    tone -> invert when the vocabulary has that inversion; (c) bass off
    the chord but on a scale degree -> diatonic triad on the bass; (d)
    bass outside the scale -> unchanged.  Segments without usable bass or
    without a chord are left alone.
    """
    if chord.is_no_chord:
        return "no-chord", chord
    if bass_pc is None:
        return "no-bass", chord
    tones = pitch_class_set(chord)
    if bass_pc in tones:
        if bass_pc == chord.root:
            return "a", chord
        inverted = ChordLabel(chord.root, chord.quality, (bass_pc - chord.root) % 12)
        if in_vocabulary(inverted):
            return "b", inverted
        return "b", chord
    if bass_pc in scale_pitch_classes(key):
        return "c", diatonic_chord(key, bass_pc)
    return "d", chord


def stage2_rewrite(
    current: Timeline,
    bass: Timeline,
    keys: Timeline,
    max_n: float,
    min_in_key: float,
) -> tuple[Timeline, list[SegmentDiff], list[dict], bool]:
    """Full bass-correction pass; returns (timeline, diffs, firings, skipped)."""
    reliable, stats = bass_reliability(bass, keys, max_n, min_in_key)
    firings: list[dict] = [{"check": "bass-reliability", **stats}]
    if not reliable:
        return current, [], firings, True

    keys_cov = cover(keys, *current.span)
    rows = []
    diffs: list[SegmentDiff] = []
    for iv in current.intervals:
        seg_dur = iv.end - iv.start
        voiced = overlap_duration(bass, iv.start, iv.end, lambda pc: pc is not None)
        bass_pc = None
        if voiced >= 0.5 * seg_dur:
            bass_pc = majority_label(bass, iv.start, iv.end, skip=lambda pc: pc is None)
        key = majority_label(keys_cov, iv.start, iv.end)
        rule, new_label = decide_bass_rule(iv.label, bass_pc, key)
        rows.append((iv.start, iv.end, new_label))
        firings.append(
            {
                "rule": rule,
                "start": iv.start,
                "end": iv.end,
                "bass": format_bass_label(bass_pc),
                "key": format_key(key),
            }
        )
        if new_label != iv.label:
            diffs.append(
                SegmentDiff(
                    iv.start,
                    iv.end,
                    format_chord(iv.label),
                    format_chord(new_label),
                    f"rule ({rule}): bass {format_bass_label(bass_pc)} in {format_key(key)}",
                )
            )
    return Timeline.from_rows(rows), diffs, firings, False


# ---------------------------------------------------------------- stage 3

def stage3_rewrite(
    current: Timeline, secondary: Timeline, keys: Timeline
) -> tuple[Timeline, list[SegmentDiff], list[dict]]:
    """Conservative reference-based replacement.

    Only where current and the runner-up track disagree, and only when the
    current label defies the key while the alternative is a diatonic
    chord, the alternative wins.  No-chord never replaces a chord.
    """
    keys_cov = cover(keys, *current.span)
    rows = []
    diffs: list[SegmentDiff] = []
    firings: list[dict] = []
    disagreements = 0
    for s, e, cur, sec in co_partition(current, secondary):
        if cur == sec:
            rows.append((s, e, cur))
            continue
        disagreements += 1
        key = majority_label(keys_cov, s, e)
        replace = (
            not is_plausible(cur, key)
            and not sec.is_no_chord
            and is_diatonic(sec, key)
        )
        if replace:
            rows.append((s, e, sec))
            diffs.append(
                SegmentDiff(
                    s,
                    e,
                    format_chord(cur),
                    format_chord(sec),
                    f"foreign to {format_key(key)}; reference is diatonic",
                )
            )
            firings.append({"rule": "replace", "start": s, "end": e, "key": format_key(key)})
        else:
            rows.append((s, e, cur))
    firings.insert(0, {"check": "disagreements", "count": disagreements})
    return normalize(Timeline.from_rows(rows)), diffs, firings


# ---------------------------------------------------------------- stage 4

def detect_anomalies(current: Timeline, keys: Timeline, n_fill_max: float) -> list[Anomaly]:
    """List suspect segments with the reason they look wrong.

    OutOfKey: a chord neither diatonic nor an allowed exception of the
    concurrent key.  SuspiciousN: a short no-chord gap flanked by the same
    chord on both sides, likely a dropout rather than silence.
    """
    keys_cov = cover(keys, *current.span)
    report: list[Anomaly] = []
    intervals = current.intervals
    for i, iv in enumerate(intervals):
        if iv.label.is_no_chord:
            if (
                0 < i < len(intervals) - 1
                and iv.end - iv.start < n_fill_max
                and intervals[i - 1].label == intervals[i + 1].label
                and not intervals[i - 1].label.is_no_chord
            ):
                report.append(
                    Anomaly(
                        iv.start,
                        iv.end,
                        SUSPICIOUS_N,
                        f"{iv.end - iv.start:.3f}s gap inside "
                        f"{format_chord(intervals[i - 1].label)}",
                    )
                )
            continue
        key = majority_label(keys_cov, iv.start, iv.end)
        if not is_plausible(iv.label, key):
            report.append(
                Anomaly(
                    iv.start,
                    iv.end,
                    OUT_OF_KEY,
                    f"{format_chord(iv.label)} is neither diatonic to "
                    f"{format_key(key)} nor a common exception",
                )
            )
    return report


def best_diatonic_substitute(chord: ChordLabel, key: Key) -> ChordLabel | None:
    """Diatonic triad sharing the most pitch classes with the chord.

    Requires an overlap of at least two; ties prefer an equal root, then
    the lower root pitch class.
    """
    tones = pitch_class_set(chord)
    best: ChordLabel | None = None
    best_rank: tuple | None = None
    for triad in diatonic_triads(key):
        overlap = len(pitch_class_set(triad) & tones)
        if overlap < 2:
            continue
        rank = (-overlap, 0 if triad.root == chord.root else 1, triad.root)
        if best_rank is None or rank < best_rank:
            best, best_rank = triad, rank
    return best


def apply_anomalies(
    current: Timeline, report: list[Anomaly], keys: Timeline
) -> tuple[Timeline, list[SegmentDiff], list[dict], list[Anomaly]]:
    """Repair a detected report; returns (timeline, diffs, firings, misses).

    Out-of-key chords get their closest diatonic triad first; no-chord
    gaps are then filled from their (possibly just corrected) flanks.
    Entries whose intervals no longer exist in the timeline are returned
    as misses for the caller to reject.
    """
    keys_cov = cover(keys, *current.span)
    index = {(iv.start, iv.end): i for i, iv in enumerate(current.intervals)}
    rows = [(iv.start, iv.end, iv.label) for iv in current.intervals]
    diffs: list[SegmentDiff] = []
    firings: list[dict] = []
    misses: list[Anomaly] = []

    fills: list[tuple[int, Anomaly]] = []
    for anomaly in report:
        i = index.get((anomaly.start, anomaly.end))
        if i is None:
            misses.append(anomaly)
            continue
        if anomaly.category == OUT_OF_KEY:
            s, e, old = rows[i]
            key = majority_label(keys_cov, s, e)
            substitute = best_diatonic_substitute(old, key)
            if substitute is None:
                firings.append({"rule": "out-of-key-kept", "start": s, "end": e})
                continue
            rows[i] = (s, e, substitute)
            diffs.append(
                SegmentDiff(
                    s, e, format_chord(old), format_chord(substitute), anomaly.reason
                )
            )
            firings.append({"rule": "out-of-key-replaced", "start": s, "end": e})
        elif anomaly.category == SUSPICIOUS_N:
            fills.append((i, anomaly))
        else:
            misses.append(anomaly)

    for i, anomaly in fills:
        s, e, old = rows[i]
        left, right = rows[i - 1][2], rows[i + 1][2]
        if left != right or left.is_no_chord:
            firings.append({"rule": "fill-flanks-diverged", "start": s, "end": e})
            continue
        rows[i] = (s, e, left)
        diffs.append(
            SegmentDiff(s, e, format_chord(old), format_chord(left), anomaly.reason)
        )
        firings.append({"rule": "no-chord-filled", "start": s, "end": e})

    return normalize(Timeline.from_rows(rows)), diffs, firings, misses
