"""Time-aligned label sequences and the three-column lab text format.

A lab file holds one interval per line, ``<start> <end> <label>`` in
seconds, with ``#`` comment lines ignored.  A :class:`Timeline` is the
parsed form: sorted, non-overlapping, gap-free intervals over a positive
span.  Labels are opaque to this module (chord strings, parsed chords,
keys, pitch classes, or beat positions all work).

Boundaries closer than 1 ms are treated as coincident and snapped to
their midpoint at parse time; larger gaps are filled according to a
caller-chosen policy, larger overlaps are errors.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Any, Callable, Iterable

BOUNDARY_TOLERANCE = 1e-3
_SPAN_EPS = 1e-9

# Gap policy sentinel: stretch the previous interval over the gap (used for
# key tracks, where a key stays in force until the next estimate).
EXTEND_PREVIOUS = object()


class LabError(ValueError):
    """Base for lab parsing failures; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MalformedLine(LabError):
    pass


class NonMonotonicTime(LabError):
    pass


class LabelParseError(LabError):
    def __init__(self, line_no: int, cause: Exception):
        super().__init__(line_no, f"bad label ({cause})")
        self.cause = cause


class UnfilledGap(LabError):
    pass


class EmptyTimeline(ValueError):
    pass


class InvalidTimeline(ValueError):
    pass


class SpanMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LabeledInterval:
    start: float
    end: float
    label: Any


@dataclass(frozen=True)
class Timeline:
    """Ordered, contiguous labeled intervals; immutable once constructed."""

    intervals: tuple[LabeledInterval, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        if not self.intervals:
            raise EmptyTimeline("timeline has no intervals")
        prev_end = None
        for iv in self.intervals:
            if not (math.isfinite(iv.start) and math.isfinite(iv.end)):
                raise InvalidTimeline(f"non-finite interval {iv}")
            if not iv.end > iv.start:
                raise InvalidTimeline(f"non-positive interval {iv}")
            if prev_end is not None and iv.start != prev_end:
                raise InvalidTimeline(
                    f"discontinuity at {prev_end} -> {iv.start}"
                )
            prev_end = iv.end

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[float, float, Any]]) -> "Timeline":
        return cls(tuple(LabeledInterval(s, e, lab) for s, e, lab in rows))

    @property
    def span(self) -> tuple[float, float]:
        return self.intervals[0].start, self.intervals[-1].end

    @property
    def duration(self) -> float:
        return self.intervals[-1].end - self.intervals[0].start

    def label_at(self, time: float) -> Any:
        """Label of the interval containing ``time`` (end-exclusive except
        at the final boundary)."""
        start, end = self.span
        if not start <= time <= end:
            raise ValueError(f"time {time} outside span ({start}, {end})")
        starts = [iv.start for iv in self.intervals]
        idx = bisect_right(starts, time) - 1
        if idx >= len(self.intervals):
            idx = len(self.intervals) - 1
        return self.intervals[max(idx, 0)].label

    def map_labels(self, fn: Callable[[Any], Any]) -> "Timeline":
        return Timeline(
            tuple(LabeledInterval(iv.start, iv.end, fn(iv.label)) for iv in self.intervals)
        )


def parse_lab(
    text: str,
    label_parser: Callable[[str], Any] = str,
    gap_fill: Any = "N",
) -> Timeline:
    """Parse lab text into a Timeline.

    ``label_parser`` converts the third field of each row; its exceptions
    surface as :class:`LabelParseError` with the line number.  ``gap_fill``
    controls gaps wider than 1 ms: a string is parsed like any label and
    inserted, :data:`EXTEND_PREVIOUS` stretches the preceding interval,
    and None makes gaps an error (:class:`UnfilledGap`).
    """
    rows: list[list] = []  # [start, end, label, line_no]
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 3:
            raise MalformedLine(line_no, f"expected 3 fields, got {len(fields)}")
        try:
            start, end = float(fields[0]), float(fields[1])
        except ValueError:
            raise MalformedLine(line_no, "times must be decimal seconds") from None
        if not (math.isfinite(start) and math.isfinite(end)):
            raise MalformedLine(line_no, "times must be finite")
        if end <= start:
            raise MalformedLine(line_no, f"end {end} not after start {start}")
        try:
            label = label_parser(fields[2])
        except Exception as exc:
            raise LabelParseError(line_no, exc) from exc
        rows.append([start, end, label, line_no])

    if not rows:
        raise EmptyTimeline("no intervals in lab text")

    fill_label = None
    if gap_fill is not None and gap_fill is not EXTEND_PREVIOUS:
        fill_label = label_parser(gap_fill) if isinstance(gap_fill, str) else gap_fill

    repaired: list[list] = [rows[0]]
    for row in rows[1:]:
        prev = repaired[-1]
        gap = row[0] - prev[1]
        if gap < -BOUNDARY_TOLERANCE:
            raise NonMonotonicTime(
                row[3], f"start {row[0]} overlaps previous end {prev[1]}"
            )
        if abs(gap) <= BOUNDARY_TOLERANCE:
            mid = (prev[1] + row[0]) / 2.0
            prev[1] = mid
            row[0] = mid
            if row[1] <= row[0]:
                raise MalformedLine(row[3], "interval vanished after boundary snap")
        elif gap_fill is EXTEND_PREVIOUS:
            prev[1] = row[0]
        elif gap_fill is None:
            raise UnfilledGap(row[3], f"gap of {gap:.6f}s before this line")
        else:
            repaired.append([prev[1], row[0], fill_label, row[3]])
        repaired.append(row)

    return Timeline.from_rows((s, e, lab) for s, e, lab, _ in repaired)


def write_lab(t: Timeline, label_printer: Callable[[Any], str] = str) -> str:
    """Serialize with fixed 6-decimal times; inverse of parse_lab to 1 us."""
    lines = [
        f"{iv.start:.6f} {iv.end:.6f} {label_printer(iv.label)}"
        for iv in t.intervals
    ]
    return "\n".join(lines) + "\n"


def normalize(t: Timeline) -> Timeline:
    """Merge adjacent intervals carrying equal labels; idempotent."""
    merged: list[LabeledInterval] = [t.intervals[0]]
    for iv in t.intervals[1:]:
        last = merged[-1]
        if iv.label == last.label:
            merged[-1] = LabeledInterval(last.start, iv.end, last.label)
        else:
            merged.append(iv)
    return Timeline(tuple(merged))


def co_partition(a: Timeline, b: Timeline) -> list[tuple[float, float, Any, Any]]:
    """Common refinement of two equal-span timelines.

    Returns (start, end, label_a, label_b) segments whose durations sum to
    the shared span length.
    """
    if (
        abs(a.span[0] - b.span[0]) > _SPAN_EPS
        or abs(a.span[1] - b.span[1]) > _SPAN_EPS
    ):
        raise SpanMismatch(f"spans differ: {a.span} vs {b.span}")

    bounds = sorted(
        {iv.start for iv in a.intervals}
        | {iv.end for iv in a.intervals}
        | {iv.start for iv in b.intervals}
        | {iv.end for iv in b.intervals}
    )
    out = []
    ia = ib = 0
    for s, e in zip(bounds, bounds[1:]):
        if e <= s:
            continue
        while a.intervals[ia].end <= s and ia < len(a.intervals) - 1:
            ia += 1
        while b.intervals[ib].end <= s and ib < len(b.intervals) - 1:
            ib += 1
        out.append((s, e, a.intervals[ia].label, b.intervals[ib].label))
    return out


def label_proportion(t: Timeline, predicate: Callable[[Any], bool]) -> float:
    """Duration-weighted fraction of the span whose label satisfies predicate."""
    matched = sum(iv.end - iv.start for iv in t.intervals if predicate(iv.label))
    return matched / t.duration


def clip(t: Timeline, start: float, end: float) -> Timeline:
    """Restrict to [start, end]; raises SpanMismatch when nothing overlaps."""
    rows = []
    for iv in t.intervals:
        s, e = max(iv.start, start), min(iv.end, end)
        if e > s:
            rows.append((s, e, iv.label))
    if not rows:
        raise SpanMismatch(f"no overlap between {t.span} and ({start}, {end})")
    return Timeline.from_rows(rows)


def pad(t: Timeline, start: float, end: float, fill_label: Any) -> Timeline:
    """Extend the span to [start, end], covering new time with fill_label."""
    rows = [(iv.start, iv.end, iv.label) for iv in t.intervals]
    if start < rows[0][0]:
        rows.insert(0, (start, rows[0][0], fill_label))
    if end > rows[-1][1]:
        rows.append((rows[-1][1], end, fill_label))
    return Timeline.from_rows(rows)


def cover(t: Timeline, start: float, end: float) -> Timeline:
    """Clip to [start, end] and stretch the edge intervals to reach it."""
    clipped = clip(t, start, end)
    rows = [(iv.start, iv.end, iv.label) for iv in clipped.intervals]
    rows[0] = (start, rows[0][1], rows[0][2])
    rows[-1] = (rows[-1][0], end, rows[-1][2])
    return Timeline.from_rows(rows)


def majority_label(
    t: Timeline, start: float, end: float, skip: Callable[[Any], bool] | None = None
) -> Any | None:
    """Duration-weighted majority label within a window.

    Labels for which ``skip`` returns True are ignored.  Returns None when
    nothing overlaps or everything was skipped.  Ties resolve to the label
    reaching the maximum first in timeline order.
    """
    totals: dict[Any, float] = {}
    order: list[Any] = []
    for iv in t.intervals:
        s, e = max(iv.start, start), min(iv.end, end)
        if e <= s:
            continue
        if skip is not None and skip(iv.label):
            continue
        if iv.label not in totals:
            totals[iv.label] = 0.0
            order.append(iv.label)
        totals[iv.label] += e - s
    if not totals:
        return None
    best = order[0]
    for label in order[1:]:
        if totals[label] > totals[best]:
            best = label
    return best


def overlap_duration(
    t: Timeline, start: float, end: float, predicate: Callable[[Any], bool]
) -> float:
    """Total time within [start, end] whose label satisfies predicate."""
    total = 0.0
    for iv in t.intervals:
        s, e = max(iv.start, start), min(iv.end, end)
        if e > s and predicate(iv.label):
            total += e - s
    return total
