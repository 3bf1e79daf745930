"""Quantize chord boundaries onto a sixteenth-note grid from tracked beats.

Each tracked beat is a quarter note; consecutive beats are subdivided in
four to get the sixteenth grid.  Interior chord boundaries move to the
nearest grid time when the displacement stays under a threshold; if more
than half the boundaries would have to move further than that, beat
tracking is presumed broken and the whole pass is skipped.

Beat lab rows are read as instants: the start field is the beat time,
the end field the next beat's time, and the label its metrical position
(1-4).  Position labels are validated but do not affect snapping.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

from .timeline import LabeledInterval, Timeline, normalize


class TooFewBeats(ValueError):
    pass


class BadPositionLabel(ValueError):
    pass


@dataclass(frozen=True)
class BeatGrid:
    beats: tuple[tuple[float, int], ...]
    sixteenths: tuple[float, ...]


@dataclass(frozen=True)
class SnapReport:
    """Outcome of one snapping pass.

    ``moved``/``held`` count boundaries snapped vs left in place because
    their displacement exceeded the threshold; ``skipped`` marks the
    whole pass being abandoned.
    """

    moved: int = 0
    held: int = 0
    max_displacement: float = 0.0
    mean_displacement: float = 0.0
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "moved": self.moved,
            "held": self.held,
            "max_displacement": self.max_displacement,
            "mean_displacement": self.mean_displacement,
            "skipped": self.skipped,
        }


def grid_from_beats(beats: list[tuple[float, int]]) -> BeatGrid:
    """Build the sixteenth grid from (time, position) beat instants."""
    if len(beats) < 2:
        raise TooFewBeats(f"{len(beats)} beat(s); need at least 2")
    for _, position in beats:
        if position not in (1, 2, 3, 4):
            raise BadPositionLabel(f"position {position} outside 1-4")
    sixteenths: list[float] = []
    for (t0, _), (t1, _) in zip(beats, beats[1:]):
        if t1 <= t0:
            raise TooFewBeats(f"beat times not increasing at {t0}")
        step = (t1 - t0) / 4.0
        sixteenths.extend(t0 + k * step for k in range(4))
    sixteenths.append(beats[-1][0])
    return BeatGrid(tuple(beats), tuple(sixteenths))


def build_grid(beat_timeline: Timeline) -> BeatGrid:
    """Derive the sixteenth grid from a beat timeline.

    Rows encode instants, so N rows give N+1 beat times; the final beat's
    position is inferred cyclically (it is unused by snapping).
    """
    beats: list[tuple[float, int]] = []
    for iv in beat_timeline.intervals:
        try:
            position = int(str(iv.label).strip())
        except ValueError:
            raise BadPositionLabel(f"position {iv.label!r} is not an integer") from None
        beats.append((iv.start, position))
    last_time = beat_timeline.intervals[-1].end
    beats.append((last_time, beats[-1][1] % 4 + 1))
    return grid_from_beats(beats)


def _nearest(grid: tuple[float, ...], t: float) -> float:
    """Closest grid time; equidistant neighbors resolve to the earlier one."""
    idx = bisect_left(grid, t)
    if idx == 0:
        return grid[0]
    if idx == len(grid):
        return grid[-1]
    before, after = grid[idx - 1], grid[idx]
    return before if t - before <= after - t else after


def snap_timeline(
    chords: Timeline, grid: BeatGrid, threshold: float = 0.125
) -> tuple[Timeline, SnapReport]:
    """Move interior chord boundaries onto the grid.

    The timeline's own start and end never move, nor do boundaries outside
    the tracked beat range.  Returns the input unchanged with
    ``skipped=True`` when over half the in-range boundaries would exceed
    the threshold, or when there is nothing usable to snap.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not grid.sixteenths or len(chords.intervals) < 2:
        return chords, SnapReport(skipped=False)

    lo, hi = grid.sixteenths[0], grid.sixteenths[-1]
    boundaries = [iv.start for iv in chords.intervals[1:]]

    mapped: dict[float, float] = {}
    displacements: list[float] = []
    held = 0
    in_range = 0
    for b in boundaries:
        if not lo <= b <= hi:
            continue
        in_range += 1
        target = _nearest(grid.sixteenths, b)
        displacement = abs(target - b)
        if displacement <= threshold:
            mapped[b] = target
            if target != b:
                displacements.append(displacement)
        else:
            held += 1

    if in_range and held / in_range > 0.5:
        return chords, SnapReport(held=held, skipped=True)

    start, end = chords.span
    new_bounds = [start] + [mapped.get(b, b) for b in boundaries] + [end]
    rows = []
    for iv, s, e in zip(chords.intervals, new_bounds, new_bounds[1:]):
        if e > s:
            rows.append((s, e, iv.label))
    snapped = normalize(Timeline.from_rows(rows))

    moved = sum(1 for b, t in mapped.items() if t != b)
    report = SnapReport(
        moved=moved,
        held=held,
        max_displacement=max(displacements, default=0.0),
        mean_displacement=(sum(displacements) / len(displacements)) if displacements else 0.0,
        skipped=False,
    )
    return snapped, report
