import random

import pytest

from chordrefine.beat_align import (
    BadPositionLabel,
    TooFewBeats,
    build_grid,
    grid_from_beats,
    snap_timeline,
)
from chordrefine.timeline import Timeline


def beats_tl(*rows):
    return Timeline.from_rows(rows)


def chords_tl(*rows):
    return Timeline.from_rows(rows)


def test_grid_subdivides_beats_in_four():
    grid = build_grid(beats_tl((0.0, 0.5, "1"), (0.5, 1.0, "2")))
    assert grid.sixteenths == (
        0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0,
    )
    assert [t for t, _ in grid.beats] == [0.0, 0.5, 1.0]


def test_single_beat_rejected():
    with pytest.raises(TooFewBeats):
        grid_from_beats([(0.0, 1)])


def test_bad_position_label():
    with pytest.raises(BadPositionLabel):
        build_grid(beats_tl((0.0, 0.5, "5")))
    with pytest.raises(BadPositionLabel):
        build_grid(beats_tl((0.0, 0.5, "downbeat")))


def test_snap_moves_to_nearest_grid_time():
    grid = build_grid(beats_tl((0.0, 0.5, "1"), (0.5, 1.0, "2")))
    chords = chords_tl((0.0, 0.20, "C:maj"), (0.20, 1.0, "G:maj"))
    snapped, report = snap_timeline(chords, grid, threshold=0.125)
    assert snapped.intervals[0].end == 0.25
    assert report.moved == 1
    assert not report.skipped


def test_snap_leaves_on_grid_boundary():
    grid = build_grid(beats_tl((0.0, 0.5, "1"), (0.5, 1.0, "2")))
    chords = chords_tl((0.0, 0.25, "C:maj"), (0.25, 1.0, "G:maj"))
    snapped, report = snap_timeline(chords, grid, threshold=0.125)
    assert snapped == chords
    assert report.moved == 0
    assert report.max_displacement == 0.0


def test_snap_respects_threshold():
    grid = build_grid(beats_tl((0.0, 0.5, "1"), (0.5, 1.0, "2")))
    chords = chords_tl((0.0, 0.20, "C:maj"), (0.20, 1.0, "G:maj"))
    snapped, report = snap_timeline(chords, grid, threshold=0.01)
    assert snapped == chords
    assert report.held == 1


def test_global_skip_when_most_boundaries_violate():
    # Beats every 1 s; all interior boundaries sit maximally off-grid.
    grid = build_grid(
        beats_tl((0.0, 1.0, "1"), (1.0, 2.0, "2"), (2.0, 3.0, "3"), (3.0, 4.0, "4"))
    )
    chords = chords_tl(
        (0.0, 1.125, "C:maj"),
        (1.125, 2.125, "G:maj"),
        (2.125, 3.125, "A:min"),
        (3.125, 4.0, "F:maj"),
    )
    snapped, report = snap_timeline(chords, grid, threshold=0.05)
    assert snapped == chords
    assert report.skipped


def test_tie_breaks_to_earlier_grid_time():
    grid = build_grid(beats_tl((0.0, 1.0, "1")))  # grid step 0.25
    chords = chords_tl((0.0, 0.125, "C:maj"), (0.125, 1.0, "G:maj"))
    snapped, _ = snap_timeline(chords, grid, threshold=0.5)
    assert snapped.intervals[0].end == 0.0 or snapped.intervals[0].start == 0.0
    # 0.125 is equidistant from 0.0 and 0.25; the earlier time wins, which
    # collapses the first segment entirely.
    assert snapped.intervals[0].label == "G:maj"


def test_boundaries_outside_beat_range_never_move():
    grid = build_grid(beats_tl((1.0, 1.5, "1"), (1.5, 2.0, "2")))
    chords = chords_tl((0.0, 0.4, "C:maj"), (0.4, 3.0, "G:maj"))
    snapped, report = snap_timeline(chords, grid, threshold=1.0)
    assert snapped == chords
    assert report.moved == 0


def _random_case(rng):
    n_beats = rng.randint(3, 12)
    beat = rng.uniform(0.3, 1.0)
    span = n_beats * beat
    grid = grid_from_beats([(i * beat, i % 4 + 1) for i in range(n_beats + 1)])
    n_segments = rng.randint(2, 12)
    cuts = sorted(rng.uniform(0.01, span - 0.01) for _ in range(n_segments - 1))
    bounds = [0.0, *cuts, span]
    rows = [
        (s, e, f"L{i}")
        for i, (s, e) in enumerate(zip(bounds, bounds[1:]))
        if e > s
    ]
    chords = Timeline.from_rows(rows)
    threshold = rng.uniform(0.01, 0.3)
    return chords, grid, threshold


def test_randomized_idempotence_and_displacement_bound():
    rng = random.Random(42)
    for _ in range(300):
        chords, grid, threshold = _random_case(rng)
        once, report = snap_timeline(chords, grid, threshold)
        twice, _ = snap_timeline(once, grid, threshold)
        assert twice == once
        assert report.max_displacement <= threshold + 1e-12
        start, end = chords.span
        assert once.span == (start, end)
