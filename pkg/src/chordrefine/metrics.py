"""Duration-weighted framewise chord evaluation.

Seven comparison rules, each applied over the common refinement of a
reference and an estimate timeline:

  - root:      root pitch classes equal
  - thirds:    root and third degree equal
  - majmin:    both qualities reduced to maj/min triads; references that
               do not reduce are excluded
  - triads:    root, third, and fifth equal
  - sevenths:  root, third, fifth, and seventh equal; references outside
               the maj/min/maj7/min7/7 family are excluded
  - tetrads:   quality truncated at the seventh equal (no exclusions)
  - mirex:     at least three shared pitch classes

No-chord matches only no-chord and is never excluded.  Scores are the
fraction of non-excluded reference time judged correct; a metric whose
evaluated duration is zero has no score.

Degrees come from the quality templates: the third is the interval in
{3,4}, the fifth in {6,7,8}, and the seventh in {9,10,11} (a minor or
major seventh wins over a diminished one when both appear, as in 13th
chords).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .harte import NO_CHORD, ChordLabel, QUALITY_INTERVALS, pitch_class_set
from .timeline import Timeline, clip, co_partition, pad

METRIC_NAMES = ("root", "thirds", "majmin", "triads", "sevenths", "tetrads", "mirex")

# Column order used by reports.
REPORT_COLUMNS = ("mirex", "root", "majmin", "thirds", "triads", "sevenths", "tetrads")


class Comparison(Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    EXCLUDED = "excluded"


class EmptyReference(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


def _third(quality: str) -> int | None:
    intervals = QUALITY_INTERVALS[quality]
    if 4 in intervals:
        return 4
    if 3 in intervals:
        return 3
    return None


def _fifth(quality: str) -> int | None:
    intervals = QUALITY_INTERVALS[quality]
    for semis in (7, 6, 8):
        if semis in intervals:
            return semis
    return None


def _seventh(quality: str) -> int | None:
    intervals = QUALITY_INTERVALS[quality]
    for semis in (10, 11, 9):
        if semis in intervals:
            return semis
    return None


def _degrees(quality: str) -> tuple[int | None, int | None, int | None]:
    return _third(quality), _fifth(quality), _seventh(quality)


def _majmin_reduction(quality: str) -> str | None:
    third, fifth = _third(quality), _fifth(quality)
    if fifth == 7:
        if third == 4:
            return "maj"
        if third == 3:
            return "min"
    return None


_SEVENTH_FAMILY = {
    (4, 7, None),  # maj
    (3, 7, None),  # min
    (4, 7, 11),  # maj7
    (3, 7, 10),  # min7
    (4, 7, 10),  # 7
}


def compare(metric: str, ref: ChordLabel, est: ChordLabel) -> Comparison:
    """Judge one reference/estimate label pair under one metric."""
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")

    # References outside a metric's gamut are excluded no matter the estimate.
    if not ref.is_no_chord:
        if metric == "majmin" and _majmin_reduction(ref.quality) is None:
            return Comparison.EXCLUDED
        if metric == "sevenths" and _degrees(ref.quality) not in _SEVENTH_FAMILY:
            return Comparison.EXCLUDED

    if ref.is_no_chord or est.is_no_chord:
        both = ref.is_no_chord and est.is_no_chord
        return Comparison.CORRECT if both else Comparison.INCORRECT

    if metric == "mirex":
        shared = pitch_class_set(ref) & pitch_class_set(est)
        return Comparison.CORRECT if len(shared) >= 3 else Comparison.INCORRECT

    if metric == "majmin":
        est_red = _majmin_reduction(est.quality)
        if ref.root == est.root and _majmin_reduction(ref.quality) == est_red:
            return Comparison.CORRECT
        return Comparison.INCORRECT

    depth = {"root": 0, "thirds": 1, "triads": 2, "sevenths": 3, "tetrads": 3}[metric]
    if ref.root != est.root:
        return Comparison.INCORRECT
    if _degrees(ref.quality)[:depth] != _degrees(est.quality)[:depth]:
        return Comparison.INCORRECT
    return Comparison.CORRECT


def align_estimate(ref: Timeline, est: Timeline) -> Timeline:
    """Clip the estimate to the reference span, padding misses with no-chord."""
    start, end = ref.span
    try:
        aligned = clip(est, start, end)
    except Exception:
        return Timeline.from_rows([(start, end, NO_CHORD)])
    return pad(aligned, start, end, NO_CHORD)


@dataclass(frozen=True)
class EvalScores:
    """Correct and evaluated (non-excluded) durations per metric, seconds."""

    correct: dict[str, float]
    evaluated: dict[str, float]

    def score(self, metric: str) -> float | None:
        if self.evaluated[metric] == 0.0:
            return None
        return self.correct[metric] / self.evaluated[metric]

    @property
    def scores(self) -> dict[str, float | None]:
        return {m: self.score(m) for m in METRIC_NAMES}

    def __getattr__(self, name):
        if name in METRIC_NAMES:
            return self.score(name)
        raise AttributeError(name)


def evaluate_pair(ref: Timeline, est: Timeline) -> EvalScores:
    """Score one estimate against one reference."""
    if ref is None:
        raise EmptyReference("reference timeline required")
    aligned = align_estimate(ref, est)
    correct = {m: 0.0 for m in METRIC_NAMES}
    evaluated = {m: 0.0 for m in METRIC_NAMES}
    for start, end, ref_label, est_label in co_partition(ref, aligned):
        dur = end - start
        for metric in METRIC_NAMES:
            outcome = compare(metric, ref_label, est_label)
            if outcome is Comparison.EXCLUDED:
                continue
            evaluated[metric] += dur
            if outcome is Comparison.CORRECT:
                correct[metric] += dur
    return EvalScores(correct, evaluated)


def evaluate_corpus(pairs: list[tuple[Timeline, Timeline]]) -> EvalScores:
    """Duration-weighted aggregate over songs: summed correct over summed
    evaluated time per metric."""
    if not pairs:
        raise EmptyCorpus("no (reference, estimate) pairs")
    return aggregate_scores([evaluate_pair(ref, est) for ref, est in pairs])


def aggregate_scores(results: list[EvalScores]) -> EvalScores:
    if not results:
        raise EmptyCorpus("nothing to aggregate")
    correct = {m: sum(r.correct[m] for r in results) for m in METRIC_NAMES}
    evaluated = {m: sum(r.evaluated[m] for r in results) for m in METRIC_NAMES}
    return EvalScores(correct, evaluated)
