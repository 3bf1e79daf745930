"""Local keys and the harmony predicates the correction stages lean on.

A key is a tonic pitch class plus a major/minor mode, written with the
same root grammar as chords (``C:maj``, ``A:min``).  Membership tests for
minor keys accept the raised seventh on top of the natural scale, so
dominant-function chords (V, vii dim) are not flagged as foreign.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .harte import (
    ChordLabel,
    MalformedLabel,
    parse_pitch_class,
    pitch_class_name,
    pitch_class_set,
)
from .timeline import Timeline, co_partition, cover

MAJOR = "major"
MINOR = "minor"

_SCALE_STEPS = {
    MAJOR: (0, 2, 4, 5, 7, 9, 11),
    MINOR: (0, 2, 3, 5, 7, 8, 10),
}

# Triad quality on each scale degree, stacked thirds within the scale.
_DEGREE_QUALITIES = {
    MAJOR: ("maj", "min", "min", "maj", "maj", "min", "dim"),
    MINOR: ("min", "dim", "maj", "min", "min", "maj", "maj"),
}

_MODE_TOKENS = {"maj": MAJOR, "min": MINOR}
_MODE_PRINT = {MAJOR: "maj", MINOR: "min"}


class NotInScale(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    tonic: int
    mode: str

    def __post_init__(self):
        if self.mode not in _SCALE_STEPS:
            raise ValueError(f"mode must be major or minor, got {self.mode!r}")

    def __str__(self) -> str:  # pragma: no cover - convenience only
        return format_key(self)


def parse_key(text: str) -> Key:
    """Parse ``<ROOT>:maj`` / ``<ROOT>:min`` into a Key."""
    token = text.strip()
    head, sep, mode = token.partition(":")
    if not sep or mode not in _MODE_TOKENS:
        raise MalformedLabel("unknown key mode", token)
    return Key(parse_pitch_class(head), _MODE_TOKENS[mode])


def format_key(key: Key) -> str:
    return f"{pitch_class_name(key.tonic)}:{_MODE_PRINT[key.mode]}"


def scale_pitch_classes(key: Key) -> frozenset[int]:
    """The seven scale degrees (natural minor for minor keys)."""
    return frozenset((key.tonic + step) % 12 for step in _SCALE_STEPS[key.mode])


def _membership_pitch_classes(key: Key) -> frozenset[int]:
    # Minor keys also admit the raised seventh (harmonic minor) so that
    # dominant-function chords pass the membership test.
    pcs = scale_pitch_classes(key)
    if key.mode == MINOR:
        pcs = pcs | {(key.tonic + 11) % 12}
    return pcs


def diatonic_chord(key: Key, root: int) -> ChordLabel:
    """The triad built by stacking scale thirds on a scale-degree root."""
    root %= 12
    steps = _SCALE_STEPS[key.mode]
    for degree, step in enumerate(steps):
        if (key.tonic + step) % 12 == root:
            return ChordLabel(root, _DEGREE_QUALITIES[key.mode][degree])
    raise NotInScale(f"{pitch_class_name(root)} not in {format_key(key)}")


def diatonic_triads(key: Key) -> tuple[ChordLabel, ...]:
    """All seven diatonic triads of a key, tonic first."""
    return tuple(
        diatonic_chord(key, (key.tonic + step) % 12)
        for step in _SCALE_STEPS[key.mode]
    )


def is_diatonic(chord: ChordLabel, key: Key) -> bool:
    """True iff every pitch class of the chord lies in the key.

    No-chord is vacuously diatonic.
    """
    return pitch_class_set(chord) <= _membership_pitch_classes(key)


@lru_cache(maxsize=64)
def harmonic_exceptions(key: Key) -> frozenset[ChordLabel]:
    """Chromatic chords the key still accommodates.

    Two families: secondary dominants (major triad and dominant seventh a
    perfect fifth above each non-tonic degree that carries a major or
    minor triad; diminished degrees are never tonicized) and modal
    interchange (the diatonic triads of the parallel mode).  Chords that
    are already diatonic to the key are removed.
    """
    out: set[ChordLabel] = set()
    for triad in diatonic_triads(key)[1:]:
        if triad.quality == "dim":
            continue
        dominant_root = (triad.root + 7) % 12
        out.add(ChordLabel(dominant_root, "maj"))
        out.add(ChordLabel(dominant_root, "7"))
    parallel = Key(key.tonic, MINOR if key.mode == MAJOR else MAJOR)
    out.update(diatonic_triads(parallel))
    return frozenset(c for c in out if not is_diatonic(c, key))


@lru_cache(maxsize=64)
def _exception_shapes(key: Key) -> frozenset[tuple[int, str]]:
    return frozenset((c.root, c.quality) for c in harmonic_exceptions(key))


def is_plausible(chord: ChordLabel, key: Key) -> bool:
    """Diatonic or an allowed exception (inversions match by root+quality)."""
    if chord.is_no_chord or is_diatonic(chord, key):
        return True
    return (chord.root, chord.quality) in _exception_shapes(key)


def key_consistency_score(chords: Timeline, keys: Timeline) -> float:
    """Fraction of chord time explained by the concurrent key.

    Duration-weighted over non-no-chord time; diatonic or exception chords
    count as consistent.  A timeline with no chord time scores 1.0.
    Raises SpanMismatch if the key track does not overlap the chords.
    """
    aligned_keys = cover(keys, *chords.span)
    consistent = 0.0
    total = 0.0
    for s, e, chord, key in co_partition(chords, aligned_keys):
        if chord.is_no_chord:
            continue
        total += e - s
        if is_plausible(chord, key):
            consistent += e - s
    if total == 0.0:
        return 1.0
    return consistent / total
