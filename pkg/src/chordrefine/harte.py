"""Harte shorthand chord labels: parsing, printing, and pitch-class semantics.

Label grammar: ``N`` (no chord) or ``<ROOT>:<QUALITY>[/<DEGREE>]`` where
ROOT is A-G with an optional # or b, QUALITY is one of the shorthand
tokens below, and DEGREE is an optional b/# plus a digit.  Examples:

  - ``A:maj/3``  -> A major with the third in the bass
  - ``F:min7``   -> F minor seventh
  - ``N``        -> no chord

Pitch classes are integers 0-11 with C=0.  Enharmonic spellings map to
the same value (``C#`` == ``Db``); printing prefers flats.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class MalformedLabel(ValueError):
    """Raised when a label string does not fit the grammar.

    ``offending`` holds the substring that failed (unknown root, quality
    token, or degree).
    """

    def __init__(self, message: str, offending: str):
        super().__init__(f"{message}: {offending!r}")
        self.offending = offending


# Note name -> pitch class, covering single sharps and flats on all letters.
PITCH_CLASSES: dict[str, int] = {
    "C": 0, "C#": 1, "Db": 1, "D": 2, "D#": 3, "Eb": 3,
    "E": 4, "Fb": 4, "E#": 5, "F": 5, "F#": 6, "Gb": 6,
    "G": 7, "G#": 8, "Ab": 8, "A": 9, "A#": 10, "Bb": 10,
    "B": 11, "Cb": 11, "B#": 0,
}

# Canonical (flats-preferred) spelling per pitch class.
PITCH_NAMES: tuple[str, ...] = (
    "C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B",
)

# Quality shorthand -> semitone offsets from the root.
QUALITY_INTERVALS: dict[str, frozenset[int]] = {
    "maj": frozenset({0, 4, 7}),
    "min": frozenset({0, 3, 7}),
    "aug": frozenset({0, 4, 8}),
    "dim": frozenset({0, 3, 6}),
    "maj7": frozenset({0, 4, 7, 11}),
    "7": frozenset({0, 4, 7, 10}),
    "min7": frozenset({0, 3, 7, 10}),
    "dim7": frozenset({0, 3, 6, 9}),
    "hdim7": frozenset({0, 3, 6, 10}),
    "maj9": frozenset({0, 2, 4, 7, 11}),
    "9": frozenset({0, 2, 4, 7, 10}),
    "min9": frozenset({0, 2, 3, 7, 10}),
    "11": frozenset({0, 2, 4, 5, 7, 10}),
    "13": frozenset({0, 2, 4, 5, 7, 9, 10}),
    "sus4": frozenset({0, 5, 7}),
    "sus2": frozenset({0, 2, 7}),
    "sus4(b7)": frozenset({0, 5, 7, 10}),
}

# Major-scale semitones for degree digits 1-9 (8 and 9 wrap past the octave).
_DEGREE_SEMITONES = {1: 0, 2: 2, 3: 4, 4: 5, 5: 7, 6: 9, 7: 11, 8: 12, 9: 14}

# Semitone -> canonical degree string for printing slash basses.
_SEMITONE_DEGREE = {
    0: "1", 1: "b2", 2: "2", 3: "b3", 4: "3", 5: "4",
    6: "b5", 7: "5", 8: "b6", 9: "6", 10: "b7", 11: "7",
}

# The 25 (quality, bass interval) combinations of the baseline model's
# vocabulary: triads, inversions, sevenths, extensions, sus chords, and the
# four slash chords whose bass is not a chord tone.
VOCABULARY_COMBOS: tuple[tuple[str, int], ...] = (
    ("maj", 0), ("min", 0), ("aug", 0), ("dim", 0),
    ("maj", 4), ("maj", 7), ("min", 3), ("min", 7),
    ("maj7", 0), ("7", 0), ("min7", 0), ("dim7", 0), ("hdim7", 0),
    ("maj9", 0), ("9", 0), ("min9", 0), ("11", 0), ("13", 0),
    ("sus4", 0), ("sus2", 0), ("sus4(b7)", 0),
    ("maj", 2), ("maj", 10), ("min", 2), ("min", 10),
)

_DEGREE_RE = re.compile(r"^([#b]?)([1-9])$")


@dataclass(frozen=True)
class ChordLabel:
    """A parsed chord: root pitch class, quality token, bass interval.

    ``root`` is None for the no-chord label, in which case quality and
    bass_interval are empty/zero by convention.
    """

    root: int | None
    quality: str = ""
    bass_interval: int = 0

    @property
    def is_no_chord(self) -> bool:
        return self.root is None

    def __str__(self) -> str:  # pragma: no cover - convenience only
        return format_chord(self)


NO_CHORD = ChordLabel(None)


def parse_pitch_class(name: str) -> int:
    """Map a note name (with optional single accidental) to 0-11."""
    try:
        return PITCH_CLASSES[name]
    except KeyError:
        raise MalformedLabel("unknown root", name) from None


def pitch_class_name(pc: int) -> str:
    """Canonical flats-preferred spelling of a pitch class."""
    return PITCH_NAMES[pc % 12]


def _parse_degree(text: str) -> int:
    m = _DEGREE_RE.match(text)
    if not m:
        raise MalformedLabel("unknown degree", text)
    accidental, digit = m.groups()
    semitone = _DEGREE_SEMITONES[int(digit)]
    if accidental == "b":
        semitone -= 1
    elif accidental == "#":
        semitone += 1
    return semitone % 12


def parse_chord(text: str) -> ChordLabel:
    """Parse a Harte shorthand label into a :class:`ChordLabel`.

    Raises :class:`MalformedLabel` on anything outside the grammar; never
    raises anything else, regardless of input bytes.
    """
    token = text.strip()
    if not token:
        raise MalformedLabel("empty label", text)
    if token == "N":
        return NO_CHORD

    head, sep, rest = token.partition(":")
    if not sep:
        raise MalformedLabel("missing quality separator", token)
    root = parse_pitch_class(head)

    quality, sep, degree = rest.partition("/")
    # sus4(b7) contains no slash, so splitting on the first '/' is safe for
    # every known quality token.
    if quality not in QUALITY_INTERVALS:
        raise MalformedLabel("unknown quality token", quality)
    bass = _parse_degree(degree) if sep else 0
    return ChordLabel(root, quality, bass)


def format_chord(label: ChordLabel) -> str:
    """Canonical printing; inverse of :func:`parse_chord` on valid labels."""
    if label.is_no_chord:
        return "N"
    text = f"{pitch_class_name(label.root)}:{label.quality}"
    if label.bass_interval % 12 != 0:
        text += f"/{_SEMITONE_DEGREE[label.bass_interval % 12]}"
    return text


def pitch_class_set(label: ChordLabel) -> frozenset[int]:
    """All sounding pitch classes: quality tones plus the bass note."""
    if label.is_no_chord:
        return frozenset()
    tones = {(label.root + i) % 12 for i in QUALITY_INTERVALS[label.quality]}
    tones.add((label.root + label.bass_interval) % 12)
    return frozenset(tones)


def bass_pitch_class(label: ChordLabel) -> int | None:
    """Pitch class sounding in the bass, or None for no-chord."""
    if label.is_no_chord:
        return None
    return (label.root + label.bass_interval) % 12


def in_vocabulary(label: ChordLabel) -> bool:
    """True iff the label is one of the 301 classes the baseline model emits."""
    if label.is_no_chord:
        return True
    return (label.quality, label.bass_interval % 12) in _VOCAB_COMBO_SET


_VOCAB_COMBO_SET = frozenset(VOCABULARY_COMBOS)


def enumerate_vocabulary() -> list[ChordLabel]:
    """All 301 labels: no-chord plus 12 roots x 25 (quality, bass) combos."""
    labels = [NO_CHORD]
    for root in range(12):
        for quality, bass in VOCABULARY_COMBOS:
            labels.append(ChordLabel(root, quality, bass))
    return labels
