"""Synthetic evaluation corpus: diatonic ground truth plus controlled damage.

Each song is a random diatonic triad progression in a fixed key at a
fixed tempo, with boundaries on exact beats.  From the ground truth the
generator derives a key track, a beat track, a bass track (the chord
roots, with a few unvoiced windows), and three corrupted recognition
passes mimicking the full mix, drums-removed, and drums+vocals-removed
inputs.

Damage comes in four repairable flavors:

  - out-of-key substitutions: major-triad segments turned augmented,
    chosen so the result defies the key (key- and anomaly-stage food);
  - bass-driven errors: segments replaced by a different diatonic triad
    that avoids the true root, so the bass track pins the fix;
  - spurious no-chord windows punched inside long segments, short enough
    to be filled from their flanks;
  - boundary jitter within +/-80 ms, recoverable from the beat grid.

The full-mix pass carries about five points more damage than the
drums-removed pass, and its no-chord share is the highest, so track
selection has a deterministic right answer.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .harte import ChordLabel, format_chord, pitch_class_set
from .rules import format_bass_label
from .theory import MAJOR, MINOR, Key, diatonic_triads, format_key, is_plausible
from .timeline import Timeline, write_lab

BEAT_CHOICES = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00)
JITTER = 0.08

# Degree indices used for progressions: no diminished degrees, so every
# truth chord is a plain major or minor triad.
_DEGREE_POOL = {MAJOR: (0, 1, 3, 4, 5), MINOR: (0, 2, 3, 4, 5, 6)}


@dataclass(frozen=True)
class CorruptionProfile:
    out_of_key: float
    bass_sub: float
    spurious_n: float


TRACK_PROFILES = {
    "nodrums": CorruptionProfile(0.10, 0.10, 0.05),
    "nodrumsvocals": CorruptionProfile(0.12, 0.10, 0.06),
    "full": CorruptionProfile(0.12, 0.11, 0.07),
}


@dataclass
class SyntheticSong:
    song_id: str
    key: Key
    reference: Timeline
    keys: Timeline
    beats: Timeline
    bass: Timeline
    acr: dict[str, Timeline]


def _truth_progression(rng: random.Random, key: Key) -> tuple[list[tuple[float, float, ChordLabel]], float, int]:
    triads = diatonic_triads(key)
    pool = _DEGREE_POOL[key.mode]
    beat = rng.choice(BEAT_CHOICES)
    n_segments = rng.randint(12, 16)
    rows = []
    cursor_beats = 0
    prev = None
    for _ in range(n_segments):
        degree = rng.choice(pool)
        while degree == prev:
            degree = rng.choice(pool)
        prev = degree
        length = rng.choice((4, 8))
        start = cursor_beats * beat
        cursor_beats += length
        rows.append((start, cursor_beats * beat, triads[degree]))
    return rows, beat, cursor_beats


def _pick_by_duration(rng, eligible: list[int], rows, target: float) -> list[int]:
    order = list(eligible)
    rng.shuffle(order)
    chosen = []
    got = 0.0
    for i in order:
        if got >= target:
            break
        chosen.append(i)
        got += rows[i][1] - rows[i][0]
    return chosen


def _n_windows(rng, rows, target: float) -> list[tuple[int, float]]:
    """(segment index, window length) pairs whose lengths sum to target.

    Window lengths stay in roughly [0.54, 0.76] s: over the flicker
    threshold even after jitter, and under the fill limit.
    """
    k = max(1, round(target / 0.65))
    length = target / k
    if length > 0.76:
        k += 1
        length = target / k
    hosts = rng.sample(range(len(rows)), min(k, len(rows)))
    return [(i, length) for i in hosts]


def _corrupt(
    rng: random.Random,
    truth_rows: list[tuple[float, float, ChordLabel]],
    key: Key,
    profile: CorruptionProfile,
) -> Timeline:
    rows = [list(r) for r in truth_rows]
    total = rows[-1][1] - rows[0][0]
    triads = diatonic_triads(key)

    # Out-of-key damage: maj -> aug on the same root, only where the aug
    # chord really is implausible in this key.
    eligible = [
        i
        for i, (_, _, lab) in enumerate(rows)
        if lab.quality == "maj" and not is_plausible(ChordLabel(lab.root, "aug"), key)
    ]
    aug_idx = set(_pick_by_duration(rng, eligible, rows, profile.out_of_key * total))
    for i in aug_idx:
        rows[i][2] = ChordLabel(rows[i][2].root, "aug")

    # Bass-recoverable damage: a different diatonic triad avoiding the
    # true root, never equal to a neighbor (merges would eat boundaries).
    remaining = [i for i in range(len(rows)) if i not in aug_idx]
    sub_idx = _pick_by_duration(rng, remaining, rows, profile.bass_sub * total)
    for i in sub_idx:
        true_label = truth_rows[i][2]
        neighbors = {rows[j][2] for j in (i - 1, i + 1) if 0 <= j < len(rows)}
        candidates = [
            t
            for t in triads
            if t != true_label
            and true_label.root not in pitch_class_set(t)
            and t not in neighbors
        ]
        rows[i][2] = rng.choice(candidates)

    # Spurious no-chord windows inside segments.
    windows = _n_windows(rng, rows, profile.spurious_n * total)
    for i, length in sorted(windows, key=lambda pair: -pair[0]):
        s, e, lab = rows[i]
        slack = (e - s) - length
        w_start = s + slack * rng.uniform(0.3, 0.7)
        rows[i : i + 1] = [
            [s, w_start, lab],
            [w_start, w_start + length, ChordLabel(None)],
            [w_start + length, e, lab],
        ]

    # Boundary jitter, interior boundaries only.
    bounds = [rows[0][0]] + [r[0] for r in rows[1:]] + [rows[-1][1]]
    for j in range(1, len(bounds) - 1):
        bounds[j] += rng.uniform(-JITTER, JITTER)
    out = [
        (s, e, rows[j][2]) for j, (s, e) in enumerate(zip(bounds, bounds[1:]))
    ]
    return Timeline.from_rows(out)


def _bass_track(rng, truth_rows, total: float) -> Timeline:
    rows = [[s, e, lab.root] for s, e, lab in truth_rows]
    for i, length in _n_windows(rng, rows, 0.03 * total):
        s, e, pc = rows[i]
        if e - s < length + 0.2:
            continue
        mid = (s + e) / 2
        rows[i : i + 1] = [
            [s, mid - length / 2, pc],
            [mid - length / 2, mid + length / 2, None],
            [mid + length / 2, e, pc],
        ]
    return Timeline.from_rows(tuple((s, e, pc) for s, e, pc in rows))


def generate_song(song_id: str, seed: int) -> SyntheticSong:
    rng = random.Random(seed)
    key = Key(rng.randrange(12), MAJOR if rng.random() < 0.7 else MINOR)
    truth_rows, beat, total_beats = _truth_progression(rng, key)
    span_end = truth_rows[-1][1]

    reference = Timeline.from_rows(truth_rows)
    keys = Timeline.from_rows([(0.0, span_end, key)])
    beats = Timeline.from_rows(
        ((i * beat, (i + 1) * beat, str(i % 4 + 1)) for i in range(total_beats))
    )
    bass = _bass_track(random.Random(seed + 1), truth_rows, span_end)
    acr = {
        name: _corrupt(random.Random(seed + 10 + k), truth_rows, key, profile)
        for k, (name, profile) in enumerate(sorted(TRACK_PROFILES.items()))
    }
    return SyntheticSong(song_id, key, reference, keys, beats, bass, acr)


def generate_corpus(n_songs: int = 20, seed: int = 20240801) -> list[SyntheticSong]:
    return [
        generate_song(f"song{i:02d}", seed + 1000 * i) for i in range(n_songs)
    ]


def write_corpus(out_dir: str | Path, n_songs: int = 20, seed: int = 20240801) -> Path:
    """Write lab files plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for song in generate_corpus(n_songs, seed):
        sid = song.song_id
        files = {
            "reference": (song.reference, format_chord),
            "keys": (song.keys, format_key),
            "beats": (song.beats, str),
            "bass": (song.bass, format_bass_label),
            "acr_full": (song.acr["full"], format_chord),
            "acr_nodrums": (song.acr["nodrums"], format_chord),
            "acr_nodrumsvocals": (song.acr["nodrumsvocals"], format_chord),
        }
        entry = {"id": sid}
        for name, (timeline, printer) in files.items():
            filename = f"{sid}.{name}.lab"
            (out / filename).write_text(write_lab(timeline, printer))
            entry[name] = filename
        entries.append(entry)
    manifest = {"dataset": "synthetic", "songs": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
