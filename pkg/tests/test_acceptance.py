"""Acceptance suite: one test per shipping criterion.

Each test prints a single [acceptance] PASS/FAIL line and enforces the
criterion's runtime budget.  Run with ``pytest tests/test_acceptance.py -s``
to see the lines.
"""

import functools
import json
import random
import time

import pytest

from chordrefine.cli import main as cli_main
from chordrefine.harte import (
    NO_CHORD,
    enumerate_vocabulary,
    format_chord,
    parse_chord,
    pitch_class_set,
)
from chordrefine.llm_gateway import ChatClient
from chordrefine.metrics import (
    Comparison,
    METRIC_NAMES,
    aggregate_scores,
    compare,
    evaluate_pair,
)
from chordrefine.beat_align import grid_from_beats, snap_timeline
from chordrefine.reasoners import LLMReasoner
from chordrefine.refine import RefinementConfig, SongBundle, run_pipeline
from chordrefine.rules import decide_bass_rule
from chordrefine.synthetic import generate_corpus, write_corpus
from chordrefine.theory import MAJOR, MINOR, Key
from chordrefine.timeline import Timeline
from oracles import exact_oracle, frame_oracle, random_timeline_pair

try:
    import mir_eval  # the standard evaluation library, when available
except ImportError:
    mir_eval = None


def criterion(name, budget=None):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - start
                if budget is not None and elapsed >= budget:
                    raise AssertionError(
                        f"took {elapsed:.2f}s, budget {budget:.0f}s"
                    )
            except BaseException:
                print(f"\n[acceptance] FAIL {name}")
                raise
            print(f"\n[acceptance] PASS {name} ({elapsed:.2f}s)")

        return wrapper

    return decorate


# ----------------------------------------------------------------- 1

@criterion("vocabulary: 301 labels, parse/format round-trip", budget=1.0)
def test_vocabulary_round_trip():
    vocab = enumerate_vocabulary()
    assert len(vocab) == 301
    printed = {format_chord(label) for label in vocab}
    assert len(printed) == 301
    for label in vocab:
        assert parse_chord(format_chord(label)) == label


# ----------------------------------------------------------------- 2

@criterion("metrics: oracle equivalence on 220 random timeline pairs", budget=30.0)
def test_metric_oracle_equivalence():
    rng = random.Random(20240810)
    for _ in range(220):
        ref, est = random_timeline_pair(rng, 5, 60)
        scores = evaluate_pair(ref, est)
        frames = frame_oracle(ref, est)
        exact = exact_oracle(ref, est)
        for metric in METRIC_NAMES:
            got = scores.score(metric)
            if got is None:
                assert frames[metric] is None
                assert exact[metric] is None
                continue
            assert abs(got - frames[metric]) < 1e-3, (metric, got, frames[metric])
            assert abs(got - exact[metric]) < 1e-9, (metric, got, exact[metric])
        if mir_eval is not None:
            _check_against_mir_eval(ref, est, scores)


def _check_against_mir_eval(ref, est, scores):
    import numpy as np

    ref_iv = np.array([(iv.start, iv.end) for iv in ref.intervals])
    ref_labels = [format_chord(iv.label) for iv in ref.intervals]
    est_iv = np.array([(iv.start, iv.end) for iv in est.intervals])
    est_labels = [format_chord(iv.label) for iv in est.intervals]
    result = mir_eval.chord.evaluate(ref_iv, ref_labels, est_iv, est_labels)
    for metric in METRIC_NAMES:
        got = scores.score(metric)
        if got is not None and metric in result:
            assert abs(got - result[metric]) < 1e-6, (metric, got, result[metric])


# ----------------------------------------------------------------- 3

@criterion("mirex rule: exhaustive 301x301 pitch-class intersection", budget=5.0)
def test_mirex_rule_exhaustive():
    vocab = enumerate_vocabulary()
    pcs = {label: pitch_class_set(label) for label in vocab}
    for a in vocab:
        for b in vocab:
            if a.is_no_chord or b.is_no_chord:
                expected = a.is_no_chord and b.is_no_chord
            else:
                expected = len(pcs[a] & pcs[b]) >= 3
            got = compare("mirex", a, b) is Comparison.CORRECT
            assert got == expected, (format_chord(a), format_chord(b))


# ----------------------------------------------------------------- 4

C = Key(0, MAJOR)
G = Key(7, MAJOR)
Am = Key(9, MINOR)

# (chord, bass pitch class, key, expected chord, expected rule)
BASS_RULE_TABLE = [
    # rule (a): the bass is already the root
    ("C:maj", 0, C, "C:maj", "a"),
    ("G:7", 7, C, "G:7", "a"),
    ("A:min", 9, C, "A:min", "a"),
    ("F:maj7", 5, C, "F:maj7", "a"),
    ("D:min7", 2, C, "D:min7", "a"),
    ("G:maj", 7, G, "G:maj", "a"),
    # rule (b): another chord tone; invert when the vocabulary allows
    ("C:maj", 4, C, "C:maj/3", "b"),
    ("C:maj", 7, C, "C:maj/5", "b"),
    ("A:min", 0, C, "A:min/b3", "b"),
    ("A:min", 4, C, "A:min/5", "b"),
    ("G:maj", 11, C, "G:maj/3", "b"),
    ("G:maj", 2, C, "G:maj/5", "b"),
    ("F:maj", 9, C, "F:maj/3", "b"),
    ("C:maj7", 4, C, "C:maj7", "b"),  # maj7 inversions outside the vocabulary
    ("G:7", 11, C, "G:7", "b"),
    ("C:sus4", 5, C, "C:sus4", "b"),
    ("C:maj/3", 7, C, "C:maj/5", "b"),
    ("C:maj/2", 2, C, "C:maj/2", "b"),  # the slash note counts as a tone
    ("D:maj", 6, G, "D:maj/3", "b"),
    ("E:min", 7, G, "E:min/b3", "b"),
    ("A:min", 4, Am, "A:min/5", "b"),
    ("C:maj", 7, Am, "C:maj/5", "b"),
    # rule (c): off the chord but on a scale degree -> diatonic triad
    ("C:maj", 9, C, "A:min", "c"),
    ("C:maj", 2, C, "D:min", "c"),
    ("C:maj", 11, C, "B:dim", "c"),
    ("G:maj", 0, C, "C:maj", "c"),
    ("A:min", 5, C, "F:maj", "c"),
    ("E:min", 0, C, "C:maj", "c"),
    ("D:min", 7, C, "G:maj", "c"),
    ("C:maj7", 2, C, "D:min", "c"),
    ("G:maj", 4, G, "E:min", "c"),
    ("C:maj", 11, G, "B:min", "c"),
    ("A:min", 7, Am, "G:maj", "c"),
    ("E:min", 2, Am, "D:min", "c"),
    ("F:maj", 11, Am, "B:dim", "c"),
    # rule (d): bass outside the key's scale -> unchanged
    ("C:maj", 6, C, "C:maj", "d"),
    ("A:min", 8, C, "A:min", "d"),
    ("G:7", 3, C, "G:7", "d"),
    ("F:maj", 1, C, "F:maj", "d"),
    ("G:maj", 5, G, "G:maj", "d"),
    ("A:min", 8, Am, "A:min", "d"),  # raised seventh is not a triad root
    # degenerate segments
    ("N", 0, C, "N", "no-chord"),
    ("C:maj", None, C, "C:maj", "no-bass"),
]


@criterion(f"stage 2 rule table: {len(BASS_RULE_TABLE)} hand-derived cases")
def test_stage2_rule_table():
    assert len(BASS_RULE_TABLE) >= 40
    for chord_text, bass_pc, key, expected_text, expected_rule in BASS_RULE_TABLE:
        rule, out = decide_bass_rule(parse_chord(chord_text), bass_pc, key)
        assert rule == expected_rule, (chord_text, bass_pc, rule)
        assert out == parse_chord(expected_text), (
            chord_text,
            bass_pc,
            format_chord(out),
            expected_text,
        )


# ----------------------------------------------------------------- 5

@criterion("beat alignment: 1000 randomized idempotence/displacement checks", budget=10.0)
def test_beat_alignment_properties():
    rng = random.Random(77)
    for _ in range(1000):
        n_beats = rng.randint(3, 12)
        beat = rng.uniform(0.3, 1.0)
        span = n_beats * beat
        grid = grid_from_beats([(i * beat, i % 4 + 1) for i in range(n_beats + 1)])
        cuts = sorted(rng.uniform(0.01, span - 0.01) for _ in range(rng.randint(1, 11)))
        bounds = [0.0, *cuts, span]
        rows = [
            (s, e, f"L{i}") for i, (s, e) in enumerate(zip(bounds, bounds[1:])) if e > s
        ]
        chords = Timeline.from_rows(rows)
        threshold = rng.uniform(0.01, 0.3)
        once, report = snap_timeline(chords, grid, threshold)
        twice, _ = snap_timeline(once, grid, threshold)
        assert twice == once
        assert report.max_displacement <= threshold + 1e-12
        assert once.span == chords.span

    # Global skip: beats every 1 s, every boundary 0.125 s off a grid line.
    grid = grid_from_beats([(float(i), i % 4 + 1) for i in range(5)])
    rows = [(0.0, 1.125, "a"), (1.125, 2.125, "b"), (2.125, 3.125, "c"), (3.125, 4.0, "d")]
    chords = Timeline.from_rows(rows)
    out, report = snap_timeline(chords, grid, threshold=0.05)
    assert report.skipped
    assert out == chords


# ----------------------------------------------------------------- 6

@criterion("synthetic end-to-end: selection, stage gains, no regressions", budget=60.0)
def test_synthetic_end_to_end():
    songs = generate_corpus(20, seed=20240801)
    config = RefinementConfig()
    picked_nodrums = 0
    stage_scores = {k: [] for k in (0, 1, 2, 3, 4, 5)}
    for song in songs:
        bundle = SongBundle(
            acr_full=song.acr["full"],
            acr_nodrums=song.acr["nodrums"],
            acr_nodrumsvocals=song.acr["nodrumsvocals"],
            bass=song.bass,
            keys=song.keys,
            beats=song.beats,
            reference=song.reference,
            song_id=song.song_id,
        )
        final, traces = run_pipeline(bundle, config)
        if traces[0].transcript[-1]["primary"] == "nodrums":
            picked_nodrums += 1
        stage_scores[0].append(evaluate_pair(song.reference, traces[0].output))
        for trace in traces:
            stage_scores[trace.stage].append(evaluate_pair(song.reference, trace.output))

    # (i) the drums-removed candidate wins stage 1 in at least 90% of songs
    assert picked_nodrums >= 0.9 * len(songs), picked_nodrums

    mirex = {
        k: aggregate_scores(results).mirex * 100 for k, results in stage_scores.items()
    }
    deltas = {k: mirex[k] - mirex[k - 1] for k in (1, 2, 3, 4, 5)}

    # (ii) strict gains at stages 2, 4, 5, at least one point in total
    for stage in (2, 4, 5):
        assert deltas[stage] > 0.0, (stage, deltas)
    assert deltas[2] + deltas[4] + deltas[5] >= 1.0, deltas

    # (iii) no stage loses more than 0.2 points
    for stage, delta in deltas.items():
        assert delta >= -0.2, (stage, deltas)


# ----------------------------------------------------------------- 7

class GarbageTransport:
    """Always answers with well-formed JSON holding a useless completion."""

    def __init__(self):
        self.calls = 0

    def send(self, payload):
        self.calls += 1
        return {
            "choices": [
                {"message": {"content": "no timeline here"}, "finish_reason": "stop"}
            ]
        }


class ScriptedTransport:
    def __init__(self, script):
        self.script = list(script)

    def send(self, payload):
        return {
            "choices": [
                {"message": {"content": self.script.pop(0)}, "finish_reason": "stop"}
            ]
        }


@criterion("llm path: validation retries and input-preserving fallback")
def test_llm_path_robustness():
    config = RefinementConfig(backend="llm", retry_count=1)

    # Malformed-then-valid exercises the re-prompt loop.
    client = ChatClient(ScriptedTransport(["garbage", "0.0 4.0 C:maj"]), sleep=lambda s: None)
    from chordrefine.reasoners import make_timeline_validator
    from chordrefine.llm_gateway import ChatMessage, ChatRequest

    request = ChatRequest("m", (ChatMessage("system", "s"), ChatMessage("user", "u")))
    value, transcript = client.complete_with_validation(
        request, make_timeline_validator((0.0, 4.0)), retries=1
    )
    assert value.intervals[0].label == parse_chord("C:maj")
    assert sum(1 for m in transcript if m.role == "assistant") == 2

    # A backend that never answers sensibly leaves every stage untouched.
    song = generate_corpus(1, seed=123)[0]
    bundle = SongBundle(
        acr_full=song.acr["full"],
        acr_nodrums=song.acr["nodrums"],
        acr_nodrumsvocals=song.acr["nodrumsvocals"],
        bass=song.bass,
        keys=song.keys,
        beats=None,
        song_id=song.song_id,
    )
    transport = GarbageTransport()
    reasoner = LLMReasoner(ChatClient(transport, sleep=lambda s: None), config)
    final, traces = run_pipeline(bundle, config, reasoner=reasoner)
    assert transport.calls > 0
    assert traces[0].skipped  # ranking fell back to the rulebook
    for trace in traces[1:4]:
        assert trace.skipped
    assert final == traces[0].output  # stages 2-4 fell back, 5 had no beats


# ----------------------------------------------------------------- 8

@criterion("determinism: byte-identical rulebook runs and reports")
def test_rulebook_determinism(tmp_path):
    manifest = write_corpus(tmp_path / "corpus", n_songs=4, seed=20240801)
    outs = []
    for run in ("run1", "run2"):
        out = tmp_path / run
        code = cli_main(
            ["-q", "refine", "--manifest", str(manifest), "--out", str(out)]
        )
        assert code == 0
        code = cli_main(
            ["-q", "report", "--manifest", str(manifest), "--out", str(out)]
        )
        assert code == 0
        outs.append(out)

    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    report = json.loads((outs[0] / "report.json").read_text())
    mirex = {row["stage"]: row["raw"]["mirex"] for row in report}
    assert mirex["beat_alignment"] > mirex["baseline"]
