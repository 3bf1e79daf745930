"""Interchangeable judgment backends for the refinement stages.

The rulebook backend is a pure function of its inputs and records which
rule fired where.  The LLM backend sends one chat exchange per stage per
song, embedding the stage instructions and the lab-serialized inputs;
its answer must be a full timeline over the same span in vocabulary
labels.  Invalid answers are re-prompted with the parse error attached;
when every retry fails the stage output falls back to its input, so the
pipeline never degrades below what it was given.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from .harte import format_chord, in_vocabulary, parse_chord
from .llm_gateway import ChatClient, ChatMessage, ChatRequest, ValidationExhausted
from .rules import (
    Anomaly,
    SegmentDiff,
    TRACK_PRIORITY,
    apply_anomalies,
    format_bass_label,
    rank_candidates,
    stage2_rewrite,
    stage3_rewrite,
)
from .theory import format_key
from .timeline import Timeline, parse_lab, write_lab


@dataclass(frozen=True)
class TrackChoice:
    primary: str
    secondary: str
    transcript: list = field(default_factory=list)
    skipped: bool = False


@dataclass(frozen=True)
class Revision:
    timeline: Timeline
    transcript: list = field(default_factory=list)
    skipped: bool = False
    diffs: list[SegmentDiff] | None = None


class RulebookReasoner:
    """Deterministic backend; no I/O, bit-identical across runs."""

    name = "rulebook"

    def __init__(self, config):
        self.config = config

    def choose_tracks(self, candidates: dict[str, Timeline]) -> TrackChoice:
        ordered, stats = rank_candidates(candidates)
        transcript = [
            {"candidate": name, **stats[name]} for name in TRACK_PRIORITY if name in stats
        ]
        transcript.append({"choice": ordered[0], "runner_up": ordered[1]})
        return TrackChoice(ordered[0], ordered[1], transcript)

    def correct_bass(self, current, bass, keys) -> Revision:
        out, diffs, firings, skipped = stage2_rewrite(
            current,
            bass,
            keys,
            self.config.bass_max_n_proportion,
            self.config.bass_min_in_key,
        )
        return Revision(out, firings, skipped, diffs)

    def correct_key(self, current, secondary, keys) -> Revision:
        out, diffs, firings = stage3_rewrite(current, secondary, keys)
        return Revision(out, firings, False, diffs)

    def fix_anomalies(self, current, report: list[Anomaly], keys) -> Revision:
        out, diffs, firings, _ = apply_anomalies(current, report, keys)
        return Revision(out, firings, False, diffs)


_TRACK_RE = re.compile(r"^\s*(primary|secondary)\s*:\s*(\w+)\s*$", re.IGNORECASE | re.MULTILINE)
_LAB_ROW_RE = re.compile(r"^\s*\d+(?:\.\d+)?\s+\d+(?:\.\d+)?\s+\S+\s*$")

SPAN_TOLERANCE = 0.01


def _load_prompt(name: str) -> str:
    return resources.files("chordrefine").joinpath(f"prompts/{name}").read_text()


def extract_lab_block(content: str) -> str:
    """Pull the lab-looking lines out of a model reply.

    Accepts fenced or prose-wrapped answers; everything after a CORRECTED:
    marker wins when present.
    """
    if "CORRECTED:" in content:
        content = content.split("CORRECTED:", 1)[1]
    lines = [
        line for line in content.replace("```", "\n").splitlines()
        if _LAB_ROW_RE.match(line)
    ]
    if not lines:
        raise ValueError("no timeline rows found in the reply")
    return "\n".join(lines)


def make_timeline_validator(span: tuple[float, float]):
    """Validator for stage replies: parseable lab, same span, vocab labels."""

    def validate(content: str) -> Timeline:
        t = parse_lab(extract_lab_block(content), label_parser=parse_chord)
        if abs(t.span[0] - span[0]) > SPAN_TOLERANCE or abs(t.span[1] - span[1]) > SPAN_TOLERANCE:
            raise ValueError(f"span {t.span} does not match required {span}")
        for iv in t.intervals:
            if not in_vocabulary(iv.label):
                raise ValueError(f"label {format_chord(iv.label)} outside the vocabulary")
        return t

    return validate


def _parse_track_choice(content: str) -> tuple[str, str]:
    found = {m.group(1).lower(): m.group(2).lower() for m in _TRACK_RE.finditer(content)}
    primary, secondary = found.get("primary"), found.get("secondary")
    if primary not in TRACK_PRIORITY or secondary not in TRACK_PRIORITY:
        raise ValueError("need 'primary:' and 'secondary:' lines naming known tracks")
    if primary == secondary:
        raise ValueError("primary and secondary must name different tracks")
    return primary, secondary


def _messages_to_transcript(messages: list[ChatMessage]) -> list[dict]:
    return [{"role": m.role, "content": m.content} for m in messages]


class LLMReasoner:
    """Chat-model backend over a :class:`ChatClient`.

    Stage 1 asks for a primary/secondary ranking (that stage never edits
    labels); stages 2-4 ask for a full corrected timeline.  Validation
    failures after all retries fall back to the stage input (stage 1
    falls back to the rulebook ranking).
    """

    name = "llm"

    def __init__(self, client: ChatClient, config):
        self.client = client
        self.config = config
        self._system = ChatMessage("system", _load_prompt("system.txt"))

    def _request(self, prompt: str) -> ChatRequest:
        return ChatRequest(
            model=self.config.model,
            messages=(self._system, ChatMessage("user", prompt)),
            temperature=self.config.temperature,
        )

    def _chords_lab(self, t: Timeline) -> str:
        return write_lab(t, format_chord)

    def choose_tracks(self, candidates: dict[str, Timeline]) -> TrackChoice:
        prompt = _load_prompt("stage1_select.txt").format(
            **{name: self._chords_lab(t) for name, t in candidates.items()}
        )
        try:
            (primary, secondary), messages = self.client.complete_with_validation(
                self._request(prompt), _parse_track_choice, self.config.retry_count
            )
        except ValidationExhausted as exc:
            fallback = RulebookReasoner(self.config).choose_tracks(candidates)
            transcript = [{"fallback": "rulebook ranking", "attempts": exc.attempts}]
            transcript.extend(fallback.transcript)
            return TrackChoice(fallback.primary, fallback.secondary, transcript, skipped=True)
        return TrackChoice(primary, secondary, _messages_to_transcript(messages))

    def _revise(self, stage_prompt: str, current: Timeline) -> Revision:
        validator = make_timeline_validator(current.span)
        try:
            timeline, messages = self.client.complete_with_validation(
                self._request(stage_prompt), validator, self.config.retry_count
            )
        except ValidationExhausted as exc:
            return Revision(
                current,
                [{"fallback": "kept stage input", "attempts": exc.attempts}],
                skipped=True,
            )
        return Revision(timeline, _messages_to_transcript(messages))

    def correct_bass(self, current, bass, keys) -> Revision:
        prompt = _load_prompt("stage2_bass.txt").format(
            current=self._chords_lab(current),
            bass=write_lab(bass, format_bass_label),
            keys=write_lab(keys, format_key),
        )
        return self._revise(prompt, current)

    def correct_key(self, current, secondary, keys) -> Revision:
        prompt = _load_prompt("stage3_key.txt").format(
            current=self._chords_lab(current),
            secondary=self._chords_lab(secondary),
            keys=write_lab(keys, format_key),
        )
        return self._revise(prompt, current)

    def fix_anomalies(self, current, report: list[Anomaly], keys) -> Revision:
        listing = "\n".join(
            f"ISSUE {a.start:.6f} {a.end:.6f} {a.category}: {a.reason}" for a in report
        ) or "(none)"
        prompt = _load_prompt("stage4_anomaly.txt").format(
            current=self._chords_lab(current),
            keys=write_lab(keys, format_key),
            report=listing,
        )
        return self._revise(prompt, current)
