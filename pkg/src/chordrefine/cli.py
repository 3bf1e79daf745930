"""Command-line front end: validate, refine, evaluate, align, report.

The manifest is JSON: {"dataset": name, "songs": [{"id": ..., "acr_full":
path, "acr_nodrums": path, "acr_nodrumsvocals": path, "bass": path,
"keys": path, "beats": path?, "reference": path?}, ...]} with paths
relative to the manifest file.  The pipeline config is an INI file (see
the README for the keys); every value has a default, so no config file
is needed for the rulebook backend.

Exit codes: 0 success, 1 input or validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

from .beat_align import build_grid, snap_timeline
from .harte import format_chord, parse_chord
from .metrics import REPORT_COLUMNS, aggregate_scores, evaluate_pair
from .refine import (
    RefinementConfig,
    STAGE_NAMES,
    load_song_bundle,
    run_pipeline,
)
from .rules import parse_bass_label
from .theory import parse_key
from .timeline import EXTEND_PREVIOUS, parse_lab, write_lab

log = logging.getLogger("chordrefine")

STAGE_ROW_NAMES = ["baseline"] + [STAGE_NAMES[k] for k in sorted(STAGE_NAMES)]

_TRACK_PARSERS = {
    "acr_full": (parse_chord, "N"),
    "acr_nodrums": (parse_chord, "N"),
    "acr_nodrumsvocals": (parse_chord, "N"),
    "bass": (parse_bass_label, "N"),
    "keys": (parse_key, EXTEND_PREVIOUS),
    "beats": (str, None),
    "reference": (parse_chord, "N"),
}

REQUIRED_TRACKS = ("acr_full", "acr_nodrums", "acr_nodrumsvocals", "bass", "keys")


class ManifestError(ValueError):
    pass


def load_manifest(path: str | Path) -> tuple[str, list[dict]]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}")
    songs = data.get("songs")
    if not isinstance(songs, list) or not songs:
        raise ManifestError("manifest needs a non-empty 'songs' list")
    seen = set()
    entries = []
    for song in songs:
        sid = song.get("id")
        if not sid or sid in seen:
            raise ManifestError(f"missing or duplicate song id: {sid!r}")
        seen.add(sid)
        entry = {"id": sid}
        for track in _TRACK_PARSERS:
            if song.get(track):
                entry[track] = path.parent / song[track]
        entries.append(entry)
    return data.get("dataset", path.parent.name), entries


def load_config(path: str | Path | None, overrides: dict | None = None) -> RefinementConfig:
    values: dict = {}
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ManifestError(f"config not found: {path}")
        pipeline = parser["pipeline"] if parser.has_section("pipeline") else {}
        llm = parser["llm"] if parser.has_section("llm") else {}
        if "backend" in pipeline:
            values["backend"] = pipeline["backend"].strip()
        if "stages" in pipeline:
            raw = pipeline["stages"].replace(",", " ").split()
            values["stages"] = tuple(int(s) for s in raw)
        for key, field in [
            ("beat_threshold", "beat_threshold"),
            ("bass_max_n_proportion", "bass_max_n_proportion"),
            ("bass_min_in_key", "bass_min_in_key"),
            ("n_fill_max_duration", "n_fill_max_duration"),
        ]:
            if key in pipeline:
                values[field] = float(pipeline[key])
        for key, cast in [
            ("endpoint", str), ("model", str), ("temperature", float),
            ("retry_count", int), ("max_in_flight", int),
            ("api_key_env", str), ("fixture", str), ("fixture_mode", str),
        ]:
            if key in llm:
                values[key] = cast(llm[key])
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return RefinementConfig(**values)


def _parse_track(track: str, path: Path):
    label_parser, gap_fill = _TRACK_PARSERS[track]
    return parse_lab(path.read_text(), label_parser=label_parser, gap_fill=gap_fill)


# ------------------------------------------------------------- validate

def cmd_validate(args) -> int:
    try:
        dataset, entries = load_manifest(args.manifest)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    problems = 0
    for entry in entries:
        for track in _TRACK_PARSERS:
            if track in REQUIRED_TRACKS and track not in entry:
                print(f"{entry['id']}: missing required track {track}")
                problems += 1
                continue
            if track not in entry:
                continue
            path = entry[track]
            try:
                _parse_track(track, path)
            except FileNotFoundError:
                print(f"{entry['id']}: {path}: file not found")
                problems += 1
            except Exception as exc:
                print(f"{entry['id']}: {path}: {exc}")
                problems += 1
        if "beats" in entry:
            try:
                build_grid(_parse_track("beats", entry["beats"]))
            except Exception as exc:
                print(f"{entry['id']}: {entry['beats']}: {exc}")
                problems += 1
    if problems:
        print(f"{problems} problem(s) in {dataset}", file=sys.stderr)
        return 1
    log.info("validated %d song(s) in %s", len(entries), dataset)
    return 0


# ------------------------------------------------------------- refine

def _refine_song(entry: dict, config: RefinementConfig, out_dir: Path) -> str:
    started = time.perf_counter()
    bundle = load_song_bundle(
        {k: v for k, v in entry.items() if k != "id"}, song_id=entry["id"]
    )
    final, traces = run_pipeline(bundle, config)
    sid = entry["id"]
    for trace in traces:
        path = out_dir / f"{sid}.stage{trace.stage}.lab"
        path.write_text(write_lab(trace.output, format_chord))
    (out_dir / f"{sid}.final.lab").write_text(write_lab(final, format_chord))
    (out_dir / f"{sid}.trace.json").write_text(
        json.dumps([t.to_dict() for t in traces], indent=2) + "\n"
    )
    log.info(
        "%s: refined in %.2fs (%s)",
        sid,
        time.perf_counter() - started,
        ", ".join(
            f"stage{t.stage}={'skip' if t.skipped else len(t.diffs)}" for t in traces
        ),
    )
    return sid


def cmd_refine(args) -> int:
    try:
        dataset, entries = load_manifest(args.manifest)
        config = load_config(
            args.config,
            {"backend": args.backend, "stages": _parse_stages(args.stages)},
        )
    except (ManifestError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    failures: list[tuple[str, str]] = []
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                pool.submit(_refine_song, entry, config, out_dir): entry["id"]
                for entry in entries
            }
            for future in concurrent.futures.as_completed(futures):
                sid = futures[future]
                try:
                    future.result()
                except Exception as exc:
                    failures.append((sid, str(exc)))
    else:
        for entry in entries:
            try:
                _refine_song(entry, config, out_dir)
            except Exception as exc:
                failures.append((entry["id"], str(exc)))

    if failures:
        print(f"{len(failures)} song(s) failed in {dataset}:", file=sys.stderr)
        for sid, message in failures:
            print(f"  {sid}: {message}", file=sys.stderr)
        return 1
    log.info("refined %d song(s) from %s into %s", len(entries), dataset, out_dir)
    return 0


def _parse_stages(text: str | None):
    if text is None:
        return None
    return tuple(int(s) for s in text.replace(",", " ").split())


# ------------------------------------------------------------- evaluate

def _format_scores(scores) -> dict:
    out = {}
    for metric in REPORT_COLUMNS:
        value = scores.score(metric)
        out[metric] = None if value is None else round(value * 100, 2)
    return out


def cmd_evaluate(args) -> int:
    try:
        ref = parse_lab(Path(args.ref).read_text(), parse_chord, gap_fill="N")
        est = parse_lab(Path(args.est).read_text(), parse_chord, gap_fill="N")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    scores = evaluate_pair(ref, est)
    print(json.dumps(_format_scores(scores), indent=2))
    return 0


# ------------------------------------------------------------- align

def cmd_align(args) -> int:
    try:
        chords = parse_lab(Path(args.chords).read_text(), parse_chord, gap_fill="N")
        beats = parse_lab(Path(args.beats).read_text(), gap_fill=None)
        grid = build_grid(beats)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    snapped, report = snap_timeline(chords, grid, args.threshold)
    text = write_lab(snapped, format_chord)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(json.dumps(report.to_dict()), file=sys.stderr)
    return 0


# ------------------------------------------------------------- report

def _song_stage_scores(entry: dict, out_dir: Path):
    reference = _parse_track("reference", entry["reference"])
    rows = {}
    baseline = _parse_track("acr_full", entry["acr_full"])
    rows["baseline"] = evaluate_pair(reference, baseline)
    for stage in sorted(STAGE_NAMES):
        path = out_dir / f"{entry['id']}.stage{stage}.lab"
        est = parse_lab(path.read_text(), parse_chord, gap_fill="N")
        rows[STAGE_NAMES[stage]] = evaluate_pair(reference, est)
    return rows


def cmd_report(args) -> int:
    try:
        dataset, entries = load_manifest(args.manifest)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)

    per_stage: dict[str, list] = {name: [] for name in STAGE_ROW_NAMES}
    skipped = 0
    for entry in entries:
        if "reference" not in entry:
            log.warning("%s: no reference annotation; excluded from report", entry["id"])
            skipped += 1
            continue
        try:
            for name, scores in _song_stage_scores(entry, out_dir).items():
                per_stage[name].append(scores)
        except FileNotFoundError as exc:
            print(f"error: {entry['id']}: {exc}", file=sys.stderr)
            return 1
    if not any(per_stage.values()):
        print("error: no songs with references to report on", file=sys.stderr)
        return 1

    rows = []
    for name in STAGE_ROW_NAMES:
        if not per_stage[name]:
            continue
        agg = aggregate_scores(per_stage[name])
        rows.append(
            {
                "dataset": dataset,
                "stage": name,
                "metrics": _format_scores(agg),
                "raw": {m: agg.score(m) for m in REPORT_COLUMNS},
            }
        )

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["dataset", "stage", *(m.capitalize() for m in REPORT_COLUMNS)])
    for row in rows:
        writer.writerow(
            [row["dataset"], row["stage"]]
            + [
                "" if row["metrics"][m] is None else f"{row['metrics'][m]:.2f}"
                for m in REPORT_COLUMNS
            ]
        )
    (out_dir / "report.csv").write_text(buffer.getvalue())
    (out_dir / "report.json").write_text(json.dumps(rows, indent=2) + "\n")
    if skipped:
        log.warning("%d song(s) had no reference and were excluded", skipped)
    print(buffer.getvalue(), end="")
    return 0


# ------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chordrefine",
        description="Refine and evaluate chord recognition timelines.",
    )
    parser.add_argument("--verbose", "-v", action="store_true")
    parser.add_argument("--quiet", "-q", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse every file a manifest names")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("refine", help="run the refinement stages over a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--backend", choices=["rulebook", "llm"])
    p.add_argument("--stages", help="comma-separated stage numbers to enable")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="score one estimate against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("align", help="snap chord boundaries to a beat grid")
    p.add_argument("--chords", required=True)
    p.add_argument("--beats", required=True)
    p.add_argument("--out")
    p.add_argument("--threshold", type=float, default=0.125)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("report", help="tabulate per-stage metrics over a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # anything a subcommand failed to classify
        log.error("unexpected failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
