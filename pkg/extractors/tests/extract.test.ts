import { execFile } from 'node:child_process';
import { chmodSync, mkdirSync, mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { promisify } from 'node:util';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { extractAll } from '../src/extract.js';
import {
  bassNoteOf,
  makeContiguous,
  parseLabText,
  toVocabularyLabel,
} from '../src/lab.js';
import { ToolFailure, ToolMissing } from '../src/tools.js';

const execFileAsync = promisify(execFile);

let work: string;
let binDir: string;
let audio: string;
let originalPath: string;

function stub(name: string, body: string) {
  const path = join(binDir, name);
  writeFileSync(path, `#!/bin/sh\n${body}\n`);
  chmodSync(path, 0o755);
}

beforeAll(() => {
  work = mkdtempSync(join(tmpdir(), 'extractors-'));
  binDir = join(work, 'bin');
  mkdirSync(binDir);
  originalPath = process.env.PATH ?? '';
  process.env.PATH = `${binDir}:${originalPath}`;

  audio = join(work, 'tone.wav');
  writeFileSync(audio, 'RIFF fake ten second test tone');

  stub(
    'stem-separate',
    [
      'audio="$1"; out="$2"',
      'grep -q CORRUPT "$audio" && { echo "cannot decode $audio" >&2; exit 3; }',
      'mkdir -p "$out"',
      'for f in nodrums nodrumsvocals bass; do cp "$audio" "$out/$f.wav"; done',
    ].join('\n'),
  );
  stub(
    'chord-recognize',
    [
      'case "$1" in',
      '  *bass*) printf "0.000 2.000 C:maj\\n2.000 4.000 A:min/b3\\n4.000 6.000 N\\n6.000 10.000 G:maj\\n" ;;',
      '  *nodrumsvocals*) printf "0.000 5.000 C:maj\\n5.000 10.000 A:min\\n" ;;',
      '  *nodrums*) printf "0.000 3.000 C:maj\\n3.0004 6.000 A:min7\\n6.000 8.000 C:quartal\\n8.000 10.000 G:maj\\n" ;;',
      '  *) printf "0.000 2.500 C:maj\\n2.500 5.000 F:maj/5\\n5.500 10.000 G:7\\n" ;;',
      'esac',
    ].join('\n'),
  );
  stub('key-detect', 'printf "0.0 4.0 C:maj\\n4.5 10.0 A:min\\n"');
  stub(
    'beat-track',
    'awk \'BEGIN { for (i = 0; i <= 20; i++) printf "%.2f %d\\n", i * 0.5, i % 4 + 1 }\'',
  );
});

afterAll(() => {
  process.env.PATH = originalPath;
});

describe('label handling', () => {
  it('canonicalizes vocabulary labels and rejects the rest', () => {
    expect(toVocabularyLabel('C#:maj')).toBe('Db:maj');
    expect(toVocabularyLabel('A:min/b3')).toBe('A:min/b3');
    expect(toVocabularyLabel('C:quartal')).toBe('N');
    expect(toVocabularyLabel('C:maj7/3')).toBe('N'); // combo outside the 25
    expect(toVocabularyLabel('N')).toBe('N');
  });

  it('extracts the sounding bass note', () => {
    expect(bassNoteOf('G:maj')).toBe('G');
    expect(bassNoteOf('A:min/b3')).toBe('C');
    expect(bassNoteOf('N')).toBe('N');
  });

  it('repairs seams, fills gaps, and merges equal neighbors', () => {
    const rows = makeContiguous(
      [
        { start: 0, end: 1.0002, label: 'a' },
        { start: 1.0006, end: 2, label: 'a' },
        { start: 3, end: 4, label: 'b' },
      ],
      'N',
    );
    expect(rows).toEqual([
      { start: 0, end: 2, label: 'a' },
      { start: 2, end: 3, label: 'N' },
      { start: 3, end: 4, label: 'b' },
    ]);
  });
});

describe('extractAll with stubbed tools', () => {
  it('writes six contiguous lab files and a manifest entry', async () => {
    const outDir = join(work, 'out');
    const entry = await extractAll({ audioPath: audio, outDir });

    const tracks = ['acr_full', 'acr_nodrums', 'acr_nodrumsvocals', 'bass', 'keys', 'beats'];
    expect(Object.keys(entry).sort()).toEqual(['id', ...tracks].sort());
    expect(entry.id).toBe('tone');

    for (const track of tracks) {
      const text = readFileSync(join(outDir, entry[track]), 'utf8');
      const rows = parseLabText(text, track);
      for (let i = 1; i < rows.length; i++) {
        expect(rows[i].start).toBe(rows[i - 1].end);
      }
    }

    const full = parseLabText(readFileSync(join(outDir, entry.acr_full), 'utf8'), 'f');
    expect(full.map((r) => r.label)).toEqual(['C:maj', 'F:maj/5', 'N', 'G:7']);

    const nodrums = parseLabText(readFileSync(join(outDir, entry.acr_nodrums), 'utf8'), 'n');
    expect(nodrums.map((r) => r.label)).toContain('N'); // C:quartal got filtered
    expect(nodrums[0].end).toBeCloseTo(3.0002, 6); // micro seam snapped

    const bass = parseLabText(readFileSync(join(outDir, entry.bass), 'utf8'), 'b');
    expect(bass.map((r) => r.label)).toEqual(['C', 'N', 'G']); // C merged across rows

    const manifest = JSON.parse(readFileSync(join(outDir, 'manifest.json'), 'utf8'));
    expect(manifest.songs).toHaveLength(1);
    expect(manifest.songs[0]).toEqual(entry);
  });

  it('is accepted by the refinement pipeline validator', async () => {
    const outDir = join(work, 'out-validate');
    await extractAll({ audioPath: audio, outDir });
    const { stdout } = await execFileAsync('chordrefine', [
      'validate',
      '--manifest',
      join(outDir, 'manifest.json'),
    ]);
    expect(stdout).toBe(''); // diagnostics go to stdout; none expected
  });

  it('raises ToolMissing when an executable is absent', async () => {
    process.env.PATH = originalPath; // stubs no longer reachable
    try {
      await expect(
        extractAll({ audioPath: audio, outDir: join(work, 'out-missing') }),
      ).rejects.toThrowError(ToolMissing);
      await expect(
        extractAll({ audioPath: audio, outDir: join(work, 'out-missing') }),
      ).rejects.toThrowError(/separator/);
    } finally {
      process.env.PATH = `${binDir}:${originalPath}`;
    }
  });

  it('raises ToolFailure for unreadable audio', async () => {
    await expect(
      extractAll({ audioPath: join(work, 'nope.wav'), outDir: join(work, 'out-x') }),
    ).rejects.toThrowError(ToolFailure);
  });

  it('surfaces subprocess failures with their output', async () => {
    const corrupt = join(work, 'corrupt.wav');
    writeFileSync(corrupt, 'CORRUPT');
    await expect(
      extractAll({ audioPath: corrupt, outDir: join(work, 'out-y') }),
    ).rejects.toThrowError(/cannot decode/);
  });

  it('honors --skip by omitting those outputs', async () => {
    const outDir = join(work, 'out-skip');
    const entry = await extractAll({
      audioPath: audio,
      outDir,
      skip: ['beat', 'key'],
    });
    expect(entry.beats).toBeUndefined();
    expect(entry.keys).toBeUndefined();
    expect(entry.acr_full).toBeDefined();
  });
});
