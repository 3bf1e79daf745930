// extract_all: run the upstream tools over one audio file and write the
// six lab files the refinement pipeline consumes, plus a manifest entry.

import { constants as fsConstants } from 'node:fs';
import { access, mkdir, readFile, writeFile } from 'node:fs/promises';
import { basename, extname, join } from 'node:path';

import {
  LabRow,
  bassNoteOf,
  formatLab,
  makeContiguous,
  parseLabText,
  toVocabularyLabel,
} from './lab.js';
import {
  DEFAULT_COMMANDS,
  ToolFailure,
  ToolName,
  checkInstalled,
  runTool,
} from './tools.js';

export interface ExtractionJob {
  audioPath: string;
  outDir: string;
  skip?: ToolName[];
  device?: string;
  commands?: Partial<Record<ToolName, string>>;
}

export interface ManifestEntry {
  id: string;
  [track: string]: string;
}

function chordRows(stdout: string, what: string): LabRow[] {
  const rows = parseLabText(stdout, what).map((r) => ({
    ...r,
    label: toVocabularyLabel(r.label),
  }));
  return makeContiguous(rows, 'N');
}

function bassRows(stdout: string): LabRow[] {
  // Chord recognition on the bass stem, keeping only the sounding bass
  // note; quality information would conflict with the main tracks.
  const rows = parseLabText(stdout, 'bass').map((r) => ({
    ...r,
    label: bassNoteOf(r.label),
  }));
  return makeContiguous(rows, 'N');
}

function keyRows(stdout: string): LabRow[] {
  const rows = parseLabText(stdout, 'keys');
  for (const row of rows) {
    if (!/^[A-G][#b]?:(maj|min)$/.test(row.label)) {
      throw new ToolFailure('key', 'key-detect', `bad key label ${row.label}`);
    }
  }
  // A key stays in force until the next estimate: gaps extend the
  // previous segment rather than inserting a filler.
  return makeContiguous(rows, null);
}

function beatRows(stdout: string): LabRow[] {
  // The tracker emits "<time> <position>" instants; lab rows span from
  // each beat to the next and carry the first beat's position.
  const beats: Array<{ time: number; position: string }> = [];
  for (const [i, raw] of stdout.split(/\r?\n/).entries()) {
    const line = raw.trim();
    if (!line || line.startsWith('#')) continue;
    const fields = line.split(/\s+/);
    const time = Number(fields[0]);
    if (fields.length < 2 || !Number.isFinite(time) || !/^[1-4]$/.test(fields[1])) {
      throw new ToolFailure('beat', 'beat-track', `bad beat line ${i + 1}: ${line}`);
    }
    beats.push({ time, position: fields[1] });
  }
  if (beats.length < 2) {
    throw new ToolFailure('beat', 'beat-track', `${beats.length} beat(s); need at least 2`);
  }
  const rows: LabRow[] = [];
  for (let i = 0; i + 1 < beats.length; i++) {
    rows.push({ start: beats[i].time, end: beats[i + 1].time, label: beats[i].position });
  }
  return rows;
}

export async function extractAll(job: ExtractionJob): Promise<ManifestEntry> {
  await access(job.audioPath, fsConstants.R_OK).catch(() => {
    throw new ToolFailure('separator', 'stem-separate', `cannot read ${job.audioPath}`);
  });
  await mkdir(job.outDir, { recursive: true });

  const skip = new Set(job.skip ?? []);
  const commands = { ...DEFAULT_COMMANDS, ...(job.commands ?? {}) };
  const needed = (['separator', 'acr', 'key', 'beat'] as ToolName[]).filter(
    (t) => !skip.has(t),
  );
  await checkInstalled(needed, commands);

  const stem = basename(job.audioPath, extname(job.audioPath));
  const entry: ManifestEntry = { id: stem };

  const write = async (track: string, rows: LabRow[]) => {
    const filename = `${stem}.${track}.lab`;
    await writeFile(join(job.outDir, filename), formatLab(rows));
    entry[track] = filename;
  };

  if (!skip.has('separator') && !skip.has('acr')) {
    const stemsDir = join(job.outDir, `${stem}.stems`);
    await runTool('separator', commands.separator, [job.audioPath, stemsDir], job.device);

    // One tool subprocess at a time: recognition runs sequentially over
    // the full mix and each separated stem.
    const acr = (audio: string) =>
      runTool('acr', commands.acr, [audio], job.device);
    await write('acr_full', chordRows(await acr(job.audioPath), 'acr_full'));
    await write(
      'acr_nodrums',
      chordRows(await acr(join(stemsDir, 'nodrums.wav')), 'acr_nodrums'),
    );
    await write(
      'acr_nodrumsvocals',
      chordRows(await acr(join(stemsDir, 'nodrumsvocals.wav')), 'acr_nodrumsvocals'),
    );
    await write('bass', bassRows(await acr(join(stemsDir, 'bass.wav'))));
  }

  if (!skip.has('key')) {
    await write('keys', keyRows(await runTool('key', commands.key, [job.audioPath], job.device)));
  }
  if (!skip.has('beat')) {
    await write('beats', beatRows(await runTool('beat', commands.beat, [job.audioPath], job.device)));
  }

  await mergeManifest(job.outDir, entry);
  return entry;
}

async function mergeManifest(outDir: string, entry: ManifestEntry): Promise<void> {
  const path = join(outDir, 'manifest.json');
  let manifest: { dataset: string; songs: ManifestEntry[] };
  try {
    manifest = JSON.parse(await readFile(path, 'utf8'));
  } catch {
    manifest = { dataset: basename(outDir), songs: [] };
  }
  manifest.songs = manifest.songs.filter((s) => s.id !== entry.id);
  manifest.songs.push(entry);
  manifest.songs.sort((a, b) => a.id.localeCompare(b.id));
  await writeFile(path, JSON.stringify(manifest, null, 2) + '\n');
}
