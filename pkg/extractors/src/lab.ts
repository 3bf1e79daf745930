// Lab-format rows and the cleanup needed before the refinement pipeline
// will accept a file: contiguous coverage, micro-gap repair, gap filling,
// and chord labels restricted to the recognizer's vocabulary (plus N).

export interface LabRow {
  start: number;
  end: number;
  label: string;
}

const BOUNDARY_TOLERANCE = 1e-3;

const PITCH_CLASSES: Record<string, number> = {
  C: 0, 'C#': 1, Db: 1, D: 2, 'D#': 3, Eb: 3,
  E: 4, Fb: 4, 'E#': 5, F: 5, 'F#': 6, Gb: 6,
  G: 7, 'G#': 8, Ab: 8, A: 9, 'A#': 10, Bb: 10,
  B: 11, Cb: 11, 'B#': 0,
};

const PITCH_NAMES = ['C', 'Db', 'D', 'Eb', 'E', 'F', 'Gb', 'G', 'Ab', 'A', 'Bb', 'B'];

// Major-scale semitones for slash degrees 1-9.
const DEGREE_SEMITONES: Record<string, number> = {
  '1': 0, '2': 2, '3': 4, '4': 5, '5': 7, '6': 9, '7': 11, '8': 12, '9': 14,
};

// The 25 (quality, bass-interval) combinations of the 301-class vocabulary.
const VOCAB_COMBOS = new Set(
  [
    ['maj', 0], ['min', 0], ['aug', 0], ['dim', 0],
    ['maj', 4], ['maj', 7], ['min', 3], ['min', 7],
    ['maj7', 0], ['7', 0], ['min7', 0], ['dim7', 0], ['hdim7', 0],
    ['maj9', 0], ['9', 0], ['min9', 0], ['11', 0], ['13', 0],
    ['sus4', 0], ['sus2', 0], ['sus4(b7)', 0],
    ['maj', 2], ['maj', 10], ['min', 2], ['min', 10],
  ].map(([q, b]) => `${q}/${b}`),
);

export interface ParsedChord {
  root: number;
  quality: string;
  bassInterval: number;
}

export function parseChordLabel(label: string): ParsedChord | 'N' | null {
  const token = label.trim();
  if (token === 'N') return 'N';
  const colon = token.indexOf(':');
  if (colon <= 0) return null;
  const root = PITCH_CLASSES[token.slice(0, colon)];
  if (root === undefined) return null;
  const rest = token.slice(colon + 1);
  const slash = rest.indexOf('/');
  const quality = slash === -1 ? rest : rest.slice(0, slash);
  let bassInterval = 0;
  if (slash !== -1) {
    const degree = rest.slice(slash + 1);
    const m = /^([#b]?)([1-9])$/.exec(degree);
    if (!m) return null;
    bassInterval = DEGREE_SEMITONES[m[2]] + (m[1] === 'b' ? -1 : m[1] === '#' ? 1 : 0);
    bassInterval = ((bassInterval % 12) + 12) % 12;
  }
  return { root, quality, bassInterval };
}

/** Canonical vocabulary label, or "N" for anything the vocabulary lacks. */
export function toVocabularyLabel(label: string): string {
  const parsed = parseChordLabel(label);
  if (parsed === 'N') return 'N';
  if (parsed === null || !VOCAB_COMBOS.has(`${parsed.quality}/${parsed.bassInterval}`)) {
    return 'N';
  }
  const degree = ['1', 'b2', '2', 'b3', '3', '4', 'b5', '5', 'b6', '6', 'b7', '7'][
    parsed.bassInterval
  ];
  const head = `${PITCH_NAMES[parsed.root]}:${parsed.quality}`;
  return parsed.bassInterval === 0 ? head : `${head}/${degree}`;
}

/** The sounding bass note of a chord label, or N. */
export function bassNoteOf(label: string): string {
  const parsed = parseChordLabel(label);
  if (parsed === 'N' || parsed === null) return 'N';
  return PITCH_NAMES[(parsed.root + parsed.bassInterval) % 12];
}

export function parseLabText(text: string, what: string): LabRow[] {
  const rows: LabRow[] = [];
  for (const [i, raw] of text.split(/\r?\n/).entries()) {
    const line = raw.trim();
    if (!line || line.startsWith('#')) continue;
    const fields = line.split(/\s+/);
    if (fields.length < 3) {
      throw new Error(`${what}: line ${i + 1}: expected 3 fields`);
    }
    const start = Number(fields[0]);
    const end = Number(fields[1]);
    if (!Number.isFinite(start) || !Number.isFinite(end) || end <= start) {
      throw new Error(`${what}: line ${i + 1}: bad interval ${fields[0]} ${fields[1]}`);
    }
    rows.push({ start, end, label: fields[2] });
  }
  if (rows.length === 0) throw new Error(`${what}: no rows`);
  return rows;
}

/**
 * Make rows contiguous: snap sub-millisecond seams to their midpoint,
 * fill larger gaps with `filler` (or stretch the previous row when the
 * filler is null), and merge equal neighbors.
 */
export function makeContiguous(rows: LabRow[], filler: string | null): LabRow[] {
  const out: LabRow[] = [{ ...rows[0] }];
  for (const row of rows.slice(1)) {
    const prev = out[out.length - 1];
    const gap = row.start - prev.end;
    if (gap < -BOUNDARY_TOLERANCE) {
      throw new Error(`rows overlap at ${row.start}`);
    }
    const next = { ...row };
    if (Math.abs(gap) <= BOUNDARY_TOLERANCE) {
      const mid = (prev.end + row.start) / 2;
      prev.end = mid;
      next.start = mid;
    } else if (filler === null) {
      prev.end = row.start;
    } else {
      out.push({ start: prev.end, end: row.start, label: filler });
    }
    out.push(next);
  }
  const merged: LabRow[] = [out[0]];
  for (const row of out.slice(1)) {
    const prev = merged[merged.length - 1];
    if (row.label === prev.label) {
      prev.end = row.end;
    } else {
      merged.push(row);
    }
  }
  return merged;
}

export function formatLab(rows: LabRow[]): string {
  return rows.map((r) => `${r.start.toFixed(6)} ${r.end.toFixed(6)} ${r.label}`).join('\n') + '\n';
}
