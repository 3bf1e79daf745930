#!/usr/bin/env node
// acr-extract --audio <file> --out <dir> [--skip <tool>...] [--device <d>]
//             [--separator-cmd c] [--acr-cmd c] [--key-cmd c] [--beat-cmd c]

import { extractAll } from './extract.js';
import { ToolFailure, ToolMissing, ToolName } from './tools.js';

function usage(): never {
  console.error(
    'usage: acr-extract --audio <file> --out <dir> [--skip <separator|acr|key|beat>]... [--device <d>]',
  );
  process.exit(2);
}

function parseArgs(argv: string[]) {
  let audio: string | undefined;
  let out: string | undefined;
  let device: string | undefined;
  const skip: ToolName[] = [];
  const commands: Partial<Record<ToolName, string>> = {};
  const cmdFlags: Record<string, ToolName> = {
    '--separator-cmd': 'separator',
    '--acr-cmd': 'acr',
    '--key-cmd': 'key',
    '--beat-cmd': 'beat',
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      if (++i >= argv.length) usage();
      return argv[i];
    };
    if (arg === '--audio') audio = next();
    else if (arg === '--out') out = next();
    else if (arg === '--device') device = next();
    else if (arg === '--skip') {
      const tool = next();
      if (!['separator', 'acr', 'key', 'beat'].includes(tool)) usage();
      skip.push(tool as ToolName);
    } else if (arg in cmdFlags) commands[cmdFlags[arg]] = next();
    else usage();
  }
  if (!audio || !out) usage();
  return { audioPath: audio, outDir: out, skip, device, commands };
}

async function main() {
  const job = parseArgs(process.argv.slice(2));
  try {
    const entry = await extractAll(job);
    console.log(JSON.stringify(entry, null, 2));
  } catch (err) {
    if (err instanceof ToolMissing || err instanceof ToolFailure) {
      console.error(`error: ${err.message}`);
      process.exit(1);
    }
    throw err;
  }
}

main();
