// Subprocess plumbing for the upstream tools. The tools themselves are
// not bundled: installing them (and their model weights) is the user's
// job. Each one is an executable on PATH with a tiny CLI contract:
//
//   stem-separate <audio> <outdir>   writes nodrums.wav, nodrumsvocals.wav,
//                                    bass.wav into <outdir>
//   chord-recognize <audio>          prints "<start> <end> <chord>" rows
//   key-detect <audio>               prints "<start> <end> <root>:maj|min" rows
//   beat-track <audio>               prints "<time> <position>" instants
//
// Command names are overridable so wrapper scripts can adapt whatever
// the installed tools actually look like.

import { execFile } from 'node:child_process';
import { constants as fsConstants } from 'node:fs';
import { access } from 'node:fs/promises';
import { delimiter, join } from 'node:path';
import { promisify } from 'node:util';

const execFileAsync = promisify(execFile);

export type ToolName = 'separator' | 'acr' | 'key' | 'beat';

export const DEFAULT_COMMANDS: Record<ToolName, string> = {
  separator: 'stem-separate',
  acr: 'chord-recognize',
  key: 'key-detect',
  beat: 'beat-track',
};

export class ToolMissing extends Error {
  constructor(public readonly tool: ToolName, command: string) {
    super(`${tool} tool not installed (looked for '${command}' on PATH)`);
  }
}

export class ToolFailure extends Error {
  constructor(public readonly tool: ToolName, command: string, detail: string) {
    super(`${tool} tool failed (${command}): ${detail}`);
  }
}

async function onPath(command: string): Promise<boolean> {
  if (command.includes('/')) {
    return access(command, fsConstants.X_OK).then(() => true, () => false);
  }
  const dirs = (process.env.PATH ?? '').split(delimiter).filter(Boolean);
  for (const dir of dirs) {
    const ok = await access(join(dir, command), fsConstants.X_OK).then(
      () => true,
      () => false,
    );
    if (ok) return true;
  }
  return false;
}

export async function checkInstalled(
  tools: ToolName[],
  commands: Record<ToolName, string>,
): Promise<void> {
  for (const tool of tools) {
    if (!(await onPath(commands[tool]))) {
      throw new ToolMissing(tool, commands[tool]);
    }
  }
}

export async function runTool(
  tool: ToolName,
  command: string,
  args: string[],
  device?: string,
): Promise<string> {
  try {
    const { stdout } = await execFileAsync(command, args, {
      maxBuffer: 64 * 1024 * 1024,
      env: device ? { ...process.env, MIR_TOOL_DEVICE: device } : process.env,
    });
    return stdout;
  } catch (err) {
    const e = err as NodeJS.ErrnoException & { stderr?: string; stdout?: string };
    if (e.code === 'ENOENT') {
      throw new ToolMissing(tool, command);
    }
    const detail = (e.stderr || e.stdout || e.message || 'unknown error').trim();
    throw new ToolFailure(tool, command, detail);
  }
}
