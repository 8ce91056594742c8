/** Locating and invoking the core CLI.
 *
 * The command is taken from AIRWAYBEL_CLI (whitespace-separated, e.g.
 * "airwaybel" or "python3 -m airwaybel"); the default runs the module from
 * the repository checkout next to this package. Calls are async so heavy
 * kernels never block the event loop.
 */

import { execFile } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_SRC = resolve(HERE, "..", "..", "..", "src");

export class CoreError extends Error {
  constructor(
    message: string,
    public readonly exitCode: number,
  ) {
    super(message);
    this.name = "CoreError";
  }
}

function command(): { cmd: string; args: string[]; env: NodeJS.ProcessEnv } {
  const env: NodeJS.ProcessEnv = { ...process.env };
  const custom = process.env.AIRWAYBEL_CLI;
  if (custom) {
    const parts = custom.split(/\s+/).filter(Boolean);
    return { cmd: parts[0], args: parts.slice(1), env };
  }
  env.PYTHONPATH = env.PYTHONPATH ? `${REPO_SRC}:${env.PYTHONPATH}` : REPO_SRC;
  return { cmd: "python3", args: ["-m", "airwaybel"], env };
}

/** Run a CLI subcommand; resolves with stdout, rejects with CoreError
 * carrying the core's stderr text and exit code. A non-zero exit that the
 * CLI defines as informative (degenerate input, code 4) still resolves. */
export function runCli(args: string[], okCodes: number[] = [0, 4]): Promise<{ stdout: string; code: number }> {
  const { cmd, args: base, env } = command();
  return new Promise((resolvePromise, reject) => {
    execFile(cmd, [...base, ...args], { env, maxBuffer: 1 << 28 }, (error, stdout, stderr) => {
      const code = error && typeof (error as NodeJS.ErrnoException & { code?: number }).code === "number"
        ? ((error as unknown as { code: number }).code as number)
        : error
          ? 1
          : 0;
      if (error && !okCodes.includes(code)) {
        reject(new CoreError(stderr.toString().trim() || error.message, code));
        return;
      }
      resolvePromise({ stdout: stdout.toString(), code });
    });
  });
}

/** Temp workspace for one call's input/output volumes. */
export async function withScratch<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "airwaybel-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}
