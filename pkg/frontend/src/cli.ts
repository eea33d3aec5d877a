import { spawnSync } from "node:child_process";

/**
 * Error raised when the core CLI rejects an input or fails.
 * `message` carries the core's diagnostic text; `stderr` the raw stream.
 */
export class BcpError extends Error {
  override readonly name = "BcpError";
  readonly stderr: string;

  constructor(message: string, stderr = "") {
    super(message);
    this.stderr = stderr;
  }
}

const ERROR_PREFIX = "bcp: error: ";

/** Command used to reach the core; override with BCP_CLI (space-separated). */
export function cliCommand(): string[] {
  const env = process.env.BCP_CLI;
  if (env && env.trim().length > 0) {
    return env.trim().split(/\s+/);
  }
  return ["bcp"];
}

/** Run a core subcommand and return its stdout. Throws BcpError on failure. */
export function runCli(args: string[]): string {
  const [cmd, ...prefix] = cliCommand();
  const proc = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.error) {
    throw new BcpError(`failed to launch core CLI '${cmd}': ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    const stderr = (proc.stderr ?? "").trim();
    const line = stderr.split("\n").pop() ?? "";
    const message = line.startsWith(ERROR_PREFIX)
      ? line.slice(ERROR_PREFIX.length)
      : stderr || `core CLI exited with status ${proc.status}`;
    throw new BcpError(message, stderr);
  }
  return proc.stdout;
}

/** Parse the single JSON object a core subcommand prints. */
export function runCliJson<T>(args: string[]): T {
  const stdout = runCli(args);
  try {
    return JSON.parse(stdout) as T;
  } catch (e) {
    throw new BcpError(`core CLI printed unparseable JSON: ${(e as Error).message}`);
  }
}
