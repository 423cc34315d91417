/** Engine process invocation. */

import { spawnSync } from "child_process";

/**
 * Command line of the engine CLI. Override with UOTKIT_CLI (split on
 * whitespace), e.g. `UOTKIT_CLI="python3 -m uotkit.cli"`.
 */
export function engineCommand(): string[] {
  const override = process.env.UOTKIT_CLI;
  if (override && override.trim().length > 0) {
    return override.trim().split(/\s+/);
  }
  return ["uotkit"];
}

/** Run one engine command; throws with the engine's stderr verbatim. */
export function runEngine(args: string[]): string {
  const [cmd, ...prefix] = engineCommand();
  const proc = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) {
    throw new Error(`failed to launch engine '${cmd}': ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    const detail = (proc.stderr || proc.stdout || "").trim();
    throw new Error(detail.length > 0 ? detail : `engine exited with status ${proc.status}`);
  }
  return proc.stdout;
}
