/**
 * Spawns the seeded Python API server once for the whole vitest run and
 * tears it down afterwards.  Connection details are written to a JSON file
 * next to this module because globalSetup runs in a separate process from
 * the tests.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, unlinkSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

const here = fileURLToPath(new URL(".", import.meta.url));
export const SERVER_INFO_PATH = join(here, "server-info.json");

const TOKEN = "console-token";

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const { port } = probe.address() as net.AddressInfo;
      probe.close(() => resolve(port));
    });
  });
}

async function waitReady(baseUrl: string, child: ChildProcess, logs: () => string): Promise<void> {
  const deadline = Date.now() + 90_000;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`fixture server exited with ${child.exitCode}\n${logs()}`);
    }
    try {
      const res = await fetch(`${baseUrl}/api/review-items?page_size=1`, {
        headers: { Authorization: `Bearer ${TOKEN}` },
      });
      if (res.ok) {
        return;
      }
    } catch {
      // not accepting connections yet
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }
  throw new Error(`fixture server not ready in time\n${logs()}`);
}

export default async function setup(): Promise<() => void> {
  const port = await freePort();
  const workdir = mkdtempSync(join(tmpdir(), "kbassist-console-"));
  const script = join(here, "..", "..", "scripts", "serve_fixture.py");

  let output = "";
  const child = spawn("python3", [script, "--port", String(port), "--root", workdir], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  child.stdout?.on("data", (chunk) => {
    output += chunk;
  });
  child.stderr?.on("data", (chunk) => {
    output += chunk;
  });

  const baseUrl = `http://127.0.0.1:${port}`;
  try {
    await waitReady(baseUrl, child, () => output);
  } catch (err) {
    child.kill();
    rmSync(workdir, { recursive: true, force: true });
    throw err;
  }
  writeFileSync(SERVER_INFO_PATH, JSON.stringify({ baseUrl, token: TOKEN }));

  return () => {
    child.kill();
    try {
      unlinkSync(SERVER_INFO_PATH);
    } catch {
      // already gone
    }
    rmSync(workdir, { recursive: true, force: true });
  };
}
