// Spawns the real FastAPI server (building its fixture dataset on first run)
// for the integration suite; unit suites simply don't talk to it.

import { spawn, ChildProcess } from "node:child_process";
import * as path from "node:path";

const PORT = 8077;
let server: ChildProcess | null = null;

async function waitForServer(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(url);
      if (res.ok) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }
  throw new Error(`server at ${url} did not come up: ${lastError}`);
}

export async function setup(): Promise<void> {
  const script = path.join(__dirname, "scripts", "serve_fixture.py");
  const fixtureDir = path.join(__dirname, ".fixture");
  server = spawn("python3", [script, "--port", String(PORT), "--dir", fixtureDir], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  server.on("exit", (code) => {
    if (code !== null && code !== 0) {
      console.error(`fixture server exited with code ${code}`);
    }
  });
  process.env.MODALBENCH_URL = `http://127.0.0.1:${PORT}`;
  await waitForServer(`${process.env.MODALBENCH_URL}/meta`, 180_000);
}

export async function teardown(): Promise<void> {
  if (server && !server.killed) {
    server.kill("SIGTERM");
  }
}
