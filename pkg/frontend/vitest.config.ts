import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["./globalSetup.ts"],
    testTimeout: 60_000,
    hookTimeout: 240_000,
    // the server fixture is shared; keep files sequential on small hosts
    fileParallelism: false,
  },
});
