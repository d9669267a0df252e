import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    fileParallelism: false, // each suite owns a service on its own port
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
