import { defineConfig } from "vite";

const backend = process.env.CARTOGEN_BACKEND ?? "http://127.0.0.1:8008";

export default defineConfig({
  server: {
    proxy: Object.fromEntries(
      ["/styles", "/generate", "/jobs", "/healthz"].map((p) => [p, { target: backend }]),
    ),
  },
  build: { outDir: "dist" },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
