import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      // match the document origin to the live service so the integration
      // tests' fetches are same-origin, as they are in the real app
      happyDOM: { url: process.env.LABELSVC_URL || "http://localhost/" },
    },
    include: ["test/**/*.test.ts"],
  },
});
