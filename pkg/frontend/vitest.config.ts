import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // must be an origin the service's CORS policy allows
        url: "http://localhost:5173",
      },
    },
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
