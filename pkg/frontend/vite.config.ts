import { defineConfig } from "vite";

// dev server proxies the socket to a locally running serve process
export default defineConfig({
  server: {
    proxy: {
      "/ws": {
        target: "ws://127.0.0.1:8000",
        ws: true,
      },
    },
  },
});
