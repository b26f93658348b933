import { defineConfig } from 'vitest/config';

// Dev server proxies /v1 to a locally running `semani serve` instance so the
// SPA and the API share an origin during development.
export default defineConfig({
  server: {
    proxy: {
      '/v1': 'http://127.0.0.1:8756',
    },
  },
  build: {
    target: 'es2022',
  },
  test: {
    environment: 'jsdom',
    include: ['tests/**/*.test.ts'],
  },
});
