import { defineConfig } from 'vitest/config';

export default defineConfig({
  resolve: {
    // Source files import with explicit .js extensions (native ESM in the
    // browser); map them back onto the .ts sources for the test runner.
    alias: [{ find: /^(\.{1,2}\/.*)\.js$/, replacement: '$1' }],
  },
  test: {
    environment: 'node',
    include: ['tests/**/*.test.ts'],
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
