import { fileURLToPath } from 'node:url'
import { defineConfig } from 'vite'

export default defineConfig({
  resolve: {
    alias: {
      // optional runtime of pose-detection that this app never loads
      '@mediapipe/pose': fileURLToPath(
        new URL('./src/shims/empty.ts', import.meta.url),
      ),
    },
  },
  test: {
    environment: 'node',
  },
})
