import * as tf from '@tensorflow/tfjs';
import * as path from 'path';

let ready: Promise<string> | null = null;

/**
 * Select the fastest usable backend.  The wasm backend covers every kernel
 * this model trains with (convolution is expressed as pad/slice/matMul, see
 * layers.ts); the pure-js cpu backend is the fallback.
 */
export function setupBackend(prefer: string = process.env.TRAINER_BACKEND ?? 'wasm'): Promise<string> {
  if (!ready) {
    ready = (async () => {
      if (prefer === 'wasm') {
        try {
          const wasm = require('@tensorflow/tfjs-backend-wasm');
          const dist = path.dirname(require.resolve('@tensorflow/tfjs-backend-wasm/dist/tf-backend-wasm.js'));
          wasm.setWasmPaths(dist + path.sep);
          if (await tf.setBackend('wasm')) {
            await tf.ready();
            return tf.getBackend();
          }
        } catch {
          // fall through to cpu
        }
      }
      await tf.setBackend('cpu');
      await tf.ready();
      return tf.getBackend();
    })();
  }
  return ready;
}

/** Deterministic 32-bit PRNG for shuffling and synthetic data. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}
