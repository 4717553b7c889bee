// A deterministic stand-in segmentation model built from tfjs ops.
//
// The exporter's contract only needs "penultimate features + per-class
// logits"; this seeded conv stack provides both without bundling weights.
// A real checkpoint can be swapped in by implementing SegmentationModel.

import * as tf from '@tensorflow/tfjs';
import * as fs from 'fs';

export interface ModelSpec {
  model: string;       // identifier recorded in the manifest
  classes: number;     // K
  feature_dim: number; // D, penultimate channel count
  stride: number;      // feature downsampling factor (power of two)
  seed: number;
  layer: string;       // user-named feature layer, recorded in the manifest
}

export interface SegmentationModel {
  spec: ModelSpec;
  // image: [H, W, 3] uint8 -> features [Hf, Wf, D] and logits [H, W, K]
  run(image: tf.Tensor3D): { features: tf.Tensor3D; logits: tf.Tensor3D };
}

export function loadModelSpec(path: string): ModelSpec {
  const raw = JSON.parse(fs.readFileSync(path, 'utf-8'));
  const required = ['model', 'classes', 'feature_dim', 'stride', 'seed', 'layer'];
  for (const key of required) {
    if (!(key in raw)) throw new Error(`model spec missing key '${key}'`);
  }
  const unknown = Object.keys(raw).filter((k) => !required.includes(k));
  if (unknown.length) throw new Error(`unknown model spec keys: ${unknown.join(', ')}`);
  const spec = raw as ModelSpec;
  if (spec.classes < 2) throw new Error('classes must be >= 2');
  if (spec.feature_dim < 1) throw new Error('feature_dim must be >= 1');
  if (spec.stride < 1 || (spec.stride & (spec.stride - 1)) !== 0) {
    throw new Error('stride must be a power of two');
  }
  return spec;
}

// mulberry32: small seeded PRNG, enough for reproducible weight init
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function glorotUniform(rand: () => number, shape: number[]): tf.Tensor {
  const fanIn = shape[0] * shape[1] * shape[2];
  const fanOut = shape[0] * shape[1] * shape[3];
  const limit = Math.sqrt(6 / (fanIn + fanOut));
  const n = shape.reduce((a, b) => a * b, 1);
  const values = new Float32Array(n);
  for (let i = 0; i < n; i++) values[i] = (2 * rand() - 1) * limit;
  return tf.tensor(values, shape);
}

export class SeededConvModel implements SegmentationModel {
  spec: ModelSpec;
  private kernels: tf.Tensor4D[] = [];
  private head: tf.Tensor4D;

  constructor(spec: ModelSpec) {
    this.spec = spec;
    const rand = mulberry32(spec.seed);
    const blocks = Math.log2(spec.stride);
    let channels = 3;
    for (let b = 0; b < blocks; b++) {
      const out = b === blocks - 1 ? spec.feature_dim : Math.min(32, spec.feature_dim);
      this.kernels.push(glorotUniform(rand, [3, 3, channels, out]) as tf.Tensor4D);
      channels = out;
    }
    if (blocks === 0) {
      this.kernels.push(glorotUniform(rand, [3, 3, 3, spec.feature_dim]) as tf.Tensor4D);
    }
    this.head = glorotUniform(rand, [1, 1, spec.feature_dim, spec.classes]) as tf.Tensor4D;
  }

  run(image: tf.Tensor3D): { features: tf.Tensor3D; logits: tf.Tensor3D } {
    const [h, w] = image.shape;
    return tf.tidy(() => {
      let x = tf.sub(tf.div(tf.cast(image, 'float32'), 127.5), 1.0) as tf.Tensor3D;
      for (let b = 0; b < this.kernels.length; b++) {
        const stride = this.kernels.length > 1 || this.spec.stride > 1 ? 2 : 1;
        x = tf.relu(tf.conv2d(x, this.kernels[b], stride, 'same')) as tf.Tensor3D;
      }
      const features = x;
      const coarse = tf.conv2d(features, this.head, 1, 'same');
      const logits = tf.image.resizeBilinear(coarse, [h, w]) as tf.Tensor3D;
      return { features: tf.keep(features), logits: tf.keep(logits) };
    });
  }
}
