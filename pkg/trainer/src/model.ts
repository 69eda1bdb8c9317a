/**
 * The multi-scale motion-field partition-path CNN.
 *
 * Seven inputs: the 128x128x2 pixel+residual block, a 32x32x2 plane pair
 * holding the QP and temporal-id scalars, and five motion-field grids
 * (2x2x6 .. 32x32x6).  Four outputs: a 16x16x1 linear QT-depth regression
 * and three 32x32x5 softmax split-class maps, predicted hierarchically
 * (each MT branch sees the shared features plus every earlier output).
 */

import * as tf from '@tensorflow/tfjs';
import { ChannelSoftmax, SpatialConv } from './layers';

export interface ModelSpec {
  /** Width of the first strided input conv (the second is pinned at 8). */
  ctuConvFilters: number;
  /** Encoder widths at resolutions 32/16/8; levels 4 and 2 reuse the last. */
  encoderWidths: [number, number, number];
  /** Width of the QT-head convolutions. */
  qtFilters: number;
  /** Width of each asymmetric-kernel branch and the MT residual blocks. */
  mtFilters: number;
  seed: number;
}

export const DEFAULT_SPEC: ModelSpec = {
  ctuConvFilters: 8,
  encoderWidths: [16, 32, 64],
  qtFilters: 16,
  mtFilters: 8,
  seed: 1,
};

export const CTU_SIZE = 128;
export const MVF_GRIDS = [2, 4, 8, 16, 32];
export const FEATURE_CHANNELS = 8;      // U-Net extractor output: 32x32x8
export const MT_KERNELS: Array<[number, number, number]> = [
  [5, 7, 9],
  [3, 5, 7],
  [1, 3, 3],
];
export const PARAM_CEILING = 5_000_000;

export interface ModelParts {
  extractor: tf.LayersModel;           // 7 inputs -> 32x32x8 features
  qtHead: tf.LayersModel;              // features -> 16x16x1 (linear)
  mtHeads: tf.LayersModel[];           // [features, qt, ...prev] -> 32x32x5
  full: tf.LayersModel;                // everything composed, for training
  spec: ModelSpec;
}

function conv(
  filters: number, kernel: number | [number, number], seed: number,
  opts: { strides?: number; activation?: 'relu' | 'linear'; name?: string } = {}
): SpatialConv {
  return new SpatialConv({
    filters,
    kernelSize: kernel,
    strides: opts.strides,
    activation: opts.activation ?? 'relu',
    seed,
    name: opts.name,
  });
}

function buildExtractor(spec: ModelSpec): tf.LayersModel {
  let seed = spec.seed * 1000;
  const ctu = tf.input({ shape: [CTU_SIZE, CTU_SIZE, 2], name: 'ctu_pixels' });
  const planes = tf.input({ shape: [32, 32, 2], name: 'qp_tid_planes' });
  const mvf = MVF_GRIDS.map((g) =>
    tf.input({ shape: [g, g, 6], name: `mvf_${g}x${g}` })
  );

  // two strided convolutions bring the CTU tensor to 32x32x8
  let x = conv(spec.ctuConvFilters, 3, seed++, { strides: 2 }).apply(ctu) as tf.SymbolicTensor;
  x = conv(FEATURE_CHANNELS, 3, seed++, { strides: 2 }).apply(x) as tf.SymbolicTensor;
  x = tf.layers.concatenate().apply([x, planes]) as tf.SymbolicTensor;

  // U-Net encoder 32 -> 2
  const widths = [
    spec.encoderWidths[0], spec.encoderWidths[1], spec.encoderWidths[2],
    spec.encoderWidths[2], spec.encoderWidths[2],
  ];
  const skips: tf.SymbolicTensor[] = [];
  let cur = x;
  for (let lvl = 0; lvl < 5; lvl++) {
    cur = conv(widths[lvl], 3, seed++).apply(cur) as tf.SymbolicTensor;
    skips.push(cur);
    if (lvl < 4) {
      cur = tf.layers.maxPooling2d({ poolSize: 2 }).apply(cur) as tf.SymbolicTensor;
    }
  }

  // decoder: at each resolution merge the upsampled features, the encoder
  // skip, and the same-scale motion field
  cur = tf.layers.concatenate().apply([skips[4], mvf[0]]) as tf.SymbolicTensor;
  for (let lvl = 3; lvl >= 0; lvl--) {
    cur = conv(widths[lvl], 3, seed++).apply(cur) as tf.SymbolicTensor;
    cur = tf.layers.upSampling2d({ size: [2, 2] }).apply(cur) as tf.SymbolicTensor;
    cur = tf.layers.concatenate().apply(
      [cur, skips[lvl], mvf[4 - lvl]]
    ) as tf.SymbolicTensor;
  }
  const feat = conv(FEATURE_CHANNELS, 3, seed++).apply(cur) as tf.SymbolicTensor;

  return tf.model({
    inputs: [ctu, planes, ...mvf],
    outputs: feat,
    name: 'feature_extractor',
  });
}

function buildQtHead(spec: ModelSpec): tf.LayersModel {
  let seed = spec.seed * 2000;
  const feat = tf.input({ shape: [32, 32, FEATURE_CHANNELS], name: 'features' });
  let q = conv(spec.qtFilters, 3, seed++).apply(feat) as tf.SymbolicTensor;
  q = conv(spec.qtFilters, 3, seed++, { strides: 2 }).apply(q) as tf.SymbolicTensor;
  q = conv(spec.qtFilters, 3, seed++).apply(q) as tf.SymbolicTensor;
  q = conv(spec.qtFilters, 3, seed++).apply(q) as tf.SymbolicTensor;
  // no activation on the fully connected output of the depth branch
  const out = tf.layers.dense({
    units: 1, name: 'qt_depth_out',
    kernelInitializer: tf.initializers.glorotUniform({ seed: seed++ }),
  }).apply(q) as tf.SymbolicTensor;
  return tf.model({ inputs: feat, outputs: out, name: 'qt_head' });
}

function buildMtHead(spec: ModelSpec, branch: number): tf.LayersModel {
  let seed = spec.seed * 3000 + branch * 100;
  const feat = tf.input({ shape: [32, 32, FEATURE_CHANNELS], name: `mt${branch}_features` });
  const qt = tf.input({ shape: [16, 16, 1], name: `mt${branch}_qt_in` });
  const prev = [];
  for (let b = 0; b < branch; b++) {
    prev.push(tf.input({ shape: [32, 32, 5], name: `mt${branch}_prev${b}` }));
  }

  const [m, n, l] = MT_KERNELS[branch];
  const a1 = conv(spec.mtFilters, [m, n], seed++).apply(feat) as tf.SymbolicTensor;
  const a2 = conv(spec.mtFilters, [l, l], seed++).apply(feat) as tf.SymbolicTensor;
  const a3 = conv(spec.mtFilters, [n, m], seed++).apply(feat) as tf.SymbolicTensor;
  const qtUp = tf.layers.upSampling2d({ size: [2, 2] }).apply(qt) as tf.SymbolicTensor;
  let merged = tf.layers.concatenate().apply(
    [a1, a2, a3, qtUp, ...prev]
  ) as tf.SymbolicTensor;
  let cur = conv(spec.mtFilters, 1, seed++).apply(merged) as tf.SymbolicTensor;
  for (let r = 0; r < 2; r++) {
    let t = conv(spec.mtFilters, 3, seed++).apply(cur) as tf.SymbolicTensor;
    t = conv(spec.mtFilters, 3, seed++, { activation: 'linear' }).apply(t) as tf.SymbolicTensor;
    cur = tf.layers.add().apply([cur, t]) as tf.SymbolicTensor;
    cur = tf.layers.reLU().apply(cur) as tf.SymbolicTensor;
  }
  const logits = conv(5, 1, seed++, { activation: 'linear' }).apply(cur) as tf.SymbolicTensor;
  const probs = new ChannelSoftmax({}).apply(logits) as tf.SymbolicTensor;
  return tf.model({ inputs: [feat, qt, ...prev], outputs: probs, name: `mt${branch}_head` });
}

export function buildModel(spec: ModelSpec = DEFAULT_SPEC): ModelParts {
  const extractor = buildExtractor(spec);
  const qtHead = buildQtHead(spec);
  const mtHeads = [0, 1, 2].map((b) => buildMtHead(spec, b));

  const ctu = tf.input({ shape: [CTU_SIZE, CTU_SIZE, 2], name: 'in_ctu' });
  const planes = tf.input({ shape: [32, 32, 2], name: 'in_planes' });
  const mvf = MVF_GRIDS.map((g) => tf.input({ shape: [g, g, 6], name: `in_mvf${g}` }));

  const feat = extractor.apply([ctu, planes, ...mvf]) as tf.SymbolicTensor;
  const qt = qtHead.apply(feat) as tf.SymbolicTensor;
  const mtOuts: tf.SymbolicTensor[] = [];
  for (let b = 0; b < 3; b++) {
    mtOuts.push(
      mtHeads[b].apply([feat, qt, ...mtOuts]) as tf.SymbolicTensor
    );
  }
  const full = tf.model({
    inputs: [ctu, planes, ...mvf],
    outputs: [qt, ...mtOuts],
    name: 'msmvf_cnn',
  });
  if (full.countParams() > PARAM_CEILING) {
    throw new Error(`model has ${full.countParams()} parameters, above the ${PARAM_CEILING} ceiling`);
  }
  return { extractor, qtHead, mtHeads, full, spec };
}
