/**
 * The hybrid training objective: mean squared error on the QT depth grid
 * plus class-weighted categorical cross-entropy over the three MT split
 * maps.  The cross-entropy term is an unaveraged sum over branches and
 * cells (natural log, probabilities clamped at 1e-12); class weights are
 * lambda_s * p_{b,NS} / p_{b,s} from the label proportions.
 *
 * Two implementations share this file: a float64 reference used for parity
 * files and tests, and a tfjs twin used for gradient-based training.
 */

import * as tf from '@tensorflow/tfjs';
import { NUM_CLASSES, NUM_MT_LEVELS } from './format';

export const NS_CLASS = 2;  // label order VTT, VBT, NS, HBT, HTT
export const DEFAULT_LAMBDAS = new Float64Array([1, 2, 1, 2, 1]);  // BT weighted 2
export const PROB_FLOOR = 1e-12;

export interface LossWeights {
  a: number;
  lambdas: Float64Array;      // per class, label order
  proportions: Float64Array;  // 3*5 row-major
}

/** Eq.-style class weights; classes absent from a branch get weight 0. */
export function weightMatrix(w: LossWeights): Float64Array {
  const out = new Float64Array(NUM_MT_LEVELS * NUM_CLASSES);
  for (let b = 0; b < NUM_MT_LEVELS; b++) {
    const pNs = w.proportions[b * NUM_CLASSES + NS_CLASS];
    for (let s = 0; s < NUM_CLASSES; s++) {
      const p = w.proportions[b * NUM_CLASSES + s];
      out[b * NUM_CLASSES + s] = p > 0 ? (w.lambdas[s] * pNs) / p : 0;
    }
  }
  return out;
}

/** Float64 reference value for one sample. */
export function hybridLossF64(
  qtPred: ArrayLike<number>,
  qtTrue: ArrayLike<number>,
  mtProbs: ArrayLike<number>,   // 3*n4*5
  mtTrue: ArrayLike<number>,    // 3*n4
  w: LossWeights,
  meanCe = false
): number {
  let mse = 0;
  for (let i = 0; i < qtPred.length; i++) {
    const d = qtTrue[i] - qtPred[i];
    mse += d * d;
  }
  mse /= qtPred.length;

  const weights = weightMatrix(w);
  const cellsPerBranch = mtTrue.length / NUM_MT_LEVELS;
  let ce = 0;
  for (let b = 0; b < NUM_MT_LEVELS; b++) {
    for (let i = 0; i < cellsPerBranch; i++) {
      const y = mtTrue[b * cellsPerBranch + i];
      const p = Math.max(mtProbs[(b * cellsPerBranch + i) * NUM_CLASSES + y], PROB_FLOOR);
      ce += weights[b * NUM_CLASSES + y] * Math.log(p);
    }
  }
  if (meanCe) ce /= mtTrue.length;
  return w.a * mse - (1 - w.a) * ce;
}

export interface LossTensors {
  qtTrue: tf.Tensor;        // (batch, 16, 16, 1)
  mtOneHot: tf.Tensor[];    // three (batch, 32, 32, 5)
  cellWeights: tf.Tensor[]; // three (batch, 32, 32) = w_{b, y} per cell
}

/** tfjs twin, averaged over the batch.  Inputs come from labelTensors(). */
export function hybridLossTf(
  qtPred: tf.Tensor,
  mtProbs: tf.Tensor[],
  labels: LossTensors,
  a: number,
  meanCe = false
): tf.Scalar {
  return tf.tidy(() => {
    const batch = qtPred.shape[0]!;
    const mse = tf.mean(tf.square(tf.sub(labels.qtTrue, qtPred)));
    let ce = tf.zeros([]);
    for (let b = 0; b < NUM_MT_LEVELS; b++) {
      const pTrue = tf.sum(tf.mul(mtProbs[b], labels.mtOneHot[b]), -1);
      const logp = tf.log(tf.clipByValue(pTrue, PROB_FLOOR, 1.0));
      ce = tf.add(ce, tf.sum(tf.mul(labels.cellWeights[b], logp)));
    }
    ce = tf.div(ce, tf.scalar(batch));
    if (meanCe) {
      const cells = NUM_MT_LEVELS * mtProbs[0].shape[1]! * mtProbs[0].shape[2]!;
      ce = tf.div(ce, tf.scalar(cells));
    }
    return tf.add(tf.mul(tf.scalar(a), mse), tf.mul(tf.scalar(-(1 - a)), ce)) as tf.Scalar;
  });
}

/** Same objective expressed on MT logits (softmax applied inside). */
export function hybridLossFromLogits(
  qtPred: tf.Tensor,
  mtLogits: tf.Tensor[],
  labels: LossTensors,
  a: number,
  meanCe = false
): tf.Scalar {
  return tf.tidy(() =>
    hybridLossTf(qtPred, mtLogits.map((l) => tf.softmax(l, -1)), labels, a, meanCe)
  );
}
