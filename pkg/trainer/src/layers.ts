/**
 * Custom layers.
 *
 * SpatialConv is a drop-in 2-D convolution (same parameter shapes and math
 * as conv2d with 'same' padding) expressed as pad + shifted slices + matMul.
 * The wasm backend does not register conv2d's filter-gradient kernel, so a
 * stock Conv2D cannot train there; this formulation uses only kernels whose
 * gradients the backend provides.  Strides subsample the stride-1 result,
 * which matches 'same'-padding strided convolution output positions.
 */

import * as tf from '@tensorflow/tfjs';

export interface SpatialConvArgs {
  filters: number;
  kernelSize: number | [number, number];
  strides?: number;
  activation?: 'relu' | 'linear';
  seed?: number;
  name?: string;
}

export class SpatialConv extends tf.layers.Layer {
  static className = 'SpatialConv';

  private filters: number;
  private kh: number;
  private kw: number;
  private stride: number;
  private activation: 'relu' | 'linear';
  private seed?: number;
  private kernel: tf.LayerVariable | null = null;
  private bias: tf.LayerVariable | null = null;

  constructor(args: SpatialConvArgs) {
    super({ name: args.name });
    this.filters = args.filters;
    const k = args.kernelSize;
    [this.kh, this.kw] = typeof k === 'number' ? [k, k] : k;
    if (this.kh % 2 === 0 || this.kw % 2 === 0) {
      throw new Error('SpatialConv supports odd kernel sizes only');
    }
    this.stride = args.strides ?? 1;
    this.activation = args.activation ?? 'linear';
    this.seed = args.seed;
  }

  override build(inputShape: tf.Shape | tf.Shape[]): void {
    const shape = inputShape as tf.Shape;
    const cin = shape[3] as number;
    this.kernel = this.addWeight(
      'kernel',
      [this.kh * this.kw * cin, this.filters],
      'float32',
      tf.initializers.glorotUniform({ seed: this.seed })
    );
    this.bias = this.addWeight(
      'bias', [this.filters], 'float32', tf.initializers.zeros()
    );
    this.built = true;
  }

  override call(inputs: tf.Tensor | tf.Tensor[]): tf.Tensor {
    return tf.tidy(() => {
      const x = Array.isArray(inputs) ? inputs[0] : inputs;
      const [batch, h, w, cin] = x.shape as [number, number, number, number];
      const py = (this.kh - 1) / 2;
      const px = (this.kw - 1) / 2;
      const padded = tf.pad(x, [[0, 0], [py, py], [px, px], [0, 0]]);
      const patches: tf.Tensor[] = [];
      for (let i = 0; i < this.kh; i++) {
        for (let j = 0; j < this.kw; j++) {
          patches.push(tf.slice(padded, [0, i, j, 0], [batch, h, w, cin]));
        }
      }
      const cols = tf.concat(patches, -1);
      const flat = tf.reshape(cols, [batch * h * w, this.kh * this.kw * cin]);
      let y = tf.add(tf.matMul(flat, this.kernel!.read()), this.bias!.read());
      let out = tf.reshape(y, [batch, h, w, this.filters]);
      if (this.stride > 1) {
        out = tf.maxPool(out as tf.Tensor4D, 1, this.stride, 'valid');
      }
      return this.activation === 'relu' ? tf.relu(out) : out;
    });
  }

  override computeOutputShape(inputShape: tf.Shape | tf.Shape[]): tf.Shape {
    const shape = inputShape as tf.Shape;
    const down = (n: number) => Math.floor((n - 1) / this.stride) + 1;
    return [shape[0], down(shape[1] as number), down(shape[2] as number), this.filters];
  }

  override getConfig(): tf.serialization.ConfigDict {
    return {
      ...super.getConfig(),
      filters: this.filters,
      kernelSize: [this.kh, this.kw],
      strides: this.stride,
      activation: this.activation,
      seed: this.seed ?? null,
    };
  }
}
tf.serialization.registerClass(SpatialConv);

/** Softmax over the channel axis; the stock layer trips the wasm backend's
 * last-dimension-only kernel on rank-4 inputs. */
export class ChannelSoftmax extends tf.layers.Layer {
  static className = 'ChannelSoftmax';

  override call(inputs: tf.Tensor | tf.Tensor[]): tf.Tensor {
    const x = Array.isArray(inputs) ? inputs[0] : inputs;
    return tf.softmax(x, -1);
  }

  override computeOutputShape(inputShape: tf.Shape | tf.Shape[]): tf.Shape {
    return inputShape as tf.Shape;
  }
}
tf.serialization.registerClass(ChannelSoftmax);
