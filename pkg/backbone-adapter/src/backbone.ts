/**
 * Deterministic convolutional feature extractor.
 *
 * Weights are fixed at module load from the pinned SplitMix64 stream, so
 * every run of every build produces identical features. The architecture:
 *
 *   RGB 64x64 (bilinear, /255)
 *   -> conv 3x3 valid, 8 filters, relu -> avg pool 2x2     (31x31x8)
 *   -> conv 3x3 valid, 16 filters, linear -> avg pool 2x2  (14x14x16)
 *   -> 4x4 grid average pooling                            (4*4*16 = 256)
 *   -> L2 normalization to a fixed length
 *
 * The second convolution stays linear so pooled activations are signed
 * and zero-centered; with relu everywhere the shared non-negative
 * component dominates every vector and linear probes condition poorly.
 *
 * Swapping in an exported pretrained graph is a drop-in replacement as
 * long as the emitted id/dim pair changes with it.
 */

import { Raster, resizeToFloat } from './image'
import { SplitMix64, deriveSeed } from './rng'

export const BACKBONE_ID = 'builtin-conv-v1'
export const BACKBONE_VERSION = '1'
export const FEATURE_DIM = 256

export const PREPROCESSING = {
  resize: [64, 64],
  scale: '1/255',
  mean: [0, 0, 0],
  std: [1, 1, 1],
  layout: 'rgb',
  resampling: 'bilinear-half-pixel',
  feature_norm: `l2-normalized, scaled to ${16}`,
}

// pooled activations are tiny; a fixed-norm output keeps linear probes
// well conditioned regardless of image statistics
const OUTPUT_NORM = 16

const INPUT_SIZE = 64
const GRID = 4

interface ConvLayer {
  inChannels: number
  outChannels: number
  /** [out][in][ky][kx] flattened */
  weights: Float64Array
}

function makeLayer(index: number, inChannels: number, outChannels: number): ConvLayer {
  const gen = new SplitMix64(deriveSeed(0n, 'backbone-weights', index))
  const fanIn = inChannels * 9
  const bound = 1 / Math.sqrt(fanIn)
  const weights = new Float64Array(outChannels * inChannels * 9)
  for (let i = 0; i < weights.length; i++) {
    weights[i] = (gen.uniform() * 2 - 1) * bound
  }
  return { inChannels, outChannels, weights }
}

const LAYERS: ConvLayer[] = [makeLayer(0, 3, 8), makeLayer(1, 8, 16)]

/** width/height are spatial; data layout is [y][x][channel]. */
interface Plane {
  width: number
  height: number
  channels: number
  data: Float64Array
}

function conv(input: Plane, layer: ConvLayer, relu: boolean): Plane {
  const outW = input.width - 2
  const outH = input.height - 2
  const out = new Float64Array(outW * outH * layer.outChannels)
  const { weights, inChannels, outChannels } = layer
  for (let oy = 0; oy < outH; oy++) {
    for (let ox = 0; ox < outW; ox++) {
      for (let oc = 0; oc < outChannels; oc++) {
        let sum = 0
        for (let ky = 0; ky < 3; ky++) {
          for (let kx = 0; kx < 3; kx++) {
            const base = ((oy + ky) * input.width + (ox + kx)) * inChannels
            const wbase = ((oc * inChannels) * 9) + ky * 3 + kx
            for (let ic = 0; ic < inChannels; ic++) {
              sum += input.data[base + ic] * weights[wbase + ic * 9]
            }
          }
        }
        out[(oy * outW + ox) * outChannels + oc] = relu && sum < 0 ? 0 : sum
      }
    }
  }
  return { width: outW, height: outH, channels: outChannels, data: out }
}

function avgPool2(input: Plane): Plane {
  const outW = Math.floor(input.width / 2)
  const outH = Math.floor(input.height / 2)
  const out = new Float64Array(outW * outH * input.channels)
  for (let oy = 0; oy < outH; oy++) {
    for (let ox = 0; ox < outW; ox++) {
      for (let c = 0; c < input.channels; c++) {
        const a = input.data[((oy * 2) * input.width + ox * 2) * input.channels + c]
        const b = input.data[((oy * 2) * input.width + ox * 2 + 1) * input.channels + c]
        const d = input.data[((oy * 2 + 1) * input.width + ox * 2) * input.channels + c]
        const e = input.data[((oy * 2 + 1) * input.width + ox * 2 + 1) * input.channels + c]
        out[(oy * outW + ox) * input.channels + c] = (a + b + d + e) / 4
      }
    }
  }
  return { width: outW, height: outH, channels: input.channels, data: out }
}

function gridAverage(input: Plane, grid: number): Float64Array {
  const out = new Float64Array(grid * grid * input.channels)
  for (let gy = 0; gy < grid; gy++) {
    const y0 = Math.floor((gy * input.height) / grid)
    const y1 = Math.floor(((gy + 1) * input.height) / grid)
    for (let gx = 0; gx < grid; gx++) {
      const x0 = Math.floor((gx * input.width) / grid)
      const x1 = Math.floor(((gx + 1) * input.width) / grid)
      const count = (y1 - y0) * (x1 - x0)
      for (let c = 0; c < input.channels; c++) {
        let sum = 0
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            sum += input.data[(y * input.width + x) * input.channels + c]
          }
        }
        out[(gy * grid + gx) * input.channels + c] = sum / count
      }
    }
  }
  return out
}

/** Fixed-width (FEATURE_DIM) float32 feature vector for one image. */
export function extractFeatures(raster: Raster): Float32Array {
  const resized = resizeToFloat(raster, INPUT_SIZE, INPUT_SIZE)
  let plane: Plane = {
    width: INPUT_SIZE,
    height: INPUT_SIZE,
    channels: 3,
    data: Float64Array.from(resized),
  }
  LAYERS.forEach((layer, index) => {
    plane = avgPool2(conv(plane, layer, index < LAYERS.length - 1))
  })
  const pooled = gridAverage(plane, GRID)
  if (pooled.length !== FEATURE_DIM) {
    throw new Error(`backbone produced ${pooled.length} dims, expected ${FEATURE_DIM}`)
  }
  let normSquared = 0
  for (const value of pooled) normSquared += value * value
  const scale = normSquared > 0 ? OUTPUT_NORM / Math.sqrt(normSquared) : 0
  for (let i = 0; i < pooled.length; i++) pooled[i] *= scale
  return Float32Array.from(pooled)
}
