/**
 * Deterministic stand-in nets.  Each pathway is a fixed Gaussian projection of
 * the 8x8 mean-pooled RGB summary, seeded from the net identifier, so a
 * re-dump is bit-identical and no downloaded weights are required.
 *
 * Region and FC pathways apply ReLU (post-activation features); the conv
 * pathway does not (pre-activation tensors).
 */

import { RgbImage, crop, meanPool8, resize } from './image.js'

export const CONV_PATCH = 32
export const CONV_STRIDE = 16
const INPUT_DIM = 8 * 8 * 3

export type Pathway = 'region' | 'conv' | 'fcr1' | 'fcr2'

function fnv1a(text: string): number {
  let hash = 0x811c9dc5
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i)
    hash = Math.imul(hash, 0x01000193) >>> 0
  }
  return hash >>> 0
}

/** mulberry32: small, fast, and stable across platforms. */
function rng(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (state + 0x6d2b79f5) >>> 0
    let t = state
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function gaussianMatrix(seed: number, rows: number, cols: number): Float64Array {
  const next = rng(seed)
  const out = new Float64Array(rows * cols)
  for (let i = 0; i < out.length; i += 2) {
    // Box-Muller; unit variance scaled down to keep activations O(1)
    const u = Math.max(next(), 1e-12)
    const v = next()
    const r = Math.sqrt(-2 * Math.log(u))
    out[i] = r * Math.cos(2 * Math.PI * v)
    if (i + 1 < out.length) out[i + 1] = r * Math.sin(2 * Math.PI * v)
  }
  const scale = 1 / Math.sqrt(cols)
  for (let i = 0; i < out.length; i++) out[i] *= scale
  return out
}

const projectionCache = new Map<string, Float64Array>()

function projection(netId: string, pathway: Pathway, dim: number): Float64Array {
  const key = `${netId}/${pathway}/${dim}`
  let mat = projectionCache.get(key)
  if (!mat) {
    mat = gaussianMatrix(fnv1a(key), dim, INPUT_DIM)
    projectionCache.set(key, mat)
  }
  return mat
}

function project(summary: Float64Array, mat: Float64Array, dim: number, relu: boolean): Float32Array {
  const out = new Float32Array(dim)
  for (let r = 0; r < dim; r++) {
    let acc = 0
    const base = r * INPUT_DIM
    for (let c = 0; c < INPUT_DIM; c++) acc += mat[base + c] * summary[c]
    out[r] = relu ? Math.max(acc, 0) : acc
  }
  return out
}

export function regionFeature(netId: string, dim: number, img: RgbImage,
                              x1: number, y1: number, x2: number, y2: number): Float32Array {
  const summary = meanPool8(crop(img, x1, y1, x2, y2))
  return project(summary, projection(netId, 'region', dim), dim, true)
}

export function fcrVector(netId: string, dim: number, img: RgbImage, layer: 1 | 2): Float32Array {
  const pathway: Pathway = layer === 1 ? 'fcr1' : 'fcr2'
  return project(meanPool8(img), projection(netId, pathway, dim), dim, true)
}

export interface ConvTensor {
  d: number
  h: number
  w: number
  /** channel-major: data[c * h * w + y * w + x] */
  data: Float32Array
}

/** Pre-ReLU conv activations over a dense patch grid at one image scale. */
export function convTensor(netId: string, dim: number, img: RgbImage, scale: number): ConvTensor {
  const side = Math.max(Math.round(img.width * scale), CONV_PATCH)
  const scaled = resize(img, side)
  const cells = Math.floor((side - CONV_PATCH) / CONV_STRIDE) + 1
  const mat = projection(netId, 'conv', dim)
  const data = new Float32Array(dim * cells * cells)
  for (let gy = 0; gy < cells; gy++) {
    for (let gx = 0; gx < cells; gx++) {
      const x0 = gx * CONV_STRIDE
      const y0 = gy * CONV_STRIDE
      const summary = meanPool8(crop(scaled, x0, y0, x0 + CONV_PATCH, y0 + CONV_PATCH))
      const feat = project(summary, mat, dim, false)
      for (let c = 0; c < dim; c++) {
        data[c * cells * cells + gy * cells + gx] = feat[c]
      }
    }
  }
  return { d: dim, h: cells, w: cells, data }
}

/** sqrt(2) ladders matching the consumer: 5 scales from 1, or 10 from 2^-3. */
export function scaleLadder(count: 5 | 10): number[] {
  const exps = count === 5
    ? [0, 1, 2, 3, 4]
    : [-6, -5, -4, -3, -2, -1, 0, 1, 2, 3]
  return exps.map((e) => Math.SQRT2 ** e)
}
