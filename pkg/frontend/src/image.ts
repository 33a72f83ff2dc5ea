import { readFileSync } from 'node:fs'
import { PNG } from 'pngjs'

/** Row-major RGB image, values 0..255. */
export interface RgbImage {
  width: number
  height: number
  /** length = width * height * 3 */
  pixels: Uint8Array
}

export function loadPng(path: string): RgbImage {
  const png = PNG.sync.read(readFileSync(path))
  const pixels = new Uint8Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i]
    pixels[3 * i + 1] = png.data[4 * i + 1]
    pixels[3 * i + 2] = png.data[4 * i + 2]
  }
  return { width: png.width, height: png.height, pixels }
}

export function crop(img: RgbImage, x1: number, y1: number, x2: number, y2: number): RgbImage {
  if (x1 < 0 || y1 < 0 || x2 > img.width || y2 > img.height || x2 <= x1 || y2 <= y1) {
    throw new Error(`bad crop ${x1},${y1},${x2},${y2} for ${img.width}x${img.height}`)
  }
  const w = x2 - x1
  const h = y2 - y1
  const out = new Uint8Array(w * h * 3)
  for (let y = 0; y < h; y++) {
    const src = ((y + y1) * img.width + x1) * 3
    out.set(img.pixels.subarray(src, src + w * 3), y * w * 3)
  }
  return { width: w, height: h, pixels: out }
}

/** Bilinear resize to a square side (align-corners = false, like PIL). */
export function resize(img: RgbImage, side: number): RgbImage {
  if (side === img.width && side === img.height) return img
  const out = new Uint8Array(side * side * 3)
  const sx = img.width / side
  const sy = img.height / side
  for (let y = 0; y < side; y++) {
    const fy = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), img.height - 1)
    const y0 = Math.floor(fy)
    const y1 = Math.min(y0 + 1, img.height - 1)
    const wy = fy - y0
    for (let x = 0; x < side; x++) {
      const fx = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), img.width - 1)
      const x0 = Math.floor(fx)
      const x1 = Math.min(x0 + 1, img.width - 1)
      const wx = fx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = img.pixels[(y0 * img.width + x0) * 3 + c]
        const p01 = img.pixels[(y0 * img.width + x1) * 3 + c]
        const p10 = img.pixels[(y1 * img.width + x0) * 3 + c]
        const p11 = img.pixels[(y1 * img.width + x1) * 3 + c]
        const top = p00 + (p01 - p00) * wx
        const bot = p10 + (p11 - p10) * wx
        out[(y * side + x) * 3 + c] = Math.round(top + (bot - top) * wy)
      }
    }
  }
  return { width: side, height: side, pixels: out }
}

/**
 * Mean-pool an arbitrary crop down to an 8x8x3 summary in [0, 1],
 * the fixed-size input of the projection nets.
 */
export function meanPool8(img: RgbImage): Float64Array {
  const out = new Float64Array(8 * 8 * 3)
  for (let by = 0; by < 8; by++) {
    const y0 = Math.floor((by * img.height) / 8)
    const y1 = Math.max(Math.floor(((by + 1) * img.height) / 8), y0 + 1)
    for (let bx = 0; bx < 8; bx++) {
      const x0 = Math.floor((bx * img.width) / 8)
      const x1 = Math.max(Math.floor(((bx + 1) * img.width) / 8), x0 + 1)
      const sums = [0, 0, 0]
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          const base = (y * img.width + x) * 3
          sums[0] += img.pixels[base]
          sums[1] += img.pixels[base + 1]
          sums[2] += img.pixels[base + 2]
        }
      }
      const area = (y1 - y0) * (x1 - x0)
      const base = (by * 8 + bx) * 3
      out[base] = sums[0] / area / 255
      out[base + 1] = sums[1] / area / 255
      out[base + 2] = sums[2] / area / 255
    }
  }
  return out
}
