import { describe, expect, it } from 'vitest'

import { RgbImage } from '../src/image.js'
import { convTensor, fcrVector, regionFeature, scaleLadder } from '../src/net.js'

function solidImage(side: number, value: number): RgbImage {
  return { width: side, height: side, pixels: new Uint8Array(side * side * 3).fill(value) }
}

function noiseImage(side: number, seed: number): RgbImage {
  const pixels = new Uint8Array(side * side * 3)
  let state = seed >>> 0
  for (let i = 0; i < pixels.length; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0
    pixels[i] = state >>> 24
  }
  return { width: side, height: side, pixels }
}

describe('scale ladder', () => {
  it('has sqrt(2) steps', () => {
    for (const count of [5, 10] as const) {
      const ladder = scaleLadder(count)
      expect(ladder).toHaveLength(count)
      for (let i = 1; i < ladder.length; i++) {
        expect(ladder[i] / ladder[i - 1]).toBeCloseTo(Math.SQRT2, 12)
      }
    }
    expect(scaleLadder(5)[0]).toBeCloseTo(1, 12)
  })
})

describe('pathways', () => {
  const img = noiseImage(256, 7)

  it('region features are deterministic and non-negative', () => {
    const a = regionFeature('net-a', 16, img, 10, 10, 100, 100)
    const b = regionFeature('net-a', 16, img, 10, 10, 100, 100)
    expect(Array.from(a)).toEqual(Array.from(b))
    expect(Math.min(...a)).toBeGreaterThanOrEqual(0)
  })

  it('a black crop maps to zero', () => {
    const out = regionFeature('net-a', 8, solidImage(256, 0), 0, 0, 64, 64)
    expect(Array.from(out)).toEqual(new Array(8).fill(0))
  })

  it('different nets give different features', () => {
    const a = regionFeature('net-a', 8, img, 0, 0, 64, 64)
    const b = regionFeature('net-b', 8, img, 0, 0, 64, 64)
    expect(Array.from(a)).not.toEqual(Array.from(b))
  })

  it('fcr layers differ and apply ReLU', () => {
    const one = fcrVector('net-a', 12, img, 1)
    const two = fcrVector('net-a', 12, img, 2)
    expect(Array.from(one)).not.toEqual(Array.from(two))
    expect(Math.min(...one)).toBeGreaterThanOrEqual(0)
    expect(Math.min(...two)).toBeGreaterThanOrEqual(0)
  })

  it('conv tensors are pre-activation (signed) with the grid arithmetic', () => {
    const t = convTensor('net-a', 6, img, 1.0)
    // (256 - 32) / 16 + 1
    expect(t.h).toBe(15)
    expect(t.w).toBe(15)
    expect(t.d).toBe(6)
    expect(t.data.length).toBe(6 * 15 * 15)
    expect(Math.min(...t.data)).toBeLessThan(0)
  })

  it('conv grid grows monotonically with scale', () => {
    const sides = scaleLadder(5).map((s) => convTensor('net-a', 4, img, s).h)
    for (let i = 1; i < sides.length; i++) {
      expect(sides[i]).toBeGreaterThan(sides[i - 1])
    }
  })
})
