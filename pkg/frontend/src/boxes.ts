/**
 * Proposal-box constraints shared with the consumer: area in [3600, 25600],
 * aspect ratio under 3, 16-pixel context padding clamped to the 256 frame.
 */

export interface Box {
  x1: number
  y1: number
  x2: number
  y2: number
}

export const MIN_AREA = 3600
export const MAX_AREA = 25600
export const MAX_ASPECT = 3
export const CONTEXT_PAD = 16
export const FRAME = 256

export function keepBox(b: Box): boolean {
  const w = b.x2 - b.x1
  const h = b.y2 - b.y1
  if (w <= 0 || h <= 0) return false
  const area = w * h
  const aspect = Math.max(w, h) / Math.min(w, h)
  return area >= MIN_AREA && area <= MAX_AREA && aspect < MAX_ASPECT
}

export function dedupe(boxes: Box[]): Box[] {
  const seen = new Set<string>()
  const out: Box[] = []
  for (const b of boxes) {
    const key = `${b.x1},${b.y1},${b.x2},${b.y2}`
    if (!seen.has(key)) {
      seen.add(key)
      out.push(b)
    }
  }
  return out
}

export function contextPad(b: Box, pad = CONTEXT_PAD, frame = FRAME): Box {
  return {
    x1: Math.max(b.x1 - pad, 0),
    y1: Math.max(b.y1 - pad, 0),
    x2: Math.min(b.x2 + pad, frame),
    y2: Math.min(b.y2 + pad, frame),
  }
}

export function boxKey(imageId: string, b: Box): string {
  return `${imageId}#box:${b.x1},${b.y1},${b.x2},${b.y2}`
}
