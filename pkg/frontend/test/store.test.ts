import { describe, expect, it } from 'vitest'

import { StoreEntry, decodeStore, encodeStore } from '../src/store.js'

function entry(id: string, dims: number[], fill: (i: number) => number): StoreEntry {
  const n = dims.reduce((a, b) => a * b, 1)
  const data = new Float32Array(n)
  for (let i = 0; i < n; i++) data[i] = fill(i)
  return { id, dims, data }
}

describe('store round trip', () => {
  it('preserves ids, dims, and values in order', () => {
    const entries = [
      entry('a#fcr1:w', [4], (i) => i * 0.5 - 1),
      entry('a#conv:s0', [2, 3, 3], (i) => Math.sin(i)),
      entry('b#box:1,2,3,4', [5], (i) => -i),
    ]
    const back = decodeStore(encodeStore(entries))
    expect(back.map((e) => e.id)).toEqual(entries.map((e) => e.id))
    expect(back.map((e) => e.dims)).toEqual(entries.map((e) => e.dims))
    for (let i = 0; i < entries.length; i++) {
      expect(Array.from(back[i].data)).toEqual(Array.from(entries[i].data))
    }
  })

  it('starts with the magic and version header', () => {
    const buf = encodeStore([])
    expect(buf.subarray(0, 4).toString('ascii')).toBe('HFRS')
    expect(buf.readUInt32LE(4)).toBe(1)
    expect(Number(buf.readBigUInt64LE(8))).toBe(0)
    expect(buf.length).toBe(16)
  })

  it('is deterministic', () => {
    const entries = [entry('x', [3, 2, 2], (i) => i / 7)]
    expect(encodeStore(entries).equals(encodeStore(entries))).toBe(true)
  })

  it('rejects duplicates, bad dims, and non-finite values', () => {
    const good = entry('x', [2], (i) => i)
    expect(() => encodeStore([good, good])).toThrow(/duplicate/)
    expect(() => encodeStore([entry('y', [3], (i) => i), { ...good, dims: [5] }])).toThrow(/dims/)
    expect(() => encodeStore([entry('z', [1], () => Infinity)])).toThrow(/non-finite/)
  })

  it('rejects corrupted headers', () => {
    const buf = encodeStore([entry('x', [2], (i) => i)])
    const bad = Buffer.from(buf)
    bad.write('NOPE', 0, 'ascii')
    expect(() => decodeStore(bad)).toThrow(/magic/)
  })
})
