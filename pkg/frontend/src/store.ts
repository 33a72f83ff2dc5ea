/**
 * HFRS feature store writer/reader.
 *
 * Layout (little-endian): magic "HFRS", u32 version = 1, u64 entry count;
 * per entry: u32 id length, UTF-8 id, u8 rank (1..3), rank x u32 dims,
 * then f32 data channel-major.
 */

const MAGIC = Buffer.from('HFRS', 'ascii')
const VERSION = 1

export interface StoreEntry {
  id: string
  /** [n] for vectors, [d, h, w] for feature tensors */
  dims: number[]
  data: Float32Array
}

function validate(entry: StoreEntry): void {
  const { id, dims, data } = entry
  if (dims.length < 1 || dims.length > 3) {
    throw new Error(`entry ${id}: rank must be 1..3, got ${dims.length}`)
  }
  const expected = dims.reduce((a, b) => a * b, 1)
  if (expected === 0 || expected !== data.length) {
    throw new Error(`entry ${id}: dims ${dims} do not match ${data.length} values`)
  }
  for (const v of data) {
    if (!Number.isFinite(v)) throw new Error(`entry ${id}: non-finite value`)
  }
}

export function encodeStore(entries: StoreEntry[]): Buffer {
  const seen = new Set<string>()
  const parts: Buffer[] = []
  for (const entry of entries) {
    if (seen.has(entry.id)) throw new Error(`duplicate id ${entry.id}`)
    seen.add(entry.id)
    validate(entry)
    const rawId = Buffer.from(entry.id, 'utf-8')
    const head = Buffer.alloc(4 + rawId.length + 1 + 4 * entry.dims.length)
    let pos = head.writeUInt32LE(rawId.length, 0)
    pos += rawId.copy(head, pos)
    pos = head.writeUInt8(entry.dims.length, pos)
    for (const dim of entry.dims) pos = head.writeUInt32LE(dim, pos)
    const body = Buffer.alloc(4 * entry.data.length)
    for (let i = 0; i < entry.data.length; i++) {
      body.writeFloatLE(entry.data[i], 4 * i)
    }
    parts.push(head, body)
  }
  const header = Buffer.alloc(4 + 4 + 8)
  MAGIC.copy(header, 0)
  header.writeUInt32LE(VERSION, 4)
  header.writeBigUInt64LE(BigInt(entries.length), 8)
  return Buffer.concat([header, ...parts])
}

export function decodeStore(buf: Buffer): StoreEntry[] {
  if (!buf.subarray(0, 4).equals(MAGIC)) throw new Error('bad magic')
  const version = buf.readUInt32LE(4)
  if (version !== VERSION) throw new Error(`unsupported version ${version}`)
  const count = Number(buf.readBigUInt64LE(8))
  const out: StoreEntry[] = []
  let pos = 16
  for (let i = 0; i < count; i++) {
    const idLen = buf.readUInt32LE(pos)
    pos += 4
    const id = buf.subarray(pos, pos + idLen).toString('utf-8')
    pos += idLen
    const rank = buf.readUInt8(pos)
    pos += 1
    const dims: number[] = []
    for (let r = 0; r < rank; r++) {
      dims.push(buf.readUInt32LE(pos))
      pos += 4
    }
    const n = dims.reduce((a, b) => a * b, 1)
    const data = new Float32Array(n)
    for (let j = 0; j < n; j++) {
      data[j] = buf.readFloatLE(pos)
      pos += 4
    }
    out.push({ id, dims, data })
  }
  if (pos !== buf.length) throw new Error('trailing bytes after last entry')
  return out
}
