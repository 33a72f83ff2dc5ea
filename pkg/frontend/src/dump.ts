import { readFileSync } from 'node:fs'
import { dirname, join } from 'node:path'

import { Box, boxKey, contextPad, dedupe, keepBox } from './boxes.js'
import { RgbImage, loadPng } from './image.js'
import { convTensor, fcrVector, regionFeature, scaleLadder } from './net.js'
import { StoreEntry, encodeStore } from './store.js'

export type Layer = 'region' | 'conv' | 'fcr1' | 'fcr2'

export interface DumpJob {
  manifestPath: string
  netId: string
  layers: Layer[]
  scaleCount: 5 | 10
  dim: number
}

interface ManifestRecord {
  id: string
  image_path?: string
  boxes?: number[][]
}

export function parseLayers(raw: string): Layer[] {
  const known: Layer[] = ['region', 'conv', 'fcr1', 'fcr2']
  const layers = raw.split(',').map((s) => s.trim()).filter(Boolean)
  for (const layer of layers) {
    if (!known.includes(layer as Layer)) {
      throw new Error(`unknown layer ${layer}; expected one of ${known.join(', ')}`)
    }
  }
  if (layers.length === 0) throw new Error('no layers selected')
  return layers as Layer[]
}

function recordBoxes(rec: ManifestRecord): Box[] {
  const raw = (rec.boxes ?? []).map(([x1, y1, x2, y2]) => ({ x1, y1, x2, y2 }))
  return dedupe(raw.filter(keepBox))
}

/** One store entry per key per image, images in manifest order. */
export function buildEntries(job: DumpJob): StoreEntry[] {
  const doc = JSON.parse(readFileSync(job.manifestPath, 'utf-8'))
  if (!Array.isArray(doc.records)) throw new Error('manifest has no records array')
  const base = dirname(job.manifestPath)
  const scales = scaleLadder(job.scaleCount)
  const entries: StoreEntry[] = []
  const pushVector = (id: string, data: Float32Array) => {
    entries.push({ id, dims: [data.length], data })
  }

  for (const rec of doc.records as ManifestRecord[]) {
    if (!rec.image_path) throw new Error(`record ${rec.id} has no image_path`)
    const img: RgbImage = loadPng(join(base, rec.image_path))

    if (job.layers.includes('region')) {
      // kept proposals plus their context-padded versions, both requested
      // by the consumer's prototype stages
      const kept = recordBoxes(rec)
      const padded = dedupe(kept.map((b) => contextPad(b)))
      const seen = new Set<string>()
      for (const b of [...kept, ...padded]) {
        const key = boxKey(rec.id, b)
        if (seen.has(key)) continue
        seen.add(key)
        pushVector(key, regionFeature(job.netId, job.dim, img, b.x1, b.y1, b.x2, b.y2))
      }
    }
    if (job.layers.includes('conv')) {
      for (let i = 0; i < scales.length; i++) {
        const t = convTensor(job.netId, job.dim, img, scales[i])
        entries.push({ id: `${rec.id}#conv:s${i}`, dims: [t.d, t.h, t.w], data: t.data })
      }
    }
    if (job.layers.includes('fcr1')) {
      pushVector(`${rec.id}#fcr1:w`, fcrVector(job.netId, job.dim, img, 1))
    }
    if (job.layers.includes('fcr2')) {
      pushVector(`${rec.id}#fcr2:w`, fcrVector(job.netId, job.dim, img, 2))
    }
  }
  return entries
}

export function dumpFeatures(job: DumpJob): Buffer {
  return encodeStore(buildEntries(job))
}
