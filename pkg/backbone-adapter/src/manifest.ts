/**
 * Reader for the pipeline's dataset manifest (append-only JSONL log with
 * entry / quarantine / split records; later records override earlier
 * state). Only the fields this tool consumes are modeled.
 */

import { readFileSync } from 'fs'

export const CLASS_LABELS: Record<string, number> = {
  light_duty: 0,
  medium_duty: 1,
  heavy_duty: 2,
  non_logistic: 3,
}

export interface ActiveEntry {
  contentHash: string
  storedPath: string
  label: number
}

interface EntryState extends ActiveEntry {
  quarantined: boolean
}

export function readActiveEntries(manifestPath: string): ActiveEntry[] {
  const text = readFileSync(manifestPath, 'utf-8')
  const order: string[] = []
  const state = new Map<string, EntryState>()
  const lines = text.split('\n')
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim()
    if (!line) continue
    let data: any
    try {
      data = JSON.parse(line)
    } catch (err) {
      throw new Error(`${manifestPath}:${i + 1}: not valid JSON`)
    }
    const kind = data.record
    if (kind === 'entry') {
      const label = CLASS_LABELS[data.class]
      if (label === undefined) {
        throw new Error(`${manifestPath}:${i + 1}: unknown class ${data.class}`)
      }
      if (!state.has(data.content_hash)) order.push(data.content_hash)
      state.set(data.content_hash, {
        contentHash: data.content_hash,
        storedPath: data.stored_path,
        label,
        quarantined: Boolean(data.quarantined),
      })
    } else if (kind === 'quarantine') {
      const entry = state.get(data.content_hash)
      if (!entry) {
        throw new Error(
          `${manifestPath}:${i + 1}: quarantine for unknown hash ${data.content_hash}`,
        )
      }
      entry.quarantined = data.value !== false
    } else if (kind === 'split') {
      if (!state.has(data.content_hash)) {
        throw new Error(
          `${manifestPath}:${i + 1}: split for unknown hash ${data.content_hash}`,
        )
      }
      // split assignment does not affect extraction
    } else {
      throw new Error(`${manifestPath}:${i + 1}: unknown record ${kind}`)
    }
  }
  return order
    .map((hash) => state.get(hash)!)
    .filter((entry) => !entry.quarantined)
    .map(({ contentHash, storedPath, label }) => ({ contentHash, storedPath, label }))
}
