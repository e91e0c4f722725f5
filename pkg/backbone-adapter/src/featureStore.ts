/**
 * Feature store writer matching the pipeline's binary format
 * (docs/formats.md): little-endian, magic FCFS, version 1, D (u32),
 * count (u64), length-prefixed backbone id, rows of 32-byte hash +
 * u8 label + D float32, sorted ascending by hash bytes.
 */

import { closeSync, fsyncSync, openSync, renameSync, writeSync } from 'fs'
import { readFileSync, existsSync } from 'fs'

export const MAGIC = Buffer.from('FCFS', 'ascii')
export const VERSION = 1
export const HASH_BYTES = 32
export const NUM_CLASSES = 4

export interface FeatureRow {
  /** 32-byte content hash */
  hash: Buffer
  label: number
  vector: Float32Array
}

export interface StoreHeader {
  backboneId: string
  dim: number
  count: bigint
}

export function writeFeatureStore(
  path: string,
  backboneId: string,
  rows: FeatureRow[],
  dim: number,
): number {
  for (const row of rows) {
    if (row.hash.length !== HASH_BYTES) {
      throw new Error(`content hash must be ${HASH_BYTES} bytes`)
    }
    if (!Number.isInteger(row.label) || row.label < 0 || row.label >= NUM_CLASSES) {
      throw new Error(`label ${row.label} outside [0, ${NUM_CLASSES})`)
    }
    if (row.vector.length !== dim) {
      throw new Error(`vector width ${row.vector.length} != dim ${dim}`)
    }
    for (const value of row.vector) {
      if (!Number.isFinite(value)) {
        throw new Error(`non-finite feature value for ${row.hash.toString('hex')}`)
      }
    }
  }
  const sorted = [...rows].sort((a, b) => a.hash.compare(b.hash))

  const idBytes = Buffer.from(backboneId, 'utf-8')
  const header = Buffer.alloc(4 + 4 + 4 + 8 + 4)
  MAGIC.copy(header, 0)
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(dim, 8)
  header.writeBigUInt64LE(BigInt(sorted.length), 12)
  header.writeUInt32LE(idBytes.length, 20)

  const rowSize = HASH_BYTES + 1 + 4 * dim
  const body = Buffer.alloc(rowSize * sorted.length)
  let offset = 0
  for (const row of sorted) {
    row.hash.copy(body, offset)
    body.writeUInt8(row.label, offset + HASH_BYTES)
    for (let i = 0; i < dim; i++) {
      body.writeFloatLE(row.vector[i], offset + HASH_BYTES + 1 + 4 * i)
    }
    offset += rowSize
  }

  const tmp = `${path}.tmp`
  const fd = openSync(tmp, 'w')
  try {
    writeSync(fd, header)
    writeSync(fd, idBytes)
    writeSync(fd, body)
    fsyncSync(fd)
  } finally {
    closeSync(fd)
  }
  renameSync(tmp, path)
  return sorted.length
}

/** Header of an existing store; used for dimension-drift detection. */
export function readStoreHeader(path: string): StoreHeader | null {
  if (!existsSync(path)) return null
  const blob = readFileSync(path)
  if (blob.length < 24 || !blob.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: not a feature store (bad magic or truncated)`)
  }
  const version = blob.readUInt32LE(4)
  if (version !== VERSION) {
    throw new Error(`${path}: unsupported version ${version}`)
  }
  const dim = blob.readUInt32LE(8)
  const count = blob.readBigUInt64LE(12)
  const idLength = blob.readUInt32LE(20)
  const backboneId = blob.subarray(24, 24 + idLength).toString('utf-8')
  return { backboneId, dim, count }
}
