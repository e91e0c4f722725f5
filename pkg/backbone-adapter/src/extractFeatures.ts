/** extract-features: manifest + image directory -> feature store file. */

import { createHash } from 'crypto'
import { readFileSync } from 'fs'
import * as path from 'path'

import { writeAdapterManifest } from './adapterManifest'
import {
  BACKBONE_ID,
  BACKBONE_VERSION,
  FEATURE_DIM,
  PREPROCESSING,
  extractFeatures as backboneFeatures,
} from './backbone'
import { DecodeError, decodeImage } from './image'
import { readActiveEntries } from './manifest'
import { FeatureRow, readStoreHeader, writeFeatureStore } from './featureStore'

export interface ExtractOptions {
  manifest: string
  images: string
  out: string
}

export interface ExtractResult {
  rows: number
  dim: number
  backboneId: string
  manifestPath: string
}

export function runExtractFeatures(options: ExtractOptions): ExtractResult {
  // refuse to silently change width under an unchanged backbone id
  const existing = readStoreHeader(options.out)
  if (existing && existing.backboneId === BACKBONE_ID && existing.dim !== FEATURE_DIM) {
    throw new Error(
      `dimension drift: ${options.out} holds D=${existing.dim} for backbone ` +
        `${existing.backboneId}, this build produces D=${FEATURE_DIM}`,
    )
  }

  const entries = readActiveEntries(options.manifest)
  const rows: FeatureRow[] = []
  for (const entry of entries) {
    const imagePath = path.join(options.images, entry.storedPath)
    let payload: Buffer
    try {
      payload = readFileSync(imagePath)
    } catch (err) {
      throw new Error(
        `image for ${entry.contentHash} missing at ${imagePath}: ${(err as Error).message}`,
      )
    }
    const digest = createHash('sha256').update(payload).digest()
    if (digest.toString('hex') !== entry.contentHash) {
      throw new Error(
        `content hash mismatch for ${entry.contentHash}: file at ${imagePath} ` +
          `hashes to ${digest.toString('hex')}`,
      )
    }
    let raster
    try {
      raster = decodeImage(payload)
    } catch (err) {
      if (err instanceof DecodeError) {
        throw new Error(`cannot decode image for ${entry.contentHash}: ${err.message}`)
      }
      throw err
    }
    rows.push({ hash: digest, label: entry.label, vector: backboneFeatures(raster) })
  }

  const count = writeFeatureStore(options.out, BACKBONE_ID, rows, FEATURE_DIM)
  const manifestPath = writeAdapterManifest(options.out, {
    backbone: { id: BACKBONE_ID, version: BACKBONE_VERSION, feature_dim: FEATURE_DIM },
    preprocessing: PREPROCESSING,
    outputs: { features: options.out },
  })
  return { rows: count, dim: FEATURE_DIM, backboneId: BACKBONE_ID, manifestPath }
}
