/** emit-detections: image directory -> detection sidecar file. */

import { createHash } from 'crypto'
import { readFileSync, readdirSync } from 'fs'
import * as path from 'path'

import { writeAdapterManifest } from './adapterManifest'
import { DETECTOR_ID, DETECTOR_VERSION, detect } from './detector'
import { DetectionItem, writeDetections } from './detections'
import { DecodeError, decodeImage } from './image'

const IMAGE_SUFFIXES = new Set(['.png', '.jpg', '.jpeg'])

export interface EmitOptions {
  images: string
  out: string
}

export interface EmitResult {
  images: number
  detections: number
  skipped: { path: string; reason: string }[]
  manifestPath: string
}

export function runEmitDetections(options: EmitOptions): EmitResult {
  const files = readdirSync(options.images, { withFileTypes: true, recursive: true })
    .filter((e) => e.isFile() && IMAGE_SUFFIXES.has(path.extname(e.name).toLowerCase()))
    .map((e) => path.join(e.parentPath, e.name))
    .sort()

  const items: DetectionItem[] = []
  const skipped: { path: string; reason: string }[] = []
  let processed = 0
  for (const file of files) {
    const payload = readFileSync(file)
    const contentHash = createHash('sha256').update(payload).digest('hex')
    let raster
    try {
      raster = decodeImage(payload)
    } catch (err) {
      if (err instanceof DecodeError) {
        skipped.push({ path: file, reason: err.message })
        continue
      }
      throw err
    }
    processed++
    for (const detection of detect(raster)) {
      items.push({ contentHash, detection })
    }
  }

  const count = writeDetections(options.out, DETECTOR_ID, items)
  const manifestPath = writeAdapterManifest(options.out, {
    detector: { id: DETECTOR_ID, version: DETECTOR_VERSION },
    outputs: { detections: options.out },
    skipped,
  })
  return { images: processed, detections: count, skipped, manifestPath }
}
