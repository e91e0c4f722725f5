/**
 * Detection sidecar writer matching the pipeline's JSONL format: one meta
 * line {"detections_schema": 1, "detector_id": ...} then one line per
 * detection keyed by image content hash. Keys are written in alphabetical
 * order so repeated runs are byte-identical.
 */

import { closeSync, fsyncSync, openSync, renameSync, writeSync } from 'fs'

import { Detection } from './detector'

export const DETECTIONS_SCHEMA = 1

export interface DetectionItem {
  contentHash: string
  detection: Detection
}

export function writeDetections(
  path: string,
  detectorId: string,
  items: DetectionItem[],
): number {
  const lines: string[] = [
    JSON.stringify({ detections_schema: DETECTIONS_SCHEMA, detector_id: detectorId }),
  ]
  const ordered = [...items].sort((a, b) =>
    a.contentHash < b.contentHash ? -1 : a.contentHash > b.contentHash ? 1 : 0,
  )
  for (const { contentHash, detection } of ordered) {
    lines.push(
      JSON.stringify({
        confidence: detection.confidence,
        content_hash: contentHash,
        height: detection.box.height,
        label: detection.label,
        width: detection.box.width,
        x: detection.box.x,
        y: detection.box.y,
      }),
    )
  }
  const tmp = `${path}.tmp`
  const fd = openSync(tmp, 'w')
  try {
    writeSync(fd, lines.join('\n') + '\n')
    fsyncSync(fd)
  } finally {
    closeSync(fd)
  }
  renameSync(tmp, path)
  return items.length
}
