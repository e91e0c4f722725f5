/**
 * Adapter manifest: a JSON record written beside every output so emitted
 * files are self-describing (which backbone/detector produced them, with
 * what preprocessing, into which paths).
 */

import { writeFileSync, renameSync } from 'fs'

export interface AdapterManifest {
  backbone?: { id: string; version: string; feature_dim: number }
  detector?: { id: string; version: string }
  preprocessing?: Record<string, unknown>
  outputs: Record<string, string>
  skipped?: { path: string; reason: string }[]
}

export function manifestPathFor(outputPath: string): string {
  return `${outputPath}.manifest.json`
}

export function writeAdapterManifest(outputPath: string, manifest: AdapterManifest): string {
  const path = manifestPathFor(outputPath)
  const tmp = `${path}.tmp`
  writeFileSync(tmp, JSON.stringify(manifest, null, 2) + '\n', 'utf-8')
  renameSync(tmp, path)
  return path
}
