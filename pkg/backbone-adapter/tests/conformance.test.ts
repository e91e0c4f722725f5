/**
 * Adapter conformance against the consuming pipeline's own validators:
 * emitted stores and sidecars must pass `fleet-census learn check-features`
 * and `fleet-census curate check-detections` with zero errors and zero
 * warnings. Requires the fleet-census CLI on PATH (skipped otherwise).
 */

import { execFileSync } from 'child_process'
import { createHash } from 'crypto'
import { mkdtempSync, mkdirSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import * as path from 'path'

import { describe, expect, it } from 'vitest'

import { FEATURE_DIM } from '../src/backbone'
import { runEmitDetections } from '../src/emitDetections'
import { runExtractFeatures } from '../src/extractFeatures'
import { encodePng, truckCanvas } from './fixtures'

function cliAvailable(): boolean {
  try {
    execFileSync('fleet-census', ['--version'], { stdio: 'pipe' })
    return true
  } catch {
    return false
  }
}

const available = cliAvailable()

function runCli(args: string[]): { errors: string[]; warnings: string[] } {
  const stdout = execFileSync('fleet-census', args, { stdio: 'pipe' }).toString()
  return JSON.parse(stdout)
}

function buildCorpus(count: number) {
  const root = mkdtempSync(path.join(tmpdir(), 'adapter-conf-'))
  mkdirSync(path.join(root, 'images'))
  const classes = ['light_duty', 'medium_duty', 'heavy_duty', 'non_logistic']
  const lines: string[] = []
  for (let i = 0; i < count; i++) {
    const payload = encodePng(truckCanvas(100 + i))
    const hash = createHash('sha256').update(payload).digest('hex')
    const storedPath = `images/${hash}.png`
    writeFileSync(path.join(root, storedPath), payload)
    lines.push(
      JSON.stringify({
        record: 'entry',
        schema_version: 1,
        content_hash: hash,
        stored_path: storedPath,
        class: classes[i % 4],
        source: 'local_folder',
        make: 'Acme',
        model: 'Fixture',
        split: 'unassigned',
        quarantined: false,
      }),
    )
  }
  const manifest = path.join(root, 'manifest.jsonl')
  writeFileSync(manifest, lines.join('\n') + '\n')
  return { root, manifest }
}

describe.skipIf(!available)('primary-validator conformance', () => {
  it('feature store passes check-features with zero findings', () => {
    const { root, manifest } = buildCorpus(10)
    const out = path.join(root, 'features.bin')
    const result = runExtractFeatures({ manifest, images: root, out })
    expect(result.dim).toBe(FEATURE_DIM)
    const findings = runCli([
      'learn', 'check-features',
      '--features', out,
      '--manifest', manifest,
      '--dim', String(FEATURE_DIM),
    ])
    expect(findings.errors).toEqual([])
    expect(findings.warnings).toEqual([])
  })

  it('detection sidecar passes check-detections with zero findings', () => {
    const { root } = buildCorpus(6)
    const out = path.join(root, 'detections.jsonl')
    runEmitDetections({ images: path.join(root, 'images'), out })
    const findings = runCli(['curate', 'check-detections', out])
    expect(findings.errors).toEqual([])
    expect(findings.warnings).toEqual([])
  })
})
