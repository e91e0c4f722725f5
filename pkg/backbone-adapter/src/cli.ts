/** Shared yargs command definitions for the two binaries. */

import yargs from 'yargs'

import { runEmitDetections } from './emitDetections'
import { runExtractFeatures } from './extractFeatures'

export function extractFeaturesMain(argv: string[]): void {
  const args = yargs(argv)
    .usage('extract-features --manifest <file> --images <dir> --out <file>')
    .option('manifest', {
      type: 'string',
      demandOption: true,
      describe: 'dataset manifest (JSONL) naming the images to embed',
    })
    .option('images', {
      type: 'string',
      demandOption: true,
      describe: 'root directory the manifest stored_path fields resolve against',
    })
    .option('out', {
      type: 'string',
      demandOption: true,
      describe: 'feature store file to write',
    })
    .strict()
    .parseSync()
  try {
    const result = runExtractFeatures({
      manifest: args.manifest,
      images: args.images,
      out: args.out,
    })
    console.log(
      `wrote ${result.rows} rows (D=${result.dim}, backbone ${result.backboneId}) ` +
        `to ${args.out}; adapter manifest at ${result.manifestPath}`,
    )
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    process.exit(1)
  }
}

export function emitDetectionsMain(argv: string[]): void {
  const args = yargs(argv)
    .usage('emit-detections --images <dir> --out <file>')
    .option('images', {
      type: 'string',
      demandOption: true,
      describe: 'directory of images to run the detector over',
    })
    .option('out', {
      type: 'string',
      demandOption: true,
      describe: 'detection sidecar file to write',
    })
    .strict()
    .parseSync()
  try {
    const result = runEmitDetections({ images: args.images, out: args.out })
    const skipNote = result.skipped.length
      ? ` (skipped ${result.skipped.length} undecodable)`
      : ''
    console.log(
      `wrote ${result.detections} detections over ${result.images} images` +
        `${skipNote} to ${args.out}; adapter manifest at ${result.manifestPath}`,
    )
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    process.exit(1)
  }
}
