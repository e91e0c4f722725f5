/** Image decoding (PNG/JPEG by magic bytes) and float raster helpers. */

import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

export interface Raster {
  width: number
  height: number
  /** RGB interleaved, length = width * height * 3 */
  pixels: Uint8Array
}

export class DecodeError extends Error {}

function rgbaToRgb(data: Uint8Array, width: number, height: number): Uint8Array {
  const out = new Uint8Array(width * height * 3)
  for (let i = 0, j = 0; i < width * height * 4; i += 4, j += 3) {
    out[j] = data[i]
    out[j + 1] = data[i + 1]
    out[j + 2] = data[i + 2]
  }
  return out
}

export function decodeImage(buffer: Buffer): Raster {
  if (buffer.length >= 8 && buffer[0] === 0x89 && buffer[1] === 0x50) {
    let png: PNG
    try {
      png = PNG.sync.read(buffer)
    } catch (err) {
      throw new DecodeError(`bad PNG: ${(err as Error).message}`)
    }
    return {
      width: png.width,
      height: png.height,
      pixels: rgbaToRgb(new Uint8Array(png.data), png.width, png.height),
    }
  }
  if (buffer.length >= 2 && buffer[0] === 0xff && buffer[1] === 0xd8) {
    let decoded: { width: number; height: number; data: Uint8Array }
    try {
      decoded = jpeg.decode(buffer, { useTArray: true, maxMemoryUsageInMB: 64 })
    } catch (err) {
      throw new DecodeError(`bad JPEG: ${(err as Error).message}`)
    }
    return {
      width: decoded.width,
      height: decoded.height,
      pixels: rgbaToRgb(decoded.data, decoded.width, decoded.height),
    }
  }
  throw new DecodeError('unrecognized image magic bytes')
}

/** ITU-R 601-2 luma, one float per pixel in [0, 255]. */
export function toGray(raster: Raster): Float32Array {
  const { width, height, pixels } = raster
  const gray = new Float32Array(width * height)
  for (let i = 0, j = 0; i < gray.length; i++, j += 3) {
    gray[i] = 0.299 * pixels[j] + 0.587 * pixels[j + 1] + 0.114 * pixels[j + 2]
  }
  return gray
}

/**
 * Bilinear resize to (outW, outH), returning float RGB planes scaled to
 * [0, 1]. Sample positions use the half-pixel convention.
 */
export function resizeToFloat(raster: Raster, outW: number, outH: number): Float32Array {
  const { width, height, pixels } = raster
  const out = new Float32Array(outW * outH * 3)
  const scaleX = width / outW
  const scaleY = height / outH
  for (let oy = 0; oy < outH; oy++) {
    const sy = Math.min(Math.max((oy + 0.5) * scaleY - 0.5, 0), height - 1)
    const y0 = Math.floor(sy)
    const y1 = Math.min(y0 + 1, height - 1)
    const fy = sy - y0
    for (let ox = 0; ox < outW; ox++) {
      const sx = Math.min(Math.max((ox + 0.5) * scaleX - 0.5, 0), width - 1)
      const x0 = Math.floor(sx)
      const x1 = Math.min(x0 + 1, width - 1)
      const fx = sx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = pixels[(y0 * width + x0) * 3 + c]
        const p01 = pixels[(y0 * width + x1) * 3 + c]
        const p10 = pixels[(y1 * width + x0) * 3 + c]
        const p11 = pixels[(y1 * width + x1) * 3 + c]
        const top = p00 + (p01 - p00) * fx
        const bottom = p10 + (p11 - p10) * fx
        out[(oy * outW + ox) * 3 + c] = (top + (bottom - top) * fy) / 255
      }
    }
  }
  return out
}
