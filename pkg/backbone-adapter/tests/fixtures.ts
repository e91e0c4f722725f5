/** Deterministic fixture images, drawn pixel by pixel. */

import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

import { Raster } from '../src/image'
import { SplitMix64, deriveSeed } from '../src/rng'

export interface RGB {
  r: number
  g: number
  b: number
}

export class Canvas {
  width: number
  height: number
  pixels: Uint8Array

  constructor(width: number, height: number, fill: RGB) {
    this.width = width
    this.height = height
    this.pixels = new Uint8Array(width * height * 3)
    this.rect(0, 0, width, height, fill)
  }

  rect(x: number, y: number, w: number, h: number, color: RGB): void {
    for (let yy = y; yy < Math.min(y + h, this.height); yy++) {
      for (let xx = x; xx < Math.min(x + w, this.width); xx++) {
        const base = (yy * this.width + xx) * 3
        this.pixels[base] = color.r
        this.pixels[base + 1] = color.g
        this.pixels[base + 2] = color.b
      }
    }
  }

  raster(): Raster {
    return { width: this.width, height: this.height, pixels: this.pixels }
  }
}

export function encodePng(canvas: Canvas): Buffer {
  const png = new PNG({ width: canvas.width, height: canvas.height })
  for (let i = 0, j = 0; i < canvas.width * canvas.height; i++, j += 3) {
    png.data[i * 4] = canvas.pixels[j]
    png.data[i * 4 + 1] = canvas.pixels[j + 1]
    png.data[i * 4 + 2] = canvas.pixels[j + 2]
    png.data[i * 4 + 3] = 255
  }
  return PNG.sync.write(png)
}

export function encodeJpeg(canvas: Canvas, quality = 90): Buffer {
  const rgba = Buffer.alloc(canvas.width * canvas.height * 4)
  for (let i = 0, j = 0; i < canvas.width * canvas.height; i++, j += 3) {
    rgba[i * 4] = canvas.pixels[j]
    rgba[i * 4 + 1] = canvas.pixels[j + 1]
    rgba[i * 4 + 2] = canvas.pixels[j + 2]
    rgba[i * 4 + 3] = 255
  }
  return jpeg.encode(
    { width: canvas.width, height: canvas.height, data: rgba },
    quality,
  ).data
}

/** Boxy vehicle on a plain light background; seeded color and position. */
export function truckCanvas(seed: number): Canvas {
  const gen = new SplitMix64(deriveSeed(0n, 'fixture-truck', seed))
  const canvas = new Canvas(320, 240, { r: 235, g: 235, b: 235 })
  const bodyW = 170
  const bodyH = 110
  const x = 30 + Math.floor(gen.uniform() * 80)
  const y = 40 + Math.floor(gen.uniform() * 60)
  const body: RGB = {
    r: 40 + Math.floor(gen.uniform() * 120),
    g: 40 + Math.floor(gen.uniform() * 120),
    b: 40 + Math.floor(gen.uniform() * 120),
  }
  canvas.rect(x, y, bodyW, bodyH, body)
  canvas.rect(x + bodyW, y + 40, 28, bodyH - 40, { r: 70, g: 80, b: 90 })
  canvas.rect(x + 25, y + bodyH, 22, 16, { r: 25, g: 25, b: 28 })
  canvas.rect(x + bodyW - 45, y + bodyH, 22, 16, { r: 25, g: 25, b: 28 })
  // seeded livery stripe keeps fixture features distinct from each other
  canvas.rect(x + 10 + Math.floor(gen.uniform() * 40), y + 15, 30, bodyH - 30, {
    r: 200, g: 180 - Math.floor(gen.uniform() * 100), b: 60,
  })
  return canvas
}

export function blankCanvas(): Canvas {
  return new Canvas(200, 160, { r: 255, g: 255, b: 255 })
}

export function personCanvas(): Canvas {
  const canvas = new Canvas(200, 200, { r: 240, g: 240, b: 240 })
  canvas.rect(90, 60, 24, 110, { r: 60, g: 50, b: 120 })
  canvas.rect(92, 34, 20, 24, { r: 205, g: 170, b: 140 })
  return canvas
}
