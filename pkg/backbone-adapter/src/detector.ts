/**
 * Classical background-contrast detector.
 *
 * Estimates the background level from the image border, thresholds the
 * absolute deviation, takes the largest connected components and labels
 * each by shape: tall narrow blobs are "person", the rest map to the
 * vehicle vocabulary by relative size. Deterministic by construction;
 * suited to catalog-style photos with mostly uniform backgrounds.
 */

import { Raster, toGray } from './image'

export const DETECTOR_ID = 'contrast-blob-v1'
export const DETECTOR_VERSION = '1'

const CONTRAST_THRESHOLD = 28
const MIN_AREA_FRACTION = 0.005
const MAX_COMPONENTS = 3

export interface Box {
  x: number
  y: number
  width: number
  height: number
}

export interface Detection {
  label: string
  confidence: number
  box: Box
}

function borderMedian(gray: Float32Array, width: number, height: number): number {
  const values: number[] = []
  for (let x = 0; x < width; x++) {
    values.push(gray[x], gray[(height - 1) * width + x])
  }
  for (let y = 1; y < height - 1; y++) {
    values.push(gray[y * width], gray[y * width + width - 1])
  }
  values.sort((a, b) => a - b)
  return values[Math.floor(values.length / 2)]
}

interface Component {
  area: number
  minX: number
  maxX: number
  minY: number
  maxY: number
}

function connectedComponents(
  mask: Uint8Array,
  width: number,
  height: number,
): Component[] {
  const visited = new Uint8Array(mask.length)
  const components: Component[] = []
  const stack = new Int32Array(mask.length)
  for (let start = 0; start < mask.length; start++) {
    if (!mask[start] || visited[start]) continue
    let top = 0
    stack[top++] = start
    visited[start] = 1
    const component: Component = {
      area: 0,
      minX: width,
      maxX: -1,
      minY: height,
      maxY: -1,
    }
    while (top > 0) {
      const index = stack[--top]
      const x = index % width
      const y = (index / width) | 0
      component.area++
      if (x < component.minX) component.minX = x
      if (x > component.maxX) component.maxX = x
      if (y < component.minY) component.minY = y
      if (y > component.maxY) component.maxY = y
      if (x > 0 && mask[index - 1] && !visited[index - 1]) {
        visited[index - 1] = 1
        stack[top++] = index - 1
      }
      if (x < width - 1 && mask[index + 1] && !visited[index + 1]) {
        visited[index + 1] = 1
        stack[top++] = index + 1
      }
      if (y > 0 && mask[index - width] && !visited[index - width]) {
        visited[index - width] = 1
        stack[top++] = index - width
      }
      if (y < height - 1 && mask[index + width] && !visited[index + width]) {
        visited[index + width] = 1
        stack[top++] = index + width
      }
    }
    components.push(component)
  }
  return components
}

function labelFor(box: Box, imageArea: number): string {
  const aspect = box.height / box.width
  if (aspect > 1.6) return 'person'
  const areaFraction = (box.width * box.height) / imageArea
  if (areaFraction >= 0.18) return 'truck'
  if (areaFraction >= 0.08) return 'van'
  return 'car'
}

export function detect(raster: Raster): Detection[] {
  const { width, height } = raster
  const gray = toGray(raster)
  const background = borderMedian(gray, width, height)
  const mask = new Uint8Array(gray.length)
  for (let i = 0; i < gray.length; i++) {
    if (Math.abs(gray[i] - background) > CONTRAST_THRESHOLD) mask[i] = 1
  }

  const minArea = Math.max(16, Math.floor(width * height * MIN_AREA_FRACTION))
  const components = connectedComponents(mask, width, height)
    .filter((c) => c.area >= minArea)
    .sort((a, b) => b.area - a.area || a.minY - b.minY || a.minX - b.minX)
    .slice(0, MAX_COMPONENTS)

  return components.map((component) => {
    const box: Box = {
      x: component.minX,
      y: component.minY,
      width: component.maxX - component.minX + 1,
      height: component.maxY - component.minY + 1,
    }
    const fill = component.area / (box.width * box.height)
    const confidence = Math.min(1, 0.5 + 0.45 * fill)
    return { label: labelFor(box, width * height), confidence, box }
  })
}
