/**
 * SplitMix64 generator pinned by the pipeline's determinism spec
 * (docs/determinism.md in the main package). Weights derived here are
 * reproducible in any implementation of the same recipe.
 */

const MASK = (1n << 64n) - 1n
const GAMMA = 0x9e3779b97f4a7c15n
const FNV_OFFSET = 0xcbf29ce484222325n
const FNV_PRIME = 0x100000001b3n

export function mix64(z: bigint): bigint {
  z &= MASK
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK
  return z ^ (z >> 31n)
}

/** FNV-1a over each token's UTF-8 bytes plus a 0x00 separator, XOR the
 * master seed, then the SplitMix64 finalizer. */
export function deriveSeed(seed: bigint, ...tokens: (string | number)[]): bigint {
  let h = FNV_OFFSET
  for (const token of tokens) {
    for (const byte of Buffer.from(String(token), 'utf-8')) {
      h = ((h ^ BigInt(byte)) * FNV_PRIME) & MASK
    }
    h = (h * FNV_PRIME) & MASK // separator byte 0x00: XOR is a no-op
  }
  return mix64(h ^ (seed & MASK))
}

export class SplitMix64 {
  private state: bigint

  constructor(seed: bigint) {
    this.state = seed & MASK
  }

  nextU64(): bigint {
    this.state = (this.state + GAMMA) & MASK
    return mix64(this.state)
  }

  /** Float in [0, 1) with 53 random bits. */
  uniform(): number {
    return Number(this.nextU64() >> 11n) * 2 ** -53
  }
}
