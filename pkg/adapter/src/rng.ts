/**
 * Counter-based deterministic random numbers.
 *
 * Every weight tensor is derived from (seed, name) through a 64-bit hash,
 * so checkpoint materialization is order-independent and repeatable across
 * runs and platforms.
 */

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = 0xffffffffffffffffn;

function fnv1a64(text: string): bigint {
  let h = FNV_OFFSET;
  for (let i = 0; i < text.length; i++) {
    h ^= BigInt(text.charCodeAt(i) & 0xff);
    h = (h * FNV_PRIME) & MASK64;
    h ^= BigInt(text.charCodeAt(i) >>> 8);
    h = (h * FNV_PRIME) & MASK64;
  }
  return h;
}

/** splitmix64 stream seeded from a string key. */
export class KeyedRng {
  private state: bigint;

  constructor(seed: number, key: string) {
    this.state = fnv1a64(`${seed}:${key}`);
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1) using the top 53 bits. */
  nextUniform(): number {
    return Number(this.nextU64() >> 11n) / 9007199254740992;
  }

  /** Standard normal via Box-Muller. */
  nextNormal(): number {
    let u = this.nextUniform();
    while (u === 0) u = this.nextUniform();
    const v = this.nextUniform();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }

  fillNormal(out: Float64Array, scale: number): void {
    for (let i = 0; i < out.length; i++) out[i] = this.nextNormal() * scale;
  }
}

export function hashToken(token: string, vocab: number): number {
  return Number(fnv1a64(token) % BigInt(vocab));
}
