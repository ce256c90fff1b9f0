// ---------------------------------------------------------------------------
// Seeded pseudo-randomness.
//
// splitmix64 over BigInt state, reduced to doubles in [0, 1). Slower than a
// 32-bit generator but the state space is wide enough that per-purpose
// streams (parameter init, dropout, shuffling) derived from one seed never
// collide in practice, and runs are reproducible across platforms.
// ---------------------------------------------------------------------------

const MASK64 = (1n << 64n) - 1n;

export class Rng {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & MASK64;
  }

  /** Next raw 64-bit value. */
  private next64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1) with 53 bits of precision. */
  uniform(): number {
    return Number(this.next64() >> 11n) / 9007199254740992;
  }

  /** Standard normal via Box-Muller. */
  normal(): number {
    let u = this.uniform();
    while (u === 0) u = this.uniform();
    const v = this.uniform();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }

  /** Integer in [0, n). */
  below(n: number): number {
    return Math.floor(this.uniform() * n);
  }

  /** A new generator whose stream is a pure function of this seed and a tag. */
  derive(tag: number): Rng {
    const child = new Rng(this.state ^ (BigInt(tag) * 0x9e3779b97f4a7c15n));
    child.next64();
    return child;
  }

  /** Like derive but keyed by a string, for name-addressed parameters. */
  deriveStr(tag: string): Rng {
    const child = new Rng(this.state ^ fnv1a64(tag));
    child.next64();
    return child;
  }

  /** In-place Fisher-Yates shuffle. */
  shuffle<T>(items: T[]): void {
    for (let i = items.length - 1; i > 0; i--) {
      const j = this.below(i + 1);
      const t = items[i]!;
      items[i] = items[j]!;
      items[j] = t;
    }
  }
}

/** 64-bit FNV-1a hash of a string. */
export function fnv1a64(s: string): bigint {
  let h = 0xcbf29ce484222325n;
  for (let i = 0; i < s.length; i++) {
    h ^= BigInt(s.charCodeAt(i));
    h = (h * 0x100000001b3n) & MASK64;
  }
  return h;
}

/** Xavier-uniform initialized matrix (rows×cols). */
export function xavier(rng: Rng, rows: number, cols: number): Float64Array {
  const out = new Float64Array(rows * cols);
  const bound = Math.sqrt(6 / (rows + cols));
  for (let i = 0; i < out.length; i++) {
    out[i] = (rng.uniform() * 2 - 1) * bound;
  }
  return out;
}
