/**
 * Deterministic PRNG (xoshiro128**) with a splitmix32 seeder and Box-Muller
 * gaussians, so a given seed always produces byte-identical weights.
 */

export class Rng {
  private s: Uint32Array;
  private spare: number | null = null;

  constructor(seed: number) {
    // splitmix32 expansion of the scalar seed into the xoshiro state
    const state = new Uint32Array(4);
    let x = seed >>> 0;
    for (let i = 0; i < 4; i++) {
      x = (x + 0x9e3779b9) >>> 0;
      let z = x;
      z = Math.imul(z ^ (z >>> 16), 0x21f0aaad) >>> 0;
      z = Math.imul(z ^ (z >>> 15), 0x735a2d97) >>> 0;
      state[i] = (z ^ (z >>> 15)) >>> 0;
    }
    if (state.every((v) => v === 0)) state[0] = 1;
    this.s = state;
  }

  nextUint32(): number {
    const s = this.s;
    const rotl = (v: number, k: number) => ((v << k) | (v >>> (32 - k))) >>> 0;
    const result = Math.imul(rotl(Math.imul(s[1], 5) >>> 0, 7), 9) >>> 0;
    const t = (s[1] << 9) >>> 0;
    s[2] = (s[2] ^ s[0]) >>> 0;
    s[3] = (s[3] ^ s[1]) >>> 0;
    s[1] = (s[1] ^ s[2]) >>> 0;
    s[0] = (s[0] ^ s[3]) >>> 0;
    s[2] = (s[2] ^ t) >>> 0;
    s[3] = rotl(s[3], 11);
    return result;
  }

  /** Uniform in [0, 1) with 32-bit resolution. */
  nextFloat(): number {
    return this.nextUint32() / 4294967296;
  }

  /** Standard normal via Box-Muller (cached spare for the pair). */
  nextGaussian(): number {
    if (this.spare !== null) {
      const v = this.spare;
      this.spare = null;
      return v;
    }
    let u1 = 0;
    do {
      u1 = this.nextFloat();
    } while (u1 === 0);
    const u2 = this.nextFloat();
    const r = Math.sqrt(-2.0 * Math.log(u1));
    this.spare = r * Math.sin(2.0 * Math.PI * u2);
    return r * Math.cos(2.0 * Math.PI * u2);
  }

  gaussians(count: number, std: number): Float32Array {
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) out[i] = Math.fround(this.nextGaussian() * std);
    return out;
  }
}
