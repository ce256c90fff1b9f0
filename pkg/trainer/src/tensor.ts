// ---------------------------------------------------------------------------
// Dense row-major matrix helpers over Float64Array.
//
// Shapes are carried alongside the data by the callers; these functions take
// explicit dimensions and trust them. Everything is 64-bit throughout so the
// gradient checks can compare against central finite differences tightly.
// ---------------------------------------------------------------------------

/** C = A (r×k) times B (k×c), freshly allocated. */
export function matMul(
  a: Float64Array,
  b: Float64Array,
  r: number,
  k: number,
  c: number,
): Float64Array {
  const out = new Float64Array(r * c);
  for (let i = 0; i < r; i++) {
    for (let p = 0; p < k; p++) {
      const av = a[i * k + p]!;
      if (av === 0) continue;
      const bOff = p * c;
      const oOff = i * c;
      for (let j = 0; j < c; j++) {
        out[oOff + j] = out[oOff + j]! + av * b[bOff + j]!;
      }
    }
  }
  return out;
}

/** C += A^T (k×r seen as r×k transposed) times B (r×c); accumulates into out (k×c). */
export function matMulAtBInto(
  out: Float64Array,
  a: Float64Array,
  b: Float64Array,
  r: number,
  k: number,
  c: number,
): void {
  for (let i = 0; i < r; i++) {
    for (let p = 0; p < k; p++) {
      const av = a[i * k + p]!;
      if (av === 0) continue;
      const oOff = p * c;
      const bOff = i * c;
      for (let j = 0; j < c; j++) {
        out[oOff + j] = out[oOff + j]! + av * b[bOff + j]!;
      }
    }
  }
}

/** C += A (r×k) times B^T (c×k seen transposed); accumulates into out (r×c). */
export function matMulABtInto(
  out: Float64Array,
  a: Float64Array,
  b: Float64Array,
  r: number,
  k: number,
  c: number,
): void {
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < c; j++) {
      let s = 0;
      const aOff = i * k;
      const bOff = j * k;
      for (let p = 0; p < k; p++) {
        s += a[aOff + p]! * b[bOff + p]!;
      }
      out[i * c + j] = out[i * c + j]! + s;
    }
  }
}

export function zeros(n: number): Float64Array {
  return new Float64Array(n);
}

export function relu(x: Float64Array): Float64Array {
  const out = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) out[i] = x[i]! > 0 ? x[i]! : 0;
  return out;
}

/** Every entry finite (no NaN/Infinity). */
export function allFinite(x: Float64Array): boolean {
  for (let i = 0; i < x.length; i++) {
    if (!Number.isFinite(x[i]!)) return false;
  }
  return true;
}

/** Largest absolute difference between two equal-length arrays. */
export function maxAbsDiff(a: Float64Array, b: Float64Array): number {
  let m = 0;
  for (let i = 0; i < a.length; i++) {
    const d = Math.abs(a[i]! - b[i]!);
    if (d > m) m = d;
  }
  return m;
}
