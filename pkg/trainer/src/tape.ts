// ---------------------------------------------------------------------------
// Reverse-mode automatic differentiation over row-major f64 matrices.
//
// Every operation allocates its output, records a backward closure on the
// tape, and returns a Val carrying data and a gradient buffer of the same
// shape. backward(loss) seeds d(loss)/d(loss) = 1 and replays the closures
// in reverse, accumulating into each Val's grad. All math is plain loops in
// 64-bit, which keeps analytic gradients comparable against central finite
// differences at tight tolerance.
// ---------------------------------------------------------------------------

import { matMul, matMulABtInto, matMulAtBInto } from './tensor.js';

export interface Val {
  data: Float64Array;
  rows: number;
  cols: number;
  grad: Float64Array;
}

export class Tape {
  private steps: Array<() => void> = [];

  /** Wrap existing data as a differentiable leaf (grad starts at zero). */
  leaf(data: Float64Array, rows: number, cols: number): Val {
    if (data.length !== rows * cols) {
      throw new Error(`leaf: ${data.length} values for ${rows}x${cols}`);
    }
    return { data, rows, cols, grad: new Float64Array(rows * cols) };
  }

  /** A constant: participates in forward math but receives no gradient. */
  constant(data: Float64Array, rows: number, cols: number): Val {
    return this.leaf(data, rows, cols);
  }

  private out(rows: number, cols: number): Val {
    return {
      data: new Float64Array(rows * cols),
      rows,
      cols,
      grad: new Float64Array(rows * cols),
    };
  }

  /** A (r×k) times B (k×c). */
  matmul(a: Val, b: Val): Val {
    if (a.cols !== b.rows) {
      throw new Error(`matmul: inner dims ${a.cols} vs ${b.rows}`);
    }
    const o = this.out(a.rows, b.cols);
    o.data.set(matMul(a.data, b.data, a.rows, a.cols, b.cols));
    this.steps.push(() => {
      matMulABtInto(a.grad, o.grad, b.data, a.rows, b.cols, a.cols);
      matMulAtBInto(b.grad, a.data, o.grad, a.rows, a.cols, b.cols);
    });
    return o;
  }

  /** Elementwise sum of two same-shape values. */
  add(a: Val, b: Val): Val {
    if (a.rows !== b.rows || a.cols !== b.cols) {
      throw new Error(`add: shape ${a.rows}x${a.cols} vs ${b.rows}x${b.cols}`);
    }
    const o = this.out(a.rows, a.cols);
    for (let i = 0; i < o.data.length; i++) o.data[i] = a.data[i]! + b.data[i]!;
    this.steps.push(() => {
      for (let i = 0; i < o.grad.length; i++) {
        a.grad[i] = a.grad[i]! + o.grad[i]!;
        b.grad[i] = b.grad[i]! + o.grad[i]!;
      }
    });
    return o;
  }

  /** Add a 1×c bias row to every row of x. */
  addBias(x: Val, bias: Val): Val {
    if (bias.rows !== 1 || bias.cols !== x.cols) {
      throw new Error(`addBias: bias ${bias.rows}x${bias.cols} for ${x.cols} cols`);
    }
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < x.cols; j++) {
        o.data[i * x.cols + j] = x.data[i * x.cols + j]! + bias.data[j]!;
      }
    }
    this.steps.push(() => {
      for (let i = 0; i < x.rows; i++) {
        for (let j = 0; j < x.cols; j++) {
          const g = o.grad[i * x.cols + j]!;
          x.grad[i * x.cols + j] = x.grad[i * x.cols + j]! + g;
          bias.grad[j] = bias.grad[j]! + g;
        }
      }
    });
    return o;
  }

  /** Column-wise concatenation of same-height values. */
  concatCols(parts: Val[]): Val {
    const rows = parts[0]?.rows ?? 0;
    let cols = 0;
    for (const p of parts) {
      if (p.rows !== rows) throw new Error('concatCols: row mismatch');
      cols += p.cols;
    }
    const o = this.out(rows, cols);
    let off = 0;
    for (const p of parts) {
      for (let i = 0; i < rows; i++) {
        for (let j = 0; j < p.cols; j++) {
          o.data[i * cols + off + j] = p.data[i * p.cols + j]!;
        }
      }
      off += p.cols;
    }
    this.steps.push(() => {
      let boff = 0;
      for (const p of parts) {
        for (let i = 0; i < rows; i++) {
          for (let j = 0; j < p.cols; j++) {
            p.grad[i * p.cols + j] =
              p.grad[i * p.cols + j]! + o.grad[i * cols + boff + j]!;
          }
        }
        boff += p.cols;
      }
    });
    return o;
  }

  /** Row-wise concatenation of same-width values. */
  concatRows(parts: Val[]): Val {
    const cols = parts[0]?.cols ?? 0;
    let rows = 0;
    for (const p of parts) {
      if (p.cols !== cols) throw new Error('concatRows: column mismatch');
      rows += p.rows;
    }
    const o = this.out(rows, cols);
    let off = 0;
    for (const p of parts) {
      o.data.set(p.data, off * cols);
      off += p.rows;
    }
    this.steps.push(() => {
      let boff = 0;
      for (const p of parts) {
        for (let i = 0; i < p.data.length; i++) {
          p.grad[i] = p.grad[i]! + o.grad[boff * cols + i]!;
        }
        boff += p.rows;
      }
    });
    return o;
  }

  /** Per-row inner product of two same-shape values, an n×1 column. */
  rowDot(a: Val, b: Val): Val {
    if (a.rows !== b.rows || a.cols !== b.cols) {
      throw new Error(`rowDot: shape ${a.rows}x${a.cols} vs ${b.rows}x${b.cols}`);
    }
    const o = this.out(a.rows, 1);
    for (let i = 0; i < a.rows; i++) {
      let s = 0;
      for (let j = 0; j < a.cols; j++) {
        s += a.data[i * a.cols + j]! * b.data[i * a.cols + j]!;
      }
      o.data[i] = s;
    }
    this.steps.push(() => {
      for (let i = 0; i < a.rows; i++) {
        const g = o.grad[i]!;
        for (let j = 0; j < a.cols; j++) {
          a.grad[i * a.cols + j] = a.grad[i * a.cols + j]! + g * b.data[i * a.cols + j]!;
          b.grad[i * a.cols + j] = b.grad[i * a.cols + j]! + g * a.data[i * a.cols + j]!;
        }
      }
    });
    return o;
  }

  /** Select rows by index; backward scatter-adds into the source. */
  gatherRows(x: Val, idx: Int32Array): Val {
    const o = this.out(idx.length, x.cols);
    for (let i = 0; i < idx.length; i++) {
      const r = idx[i]!;
      for (let j = 0; j < x.cols; j++) {
        o.data[i * x.cols + j] = x.data[r * x.cols + j]!;
      }
    }
    this.steps.push(() => {
      for (let i = 0; i < idx.length; i++) {
        const r = idx[i]!;
        for (let j = 0; j < x.cols; j++) {
          x.grad[r * x.cols + j] = x.grad[r * x.cols + j]! + o.grad[i * x.cols + j]!;
        }
      }
    });
    return o;
  }

  /** Sum rows sharing a segment id into (nSeg × cols); empty segments stay 0. */
  segmentSum(x: Val, seg: Int32Array, nSeg: number): Val {
    const o = this.out(nSeg, x.cols);
    for (let i = 0; i < x.rows; i++) {
      const s = seg[i]!;
      for (let j = 0; j < x.cols; j++) {
        o.data[s * x.cols + j] = o.data[s * x.cols + j]! + x.data[i * x.cols + j]!;
      }
    }
    this.steps.push(() => {
      for (let i = 0; i < x.rows; i++) {
        const s = seg[i]!;
        for (let j = 0; j < x.cols; j++) {
          x.grad[i * x.cols + j] = x.grad[i * x.cols + j]! + o.grad[s * x.cols + j]!;
        }
      }
    });
    return o;
  }

  /** Mean of rows per segment; empty segments stay 0. */
  segmentMean(x: Val, seg: Int32Array, nSeg: number): Val {
    const counts = new Float64Array(nSeg);
    for (let i = 0; i < x.rows; i++) counts[seg[i]!] = counts[seg[i]!]! + 1;
    const sum = this.segmentSum(x, seg, nSeg);
    const scale = new Float64Array(nSeg);
    for (let s = 0; s < nSeg; s++) scale[s] = counts[s]! > 0 ? 1 / counts[s]! : 0;
    return this.rowScale(sum, scale);
  }

  /**
   * Per-segment extreme of each column; gradient routes to the first row
   * attaining it (the usual max/min subgradient). Empty segments stay 0.
   */
  segmentExtreme(x: Val, seg: Int32Array, nSeg: number, sign: 1 | -1): Val {
    const o = this.out(nSeg, x.cols);
    const arg = new Int32Array(nSeg * x.cols).fill(-1);
    for (let i = 0; i < x.rows; i++) {
      const s = seg[i]!;
      for (let j = 0; j < x.cols; j++) {
        const v = x.data[i * x.cols + j]!;
        const k = s * x.cols + j;
        if (arg[k]! < 0 || sign * v > sign * o.data[k]!) {
          o.data[k] = v;
          arg[k] = i;
        }
      }
    }
    this.steps.push(() => {
      for (let k = 0; k < arg.length; k++) {
        const i = arg[k]!;
        if (i < 0) continue;
        const j = k % x.cols;
        x.grad[i * x.cols + j] = x.grad[i * x.cols + j]! + o.grad[k]!;
      }
    });
    return o;
  }

  /** Softmax of a column vector within each segment. */
  segmentSoftmax(scores: Val, seg: Int32Array, nSeg: number): Val {
    if (scores.cols !== 1) throw new Error('segmentSoftmax wants a column');
    const n = scores.rows;
    const maxes = new Float64Array(nSeg).fill(-Infinity);
    for (let i = 0; i < n; i++) {
      const s = seg[i]!;
      if (scores.data[i]! > maxes[s]!) maxes[s] = scores.data[i]!;
    }
    const sums = new Float64Array(nSeg);
    const o = this.out(n, 1);
    for (let i = 0; i < n; i++) {
      const s = seg[i]!;
      const e = Math.exp(scores.data[i]! - maxes[s]!);
      o.data[i] = e;
      sums[s] = sums[s]! + e;
    }
    for (let i = 0; i < n; i++) o.data[i] = o.data[i]! / sums[seg[i]!]!;
    this.steps.push(() => {
      // dL/ds_i = y_i * (g_i - sum_j in seg g_j y_j)
      const dot = new Float64Array(nSeg);
      for (let i = 0; i < n; i++) {
        dot[seg[i]!] = dot[seg[i]!]! + o.grad[i]! * o.data[i]!;
      }
      for (let i = 0; i < n; i++) {
        scores.grad[i] =
          scores.grad[i]! + o.data[i]! * (o.grad[i]! - dot[seg[i]!]!);
      }
    });
    return o;
  }

  /** Scale row i by the constant weights[i] (no gradient to the weights). */
  rowScale(x: Val, weights: Float64Array): Val {
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < x.rows; i++) {
      const w = weights[i]!;
      for (let j = 0; j < x.cols; j++) {
        o.data[i * x.cols + j] = x.data[i * x.cols + j]! * w;
      }
    }
    this.steps.push(() => {
      for (let i = 0; i < x.rows; i++) {
        const w = weights[i]!;
        for (let j = 0; j < x.cols; j++) {
          x.grad[i * x.cols + j] = x.grad[i * x.cols + j]! + w * o.grad[i * x.cols + j]!;
        }
      }
    });
    return o;
  }

  /** Multiply row i of x by the scalar w[i], both differentiable. */
  rowMul(x: Val, w: Val): Val {
    if (w.cols !== 1 || w.rows !== x.rows) {
      throw new Error(`rowMul: weights ${w.rows}x${w.cols} for ${x.rows} rows`);
    }
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < x.cols; j++) {
        o.data[i * x.cols + j] = x.data[i * x.cols + j]! * w.data[i]!;
      }
    }
    this.steps.push(() => {
      for (let i = 0; i < x.rows; i++) {
        let s = 0;
        for (let j = 0; j < x.cols; j++) {
          const g = o.grad[i * x.cols + j]!;
          x.grad[i * x.cols + j] = x.grad[i * x.cols + j]! + g * w.data[i]!;
          s += g * x.data[i * x.cols + j]!;
        }
        w.grad[i] = w.grad[i]! + s;
      }
    });
    return o;
  }

  /** Elementwise multiply by a constant mask (dropout, feature zeroing). */
  maskMul(x: Val, mask: Float64Array): Val {
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < o.data.length; i++) o.data[i] = x.data[i]! * mask[i]!;
    this.steps.push(() => {
      for (let i = 0; i < o.grad.length; i++) {
        x.grad[i] = x.grad[i]! + o.grad[i]! * mask[i]!;
      }
    });
    return o;
  }

  relu(x: Val): Val {
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < o.data.length; i++) o.data[i] = x.data[i]! > 0 ? x.data[i]! : 0;
    this.steps.push(() => {
      for (let i = 0; i < o.grad.length; i++) {
        if (x.data[i]! > 0) x.grad[i] = x.grad[i]! + o.grad[i]!;
      }
    });
    return o;
  }

  leakyRelu(x: Val, slope = 0.2): Val {
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < o.data.length; i++) {
      o.data[i] = x.data[i]! > 0 ? x.data[i]! : slope * x.data[i]!;
    }
    this.steps.push(() => {
      for (let i = 0; i < o.grad.length; i++) {
        x.grad[i] = x.grad[i]! + o.grad[i]! * (x.data[i]! > 0 ? 1 : slope);
      }
    });
    return o;
  }

  tanh(x: Val): Val {
    const o = this.out(x.rows, x.cols);
    for (let i = 0; i < o.data.length; i++) o.data[i] = Math.tanh(x.data[i]!);
    this.steps.push(() => {
      for (let i = 0; i < o.grad.length; i++) {
        x.grad[i] = x.grad[i]! + o.grad[i]! * (1 - o.data[i]! * o.data[i]!);
      }
    });
    return o;
  }

  /** Mean binary cross entropy of logits (n×1) against 0/1 labels. */
  bceWithLogits(logits: Val, labels: Float64Array): Val {
    if (logits.cols !== 1 || logits.rows !== labels.length) {
      throw new Error('bceWithLogits: shape mismatch');
    }
    const n = logits.rows;
    const o = this.out(1, 1);
    let total = 0;
    for (let i = 0; i < n; i++) {
      const z = logits.data[i]!;
      // stable: log(1+exp(-|z|)) + max(z,0) - z*y
      total += Math.log1p(Math.exp(-Math.abs(z))) + Math.max(z, 0) - z * labels[i]!;
    }
    o.data[0] = total / n;
    this.steps.push(() => {
      const g = o.grad[0]! / n;
      for (let i = 0; i < n; i++) {
        const p = 1 / (1 + Math.exp(-logits.data[i]!));
        logits.grad[i] = logits.grad[i]! + g * (p - labels[i]!);
      }
    });
    return o;
  }

  /** Mean squared error of predictions (n×1) against targets. */
  mse(pred: Val, targets: Float64Array): Val {
    if (pred.cols !== 1 || pred.rows !== targets.length) {
      throw new Error('mse: shape mismatch');
    }
    const n = pred.rows;
    const o = this.out(1, 1);
    let total = 0;
    for (let i = 0; i < n; i++) {
      const d = pred.data[i]! - targets[i]!;
      total += d * d;
    }
    o.data[0] = total / n;
    this.steps.push(() => {
      const g = o.grad[0]! * 2 / n;
      for (let i = 0; i < n; i++) {
        pred.grad[i] = pred.grad[i]! + g * (pred.data[i]! - targets[i]!);
      }
    });
    return o;
  }

  /** Mean cross entropy of an n×K logit matrix against class indices. */
  softmaxNll(logits: Val, targets: Int32Array): Val {
    if (logits.rows !== targets.length) throw new Error('softmaxNll: shape mismatch');
    const n = logits.rows;
    const k = logits.cols;
    const probs = new Float64Array(n * k);
    for (let i = 0; i < n; i++) {
      let max = -Infinity;
      for (let j = 0; j < k; j++) max = Math.max(max, logits.data[i * k + j]!);
      let sum = 0;
      for (let j = 0; j < k; j++) {
        const e = Math.exp(logits.data[i * k + j]! - max);
        probs[i * k + j] = e;
        sum += e;
      }
      for (let j = 0; j < k; j++) probs[i * k + j] = probs[i * k + j]! / sum;
    }
    const o = this.out(1, 1);
    let total = 0;
    for (let i = 0; i < n; i++) total += -Math.log(probs[i * k + targets[i]!]!);
    o.data[0] = total / n;
    this.steps.push(() => {
      const g = o.grad[0]! / n;
      for (let i = 0; i < n; i++) {
        for (let j = 0; j < k; j++) {
          const y = targets[i] === j ? 1 : 0;
          logits.grad[i * k + j] = logits.grad[i * k + j]! + g * (probs[i * k + j]! - y);
        }
      }
    });
    return o;
  }

  /**
   * Mean ranking loss over queries: scores is a column of candidate scores,
   * seg marks the query, and the first row of every segment is the positive.
   * Each query contributes -log softmax(positive).
   */
  rankingNll(scores: Val, seg: Int32Array, nSeg: number): Val {
    if (scores.cols !== 1) throw new Error('rankingNll wants a column');
    const n = scores.rows;
    const maxes = new Float64Array(nSeg).fill(-Infinity);
    const first = new Int32Array(nSeg).fill(-1);
    for (let i = 0; i < n; i++) {
      const s = seg[i]!;
      if (first[s]! < 0) first[s] = i;
      if (scores.data[i]! > maxes[s]!) maxes[s] = scores.data[i]!;
    }
    const sums = new Float64Array(nSeg);
    const probs = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      const s = seg[i]!;
      const e = Math.exp(scores.data[i]! - maxes[s]!);
      probs[i] = e;
      sums[s] = sums[s]! + e;
    }
    for (let i = 0; i < n; i++) probs[i] = probs[i]! / sums[seg[i]!]!;
    const o = this.out(1, 1);
    let total = 0;
    for (let s = 0; s < nSeg; s++) {
      if (first[s]! < 0) throw new Error(`rankingNll: empty query ${s}`);
      total += -Math.log(probs[first[s]!]!);
    }
    o.data[0] = total / nSeg;
    this.steps.push(() => {
      const g = o.grad[0]! / nSeg;
      for (let i = 0; i < n; i++) {
        const y = first[seg[i]!]! === i ? 1 : 0;
        scores.grad[i] = scores.grad[i]! + g * (probs[i]! - y);
      }
    });
    return o;
  }

  /** Replay recorded steps in reverse from a scalar loss. */
  backward(loss: Val): void {
    if (loss.rows !== 1 || loss.cols !== 1) {
      throw new Error('backward starts from a scalar');
    }
    loss.grad[0] = 1;
    for (let i = this.steps.length - 1; i >= 0; i--) this.steps[i]!();
  }
}
