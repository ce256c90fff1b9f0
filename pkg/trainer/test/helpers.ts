// ---------------------------------------------------------------------------
// Shared test utilities.
//
// Builders for synthetic columns and batches (plain data, no file I/O), a
// binary column writer mirroring the reader's documented layout for
// round-trip checks, finite-difference gradient checking against a live
// parameter store, and little numeric assertion helpers.
// ---------------------------------------------------------------------------

import { fileURLToPath } from 'node:url';
import { join } from 'node:path';

import { Batch, BatchEdges, Seed } from '../src/batch.js';
import { Column, ColumnDtype } from '../src/rdbc.js';
import { Rng } from '../src/random.js';
import { ParamStore } from '../src/models/params.js';
import { Val } from '../src/tape.js';

export function fixturePath(...parts: string[]): string {
  return join(fileURLToPath(new URL('./fixtures', import.meta.url)), ...parts);
}

// --- synthetic columns ------------------------------------------------------

function baseColumn(name: string, dtype: ColumnDtype, n: number): Column {
  return {
    name,
    dtype,
    rowCount: n,
    nulls: new Uint8Array(n),
    numbers: null,
    strings: null,
    dictionary: null,
    dim: null,
  };
}

export function floatCol(name: string, values: Array<number | null>): Column {
  const col = baseColumn(name, 'float', values.length);
  col.numbers = new Float64Array(values.length);
  for (let i = 0; i < values.length; i++) {
    if (values[i] === null) {
      col.nulls[i] = 1;
      col.numbers[i] = NaN;
    } else {
      col.numbers[i] = values[i]!;
    }
  }
  return col;
}

export function intCol(name: string, values: Array<number | null>): Column {
  const col = floatCol(name, values);
  col.dtype = 'int';
  for (let i = 0; i < values.length; i++) {
    if (col.nulls[i] === 1) col.numbers![i] = 0;
  }
  return col;
}

export function datetimeCol(name: string, values: Array<number | null>): Column {
  const col = intCol(name, values);
  col.dtype = 'datetime';
  return col;
}

export function catCol(
  name: string,
  codes: Array<number | null>,
  dictionary: string[],
): Column {
  const col = baseColumn(name, 'categorical', codes.length);
  col.dictionary = dictionary;
  col.numbers = new Float64Array(codes.length);
  for (let i = 0; i < codes.length; i++) {
    if (codes[i] === null) {
      col.nulls[i] = 1;
      col.numbers[i] = -1;
    } else {
      col.numbers[i] = codes[i]!;
    }
  }
  return col;
}

export function textCol(name: string, values: Array<string | null>): Column {
  const col = baseColumn(name, 'text', values.length);
  col.strings = [...values];
  for (let i = 0; i < values.length; i++) {
    if (values[i] === null) col.nulls[i] = 1;
  }
  return col;
}

export function vecCol(name: string, rows: Array<number[] | null>, dim: number): Column {
  const col = baseColumn(name, 'vector', rows.length);
  col.dim = dim;
  col.numbers = new Float64Array(rows.length * dim);
  for (let i = 0; i < rows.length; i++) {
    const row = rows[i];
    if (row === null) {
      col.nulls[i] = 1;
      for (let d = 0; d < dim; d++) col.numbers[i * dim + d] = NaN;
    } else {
      for (let d = 0; d < dim; d++) col.numbers[i * dim + d] = row[d]!;
    }
  }
  return col;
}

export function keyCol(name: string, values: number[], foreign = false): Column {
  const col = baseColumn(name, foreign ? 'foreign_key' : 'primary_key', values.length);
  col.numbers = Float64Array.from(values);
  return col;
}

// --- synthetic batches ------------------------------------------------------

export interface NodeSpec {
  globalIndex: number[];
  ts?: number[] | null;
  features?: Column[];
}

export interface EdgeSpec {
  triple: [string, string, string];
  src: number[];
  dst: number[];
  seed: number[];
  hop?: number[];
  ts?: number[] | null;
  features?: Column[];
}

export interface BatchSpec {
  seeds: Seed[];
  nodes: Record<string, NodeSpec>;
  edges?: EdgeSpec[];
  excluded?: Array<[string, number, string]>;
  batchIndex?: number;
}

/** Assemble a Batch from plain arrays; seedLocal is resolved by global index. */
export function makeBatch(spec: BatchSpec): Batch {
  const globalIndex = new Map<string, Float64Array>();
  const nodeTimestamps = new Map<string, Float64Array | null>();
  const nodeFeatures = new Map<string, Map<string, Column>>();
  for (const [t, ns] of Object.entries(spec.nodes)) {
    globalIndex.set(t, Float64Array.from(ns.globalIndex));
    nodeTimestamps.set(t, ns.ts == null ? null : Float64Array.from(ns.ts));
    nodeFeatures.set(t, new Map((ns.features ?? []).map((c) => [c.name, c])));
  }
  const edges = new Map<string, BatchEdges>();
  for (const es of spec.edges ?? []) {
    const key = es.triple.join('/');
    edges.set(key, {
      triple: es.triple,
      src: Int32Array.from(es.src),
      dst: Int32Array.from(es.dst),
      seed: Int32Array.from(es.seed),
      hop: Int32Array.from(es.hop ?? es.src.map(() => 0)),
      timestamps: es.ts == null ? null : Float64Array.from(es.ts),
      features: new Map((es.features ?? []).map((c) => [c.name, c])),
    });
  }
  const seedLocal = new Int32Array(spec.seeds.length);
  for (let i = 0; i < spec.seeds.length; i++) {
    const s = spec.seeds[i]!;
    const gi = globalIndex.get(s.nodeType);
    if (gi === undefined) throw new Error(`seed on unknown node type ${s.nodeType}`);
    const local = gi.indexOf(s.nodeIndex);
    if (local < 0) throw new Error(`seed global index ${s.nodeIndex} not in batch`);
    seedLocal[i] = local;
  }
  return {
    batchIndex: spec.batchIndex ?? 0,
    seeds: spec.seeds,
    seedLocal,
    excluded: spec.excluded ?? [],
    globalIndex,
    nodeTimestamps,
    nodeFeatures,
    edges,
  };
}

export function seed(over: Partial<Seed> & Pick<Seed, 'seedId' | 'nodeType' | 'nodeIndex'>): Seed {
  return {
    cutoff: null,
    label: null,
    labelRef: null,
    negatives: null,
    ...over,
  };
}

/**
 * Ten nodes across two types, with float, categorical, vector, and label
 * columns on type a, edge features on the reverse relation, and an edge
 * type with no sampled rows. Two binary-labeled seeds on type a; each
 * seed's own label cell is masked the way the sampler would.
 */
export function tenNodeBatch(): Batch {
  const aFeat = [
    floatCol('f', [0.5, -1.25, null, 2.0, 0.75, -0.5]),
    catCol('c', [0, 2, 1, null, 2, 0], ['x', 'y', 'z']),
    vecCol(
      'v',
      [[0.1, -0.2], [1.0, 0.5], null, [-0.3, 0.8], [0.0, 1.5], [0.25, 0.25]],
      2,
    ),
    intCol('lab', [null, 1, 1, 0, null, 0]),
  ];
  const bFeat = [floatCol('g', [1.5, null, -0.75, 0.25])];
  return makeBatch({
    seeds: [
      seed({ seedId: 'a:10', nodeType: 'a', nodeIndex: 10, label: 1, labelRef: 'lab' }),
      seed({ seedId: 'a:14', nodeType: 'a', nodeIndex: 14, label: 0, labelRef: 'lab' }),
    ],
    nodes: {
      a: { globalIndex: [10, 11, 12, 13, 14, 15], features: aFeat },
      b: { globalIndex: [20, 21, 22, 23], features: bFeat },
    },
    edges: [
      {
        triple: ['a', 'a.link', 'b'],
        src: [1, 2, 3, 4, 5],
        dst: [0, 0, 1, 2, 3],
        seed: [0, 0, 0, 1, 1],
        hop: [1, 1, 1, 1, 1],
        features: [],
      },
      {
        triple: ['b', 'a.link_rev', 'a'],
        src: [0, 1, 2, 0, 3, 2],
        dst: [0, 0, 1, 4, 4, 5],
        seed: [0, 0, 0, 1, 1, 1],
        hop: [0, 0, 1, 0, 0, 1],
        features: [floatCol('w', [0.3, -0.6, null, 1.1, 0.2, -0.9])],
      },
      {
        triple: ['b', 'b.self', 'b'],
        src: [],
        dst: [],
        seed: [],
        features: [],
      },
    ],
    excluded: [
      ['a', 0, 'lab'],
      ['a', 4, 'lab'],
    ],
  });
}

/** Like tenNodeBatch but the seeds rank candidates of type b. */
export function rankingBatch(): Batch {
  const batch = tenNodeBatch();
  batch.seeds = [
    seed({
      seedId: 'a:10',
      nodeType: 'a',
      nodeIndex: 10,
      label: 21,
      labelRef: 'link',
      negatives: [22, 23],
    }),
    seed({
      seedId: 'a:14',
      nodeType: 'a',
      nodeIndex: 14,
      label: 23,
      labelRef: 'link',
      negatives: [20, 99],
    }),
  ];
  batch.excluded = [];
  return batch;
}

// --- a writer mirroring the binary column format ------------------------------

class ByteSink {
  private parts: Buffer[] = [];

  u8(v: number): void {
    this.parts.push(Buffer.from([v]));
  }

  u16(v: number): void {
    const b = Buffer.alloc(2);
    b.writeUInt16LE(v);
    this.parts.push(b);
  }

  u32(v: number): void {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(v);
    this.parts.push(b);
  }

  u64(v: number): void {
    const b = Buffer.alloc(8);
    b.writeBigUInt64LE(BigInt(v));
    this.parts.push(b);
  }

  i64(v: number): void {
    const b = Buffer.alloc(8);
    b.writeBigInt64LE(BigInt(v));
    this.parts.push(b);
  }

  f64(v: number): void {
    const b = Buffer.alloc(8);
    b.writeDoubleLE(v);
    this.parts.push(b);
  }

  str(s: string, width: 2 | 4): void {
    const raw = Buffer.from(s, 'utf-8');
    if (width === 2) this.u16(raw.length);
    else this.u32(raw.length);
    this.parts.push(raw);
  }

  raw(b: Uint8Array): void {
    this.parts.push(Buffer.from(b));
  }

  bytes(): Uint8Array {
    return new Uint8Array(Buffer.concat(this.parts));
  }
}

const TAG_BY_DTYPE: Record<ColumnDtype, number> = {
  float: 0,
  int: 1,
  categorical: 2,
  datetime: 3,
  text: 4,
  vector: 5,
  primary_key: 6,
  foreign_key: 7,
};

function writeColumnInto(sink: ByteSink, col: Column): void {
  sink.str(col.name, 2);
  sink.u8(TAG_BY_DTYPE[col.dtype]);
  sink.u64(col.rowCount);
  sink.raw(col.nulls);
  const n = col.rowCount;
  if (col.dtype === 'float') {
    for (let i = 0; i < n; i++) sink.f64(col.numbers![i]!);
  } else if (col.dtype === 'int' || col.dtype === 'datetime') {
    for (let i = 0; i < n; i++) sink.i64(col.numbers![i]!);
  } else if (col.dtype === 'categorical') {
    sink.u32(col.dictionary!.length);
    for (const name of col.dictionary!) sink.str(name, 4);
    for (let i = 0; i < n; i++) sink.i64(col.numbers![i]!);
  } else if (col.dtype === 'text') {
    for (let i = 0; i < n; i++) sink.str(col.strings![i] ?? '', 4);
  } else if (col.dtype === 'vector') {
    sink.u32(col.dim!);
    for (let i = 0; i < n * col.dim!; i++) sink.f64(col.numbers![i]!);
  } else if (col.numbers !== null) {
    sink.u8(0);
    for (let i = 0; i < n; i++) sink.i64(col.numbers[i]!);
  } else {
    sink.u8(1);
    for (let i = 0; i < n; i++) sink.str(col.strings![i] ?? '', 4);
  }
}

export function columnBytes(col: Column): Uint8Array {
  const sink = new ByteSink();
  writeColumnInto(sink, col);
  return sink.bytes();
}

export function tableBytes(cols: Column[]): Uint8Array {
  const sink = new ByteSink();
  sink.raw(Buffer.from('RDBC', 'ascii'));
  sink.u16(1);
  sink.u32(cols.length);
  for (const col of cols) writeColumnInto(sink, col);
  return sink.bytes();
}

// --- gradient checking --------------------------------------------------------

/** |a - n| scaled down by the larger magnitude, floored at 1. */
export function gradRelErr(analytic: number, numeric: number): number {
  return Math.abs(analytic - numeric) / Math.max(1, Math.abs(analytic), Math.abs(numeric));
}

export interface GradCheckReport {
  checked: number;
  worst: number;
  worstName: string;
}

/**
 * Compare analytic gradients against central finite differences.
 *
 * `backward` must run one forward + backward pass and return the bound
 * parameter leaves; `forward` must rebuild the loss from the store's
 * current data and return its value. Leaves alias the store's arrays, so
 * perturbing the store re-evaluates the perturbed loss.
 */
export function checkStoreGradients(
  store: ParamStore,
  forward: () => number,
  backward: () => Map<string, Val>,
  opts: { eps?: number; maxPerParam?: number; rngSeed?: number } = {},
): GradCheckReport {
  const eps = opts.eps ?? 1e-5;
  const maxPerParam = opts.maxPerParam ?? 8;
  const rng = new Rng(opts.rngSeed ?? 1234);
  const bound = backward();
  if (bound.size === 0) throw new Error('gradient check bound no parameters');
  let checked = 0;
  let worst = 0;
  let worstName = '';
  for (const [name, val] of [...bound.entries()].sort((x, y) =>
    x[0] < y[0] ? -1 : 1,
  )) {
    const entry = store.entries.get(name)!;
    const idxs: number[] = [];
    if (entry.data.length <= maxPerParam) {
      for (let i = 0; i < entry.data.length; i++) idxs.push(i);
    } else {
      const seen = new Set<number>();
      while (seen.size < maxPerParam) seen.add(rng.below(entry.data.length));
      idxs.push(...seen);
    }
    for (const i of idxs) {
      const orig = entry.data[i]!;
      entry.data[i] = orig + eps;
      const up = forward();
      entry.data[i] = orig - eps;
      const down = forward();
      entry.data[i] = orig;
      const numeric = (up - down) / (2 * eps);
      const err = gradRelErr(val.grad[i]!, numeric);
      checked++;
      if (err > worst) {
        worst = err;
        worstName = `${name}[${i}]`;
      }
    }
  }
  return { checked, worst, worstName };
}

// --- misc ---------------------------------------------------------------------

export function maxAbs(a: ArrayLike<number>, b: ArrayLike<number>): number {
  if (a.length !== b.length) throw new Error(`length ${a.length} vs ${b.length}`);
  let m = 0;
  for (let i = 0; i < a.length; i++) {
    const d = Math.abs(a[i]! - b[i]!);
    if (d > m) m = d;
  }
  return m;
}

export function randomArray(rng: Rng, n: number, scale = 1): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = rng.normal() * scale;
  return out;
}
