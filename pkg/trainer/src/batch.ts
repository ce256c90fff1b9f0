// ---------------------------------------------------------------------------
// Reader for sampled-subgraph batch exports.
//
// An export directory holds manifest.json plus one JSON-lines file per
// batch. Line 1 is a header record (seeds, seed_local, excluded cells,
// node counts); it is followed by one "nodes" record per node type and one
// "edges" record per edge type, each carrying base64-encoded binary column
// blobs. Edge src/dst are batch-local node indices, and every edge carries
// the ordinal of the seed whose expansion sampled it, which is what lets
// the models run message passing per seed without mixing neighborhoods
// that were sampled under different cutoff times.
// ---------------------------------------------------------------------------

import { readFileSync } from 'node:fs';
import { join } from 'node:path';

import { Column, columnFromBytes } from './rdbc.js';

export interface Seed {
  seedId: string;
  nodeType: string;
  /** Global index of the seed node in the full graph. */
  nodeIndex: number;
  cutoff: number | null;
  label: number | string | boolean | null;
  /** Feature column masked at the seed node because it holds the answer. */
  labelRef: string | null;
  /** Corruption candidates (global indices) for link ranking tasks. */
  negatives: number[] | null;
}

export interface BatchEdges {
  triple: [string, string, string];
  src: Int32Array;
  dst: Int32Array;
  /** Ordinal into seeds[] of the seed whose expansion sampled each edge. */
  seed: Int32Array;
  hop: Int32Array;
  timestamps: Float64Array | null;
  features: Map<string, Column>;
}

export interface Batch {
  batchIndex: number;
  seeds: Seed[];
  /** Batch-local index of each seed's own node. */
  seedLocal: Int32Array;
  /** Masked feature cells as (node type, local index, column) triples. */
  excluded: Array<[string, number, string]>;
  /** Global node index per local node, per node type. */
  globalIndex: Map<string, Float64Array>;
  nodeTimestamps: Map<string, Float64Array | null>;
  nodeFeatures: Map<string, Map<string, Column>>;
  /** Keyed by "src/rel/dst". */
  edges: Map<string, BatchEdges>;
}

export interface ManifestFile {
  path: string;
  batchIndex: number;
  numSeeds: number;
}

export interface Manifest {
  split: string;
  rngSeed: number;
  batchSize: number;
  numSeeds: number;
  files: ManifestFile[];
}

export function edgeKey(triple: [string, string, string]): string {
  return triple.join('/');
}

function blobColumn(b64: string): Column {
  return columnFromBytes(new Uint8Array(Buffer.from(b64, 'base64')));
}

function blobInts(b64: string): Int32Array {
  const col = blobColumn(b64);
  return Int32Array.from(col.numbers!);
}

export function readBatchFile(path: string): Batch {
  const lines = readFileSync(path, 'utf-8')
    .split('\n')
    .filter((l) => l.trim().length > 0);
  const header = JSON.parse(lines[0] ?? '{}');
  if (header.kind !== 'header') throw new Error(`${path}: missing batch header`);
  const seeds: Seed[] = header.seeds.map((s: Record<string, unknown>) => ({
    seedId: s.seed_id as string,
    nodeType: s.node_type as string,
    nodeIndex: s.node_index as number,
    cutoff: s.cutoff as number | null,
    label: s.label as Seed['label'],
    labelRef: s.label_ref as string | null,
    negatives: s.negatives as number[] | null,
  }));
  const batch: Batch = {
    batchIndex: header.batch_index as number,
    seeds,
    seedLocal: Int32Array.from(header.seed_local as number[]),
    excluded: (header.excluded as Array<[string, number, string]>).map(
      ([t, i, c]) => [t, i, c],
    ),
    globalIndex: new Map(),
    nodeTimestamps: new Map(),
    nodeFeatures: new Map(),
    edges: new Map(),
  };
  for (const line of lines.slice(1)) {
    const rec = JSON.parse(line);
    if (rec.kind === 'nodes') {
      const t = rec.node_type as string;
      batch.globalIndex.set(t, blobColumn(rec.global_index).numbers!);
      batch.nodeTimestamps.set(
        t,
        rec.ts === null ? null : blobColumn(rec.ts).numbers!,
      );
      const feats = new Map<string, Column>();
      for (const [name, blob] of Object.entries(rec.features as Record<string, string>)) {
        feats.set(name, blobColumn(blob));
      }
      batch.nodeFeatures.set(t, feats);
    } else if (rec.kind === 'edges') {
      const triple = rec.triple as [string, string, string];
      const feats = new Map<string, Column>();
      for (const [name, blob] of Object.entries(rec.features as Record<string, string>)) {
        feats.set(name, blobColumn(blob));
      }
      batch.edges.set(edgeKey(triple), {
        triple,
        src: blobInts(rec.src),
        dst: blobInts(rec.dst),
        seed: blobInts(rec.seed),
        hop: blobInts(rec.hop),
        timestamps: rec.ts === null ? null : blobColumn(rec.ts).numbers!,
        features: feats,
      });
    } else {
      throw new Error(`${path}: unknown record kind ${JSON.stringify(rec.kind)}`);
    }
  }
  return batch;
}

export function readManifest(dir: string): Manifest {
  const raw = JSON.parse(readFileSync(join(dir, 'manifest.json'), 'utf-8'));
  return {
    split: raw.split,
    rngSeed: raw.rng_seed,
    batchSize: raw.batch_size,
    numSeeds: raw.num_seeds,
    files: (raw.files as Array<Record<string, unknown>>).map((f) => ({
      path: f.path as string,
      batchIndex: f.batch_index as number,
      numSeeds: f.num_seeds as number,
    })),
  };
}

/** Load every batch of an export directory, in manifest order. */
export function loadExport(dir: string): Batch[] {
  return readManifest(dir).files.map((f) => readBatchFile(join(dir, f.path)));
}

/** Number of local nodes of a type in a batch. */
export function nodeCount(batch: Batch, nodeType: string): number {
  return batch.globalIndex.get(nodeType)?.length ?? 0;
}
