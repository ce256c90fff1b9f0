// ---------------------------------------------------------------------------
// Per-seed subgraph views over a merged batch.
//
// A batch deduplicates nodes across seeds, but each edge records the seed
// whose expansion sampled it, and seeds can carry different cutoff times.
// Message passing therefore runs one seed at a time over exactly that
// seed's edges: mixing neighborhoods would let information sampled under a
// later cutoff reach a seed with an earlier one. A view lists the
// participating batch-local nodes per type (seed node first) and rewrites
// the seed's edges into view positions, keeping the original edge rows so
// feature matrices can be sliced.
//
// For link ranking, the scored candidates (the true target first, then the
// sampled negatives) are appended to the view of the referenced node type
// so they at least contribute their own features; candidates missing from
// the batch entirely get position -1 and score from a zero embedding.
// ---------------------------------------------------------------------------

import { Batch } from './batch.js';

export interface ViewEdges {
  key: string;
  triple: [string, string, string];
  /** Positions into the view's node list of the source type. */
  src: Int32Array;
  /** Positions into the view's node list of the destination type. */
  dst: Int32Array;
  /** Row numbers of these edges in the batch's edge arrays. */
  rows: Int32Array;
}

export interface SeedView {
  seedOrdinal: number;
  seedType: string;
  /** Participating batch-local node indices per type, seed node first. */
  nodes: Map<string, Int32Array>;
  /** Position of the seed's own node within nodes[seed.nodeType]. */
  seedPos: number;
  edges: ViewEdges[];
  /** Node type being ranked, for seeds carrying negatives. */
  candidateType: string | null;
  /** View positions of [positive, ...negatives]; -1 when not in the batch. */
  candidatePos: Int32Array | null;
}

/**
 * The node type a foreign-key column points at, read off the edge types.
 * Foreign-key relations are named "table.column", so both the bare column
 * name and its qualified form are accepted.
 */
export function referencedType(batch: Batch, sourceType: string, fkColumn: string): string {
  const qualified = `${sourceType}.${fkColumn}`;
  for (const be of batch.edges.values()) {
    if (be.triple[0] === sourceType && (be.triple[1] === fkColumn || be.triple[1] === qualified)) {
      return be.triple[2];
    }
  }
  throw new Error(
    `no edge type (${sourceType}, ${fkColumn}, *) in batch; cannot rank candidates`,
  );
}

export function buildSeedViews(batch: Batch): SeedView[] {
  const globalToLocal = new Map<string, Map<number, number>>();
  for (const [t, gi] of batch.globalIndex) {
    const m = new Map<number, number>();
    for (let i = 0; i < gi.length; i++) m.set(gi[i]!, i);
    globalToLocal.set(t, m);
  }
  const edgeKeys = [...batch.edges.keys()].sort();
  const views: SeedView[] = [];
  for (let s = 0; s < batch.seeds.length; s++) {
    const seed = batch.seeds[s]!;
    const pos = new Map<string, Map<number, number>>();
    const order = new Map<string, number[]>();
    const posOf = (t: string, local: number): number => {
      let m = pos.get(t);
      if (m === undefined) {
        m = new Map();
        pos.set(t, m);
        order.set(t, []);
      }
      let p = m.get(local);
      if (p === undefined) {
        p = m.size;
        m.set(local, p);
        order.get(t)!.push(local);
      }
      return p;
    };
    const seedPos = posOf(seed.nodeType, batch.seedLocal[s]!);
    const edges: ViewEdges[] = [];
    for (const key of edgeKeys) {
      const be = batch.edges.get(key)!;
      const rows: number[] = [];
      for (let e = 0; e < be.seed.length; e++) {
        if (be.seed[e] === s) rows.push(e);
      }
      if (rows.length === 0) continue;
      const src = new Int32Array(rows.length);
      const dst = new Int32Array(rows.length);
      for (let i = 0; i < rows.length; i++) {
        src[i] = posOf(be.triple[0], be.src[rows[i]!]!);
        dst[i] = posOf(be.triple[2], be.dst[rows[i]!]!);
      }
      edges.push({ key, triple: be.triple, src, dst, rows: Int32Array.from(rows) });
    }
    let candidateType: string | null = null;
    let candidatePos: Int32Array | null = null;
    if (seed.negatives !== null && seed.labelRef !== null) {
      candidateType = referencedType(batch, seed.nodeType, seed.labelRef);
      const lookup = globalToLocal.get(candidateType)!;
      const globals = [seed.label as number, ...seed.negatives];
      candidatePos = new Int32Array(globals.length);
      for (let i = 0; i < globals.length; i++) {
        const local = lookup.get(globals[i]!);
        candidatePos[i] = local === undefined ? -1 : posOf(candidateType, local);
      }
    }
    const nodes = new Map<string, Int32Array>();
    for (const [t, locals] of order) nodes.set(t, Int32Array.from(locals));
    views.push({
      seedOrdinal: s,
      seedType: seed.nodeType,
      nodes,
      seedPos,
      edges,
      candidateType,
      candidatePos,
    });
  }
  return views;
}
