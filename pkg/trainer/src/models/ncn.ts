// ---------------------------------------------------------------------------
// Neural common neighbors over a per-seed subgraph.
//
// A candidate link (i, j) is scored not just from the endpoint embeddings
// but also from the nodes reachable from both endpoints along configured
// metapaths: two node-type walks [t(i), ..., c] and [t(j), ..., c] ending
// at a shared type c. Walking treats edges as undirected within the seed's
// sampled subgraph; the common neighbors are the intersection of the two
// walks' terminal sets. Their embeddings are read from the inner layers of
// the already-computed forward pass, layer L minus the walk length (never
// below 0), summed, and concatenated:
//
//     score = MLP( h_i,L ∥ h_j,L ∥ Σ_c h_c,L-k_i ∥ Σ_c h_c,L-k_j )
//
// An empty intersection (or no configured metapaths) contributes zero
// vectors, which reduces the scorer to a plain MLP over the endpoints.
// ---------------------------------------------------------------------------

import { Batch } from '../batch.js';
import { Metapaths } from '../config.js';
import { Val } from '../tape.js';
import { SeedView } from '../view.js';
import { Ctx, zerosVal } from './common.js';

/** Positions in `to`-type reachable from each `from`-type position. */
function typePairAdjacency(
  view: SeedView,
  from: string,
  to: string,
): Map<number, Set<number>> {
  const adj = new Map<number, Set<number>>();
  const link = (a: number, b: number): void => {
    let s = adj.get(a);
    if (s === undefined) {
      s = new Set();
      adj.set(a, s);
    }
    s.add(b);
  };
  for (const ve of view.edges) {
    if (ve.triple[0] === from && ve.triple[2] === to) {
      for (let i = 0; i < ve.src.length; i++) link(ve.src[i]!, ve.dst[i]!);
    }
    if (ve.triple[0] === to && ve.triple[2] === from) {
      for (let i = 0; i < ve.src.length; i++) link(ve.dst[i]!, ve.src[i]!);
    }
  }
  return adj;
}

/** View positions of the walk's terminal type reachable from start. */
export function metapathTerminals(
  view: SeedView,
  start: number,
  path: string[],
): Set<number> {
  let frontier = new Set<number>([start]);
  for (let t = 1; t < path.length; t++) {
    const adj = typePairAdjacency(view, path[t - 1]!, path[t]!);
    const next = new Set<number>();
    for (const pos of frontier) {
      for (const nb of adj.get(pos) ?? []) next.add(nb);
    }
    frontier = next;
  }
  return frontier;
}

/**
 * Common neighbors of view positions i and j under the metapath pair,
 * as sorted positions in the walks' shared terminal node type.
 */
export function commonNeighbors(
  view: SeedView,
  iPos: number,
  jPos: number,
  metapaths: Metapaths,
): Int32Array {
  const fromI = metapathTerminals(view, iPos, metapaths[0]);
  const fromJ = metapathTerminals(view, jPos, metapaths[1]);
  const both = [...fromI].filter((pos) => fromJ.has(pos)).sort((a, b) => a - b);
  return Int32Array.from(both);
}

/** Reject walks that no edge type of the graph schema could realize. */
export function checkMetapaths(
  batch: Batch,
  metapaths: Metapaths,
  seedType: string,
  candidateType: string,
): void {
  const pairs = new Set<string>();
  for (const be of batch.edges.values()) {
    pairs.add(`${be.triple[0]}>${be.triple[2]}`);
    pairs.add(`${be.triple[2]}>${be.triple[0]}`);
  }
  const starts = [seedType, candidateType];
  for (let w = 0; w < 2; w++) {
    const path = metapaths[w]!;
    if (path[0] !== starts[w]) {
      throw new Error(
        `metapath ${w} starts at ${JSON.stringify(path[0])}, endpoint is ` +
          JSON.stringify(starts[w]),
      );
    }
    for (let t = 1; t < path.length; t++) {
      if (!pairs.has(`${path[t - 1]}>${path[t]}`)) {
        throw new Error(
          `metapath step ${path[t - 1]} -> ${path[t]} matches no edge type`,
        );
      }
    }
  }
}

/**
 * Summed inner-layer embeddings of the common neighbors: the walk of
 * length k reads layer L-k (clamped at 0), matching how far the terminal
 * nodes sit from the endpoint whose walk found them.
 */
export function commonNeighborSum(
  ctx: Ctx,
  perLayer: Map<string, Val>[],
  terminalType: string,
  cn: Int32Array,
  walkLength: number,
): Val {
  const hd = ctx.cfg.hiddenDim;
  if (cn.length === 0) return zerosVal(ctx.tape, 1, hd);
  const layer = Math.max(perLayer.length - 1 - walkLength, 0);
  const rows = ctx.tape.gatherRows(perLayer[layer]!.get(terminalType)!, cn);
  return ctx.tape.segmentSum(rows, new Int32Array(cn.length), 1);
}
