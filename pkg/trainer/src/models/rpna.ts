// ---------------------------------------------------------------------------
// Relational principal neighborhood aggregation with edge features.
//
// Instead of a single normalized sum, each relation aggregates its incoming
// message inputs [h_u ∥ x_e] with every configured aggregator (mean, min,
// max), concatenates the aggregator outputs, and projects the result:
//
//     h_v' = tanh( W_self h_v + b
//                  + Σ_τ W_τ [ agg_1(...) ∥ agg_2(...) ∥ ... ] )
//
// With aggregators = {mean} the projection input is the per-relation mean
// of [h_u ∥ x_e], so W_τ mean(...) = Σ (1/deg) W_τ [h_u ∥ x_e]: the layer
// collapses to relational graph convolution with the same weights, which
// is checked by a parameter-tying test. Nodes with no incoming edges of a
// relation contribute zero for every aggregator.
// ---------------------------------------------------------------------------

import { Val } from '../tape.js';
import { LayerArgs, messageInput, p, selfTerm } from './common.js';

export function rpnaLayer(args: LayerArgs): Map<string, Val> {
  const { ctx, layer, view, h, xE } = args;
  const hd = ctx.cfg.hiddenDim;
  const acc = new Map<string, Val>();
  for (const [t, hPrev] of h) acc.set(t, selfTerm(ctx, layer, t, hPrev));
  for (const ve of view.edges) {
    const dstType = ve.triple[2];
    const n = h.get(dstType)!.rows;
    const input = messageInput(ctx, ve, h, xE.get(ve.key) ?? null);
    const parts: Val[] = [];
    for (const agg of ctx.cfg.pnaAggregators) {
      if (agg === 'mean') parts.push(ctx.tape.segmentMean(input, ve.dst, n));
      else if (agg === 'min') parts.push(ctx.tape.segmentExtreme(input, ve.dst, n, -1));
      else parts.push(ctx.tape.segmentExtreme(input, ve.dst, n, 1));
    }
    const stacked = parts.length === 1 ? parts[0]! : ctx.tape.concatCols(parts);
    const w = p(ctx, `l${layer}/rel/${ve.key}/W`, stacked.cols, hd);
    const projected = ctx.tape.matmul(stacked, w);
    acc.set(dstType, ctx.tape.add(acc.get(dstType)!, projected));
  }
  const out = new Map<string, Val>();
  for (const [t, z] of acc) out.set(t, ctx.tape.tanh(z));
  return out;
}
