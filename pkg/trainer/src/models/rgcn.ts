// ---------------------------------------------------------------------------
// Relational graph convolution with edge features.
//
//     h_v' = tanh( W_self_{t(v)} h_v + b
//                  + Σ_{(u,e,v)} c_e W_{τ(e)} [h_u ∥ x_e] )
//
// c_e = 1 / |incoming edges of v under τ(e)|, the per-relation mean. The
// normalization constants are data, not parameters, so they enter as
// constant row scales.
// ---------------------------------------------------------------------------

import { Val } from '../tape.js';
import { LayerArgs, inverseInDegree, messageInput, p, selfTerm } from './common.js';

export function rgcnLayer(args: LayerArgs): Map<string, Val> {
  const { ctx, layer, view, h, xE } = args;
  const hd = ctx.cfg.hiddenDim;
  const acc = new Map<string, Val>();
  for (const [t, hPrev] of h) acc.set(t, selfTerm(ctx, layer, t, hPrev));
  for (const ve of view.edges) {
    const dstType = ve.triple[2];
    const xe = xE.get(ve.key) ?? null;
    const input = messageInput(ctx, ve, h, xe);
    const w = p(ctx, `l${layer}/rel/${ve.key}/W`, input.cols, hd);
    const msg = ctx.tape.matmul(input, w);
    const scaled = ctx.tape.rowScale(msg, inverseInDegree(ve.dst, h.get(dstType)!.rows));
    const summed = ctx.tape.segmentSum(scaled, ve.dst, h.get(dstType)!.rows);
    acc.set(dstType, ctx.tape.add(acc.get(dstType)!, summed));
  }
  const out = new Map<string, Val>();
  for (const [t, z] of acc) out.set(t, ctx.tape.tanh(z));
  return out;
}
