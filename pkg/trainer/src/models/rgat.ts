// ---------------------------------------------------------------------------
// Relational graph attention with edge features.
//
// Per relation τ and head k, each incoming edge (u, e, v) is scored by
//
//     a = LeakyReLU( V_{τ,k} [ h_u ∥ h_v ∥ x_e ] )
//
// and the scores are softmax-normalized over the incoming edges of each
// (destination node, relation) pair, so attention weights per node and
// relation sum to one. The message is W_{τ,k} [h_u ∥ x_e] weighted by the
// attention; head outputs are concatenated back to hidden width:
//
//     h_v' = tanh( W_self h_v + b + Σ_τ ∥_k Σ_{(u,e,v)} α W_{τ,k} [h_u ∥ x_e] )
// ---------------------------------------------------------------------------

import { Val } from '../tape.js';
import { LayerArgs, p, selfTerm } from './common.js';

export function rgatLayer(args: LayerArgs): Map<string, Val> {
  const { ctx, layer, view, h, xE, probe } = args;
  const hd = ctx.cfg.hiddenDim;
  const heads = ctx.cfg.heads ?? 1;
  const headDim = hd / heads;
  const acc = new Map<string, Val>();
  for (const [t, hPrev] of h) acc.set(t, selfTerm(ctx, layer, t, hPrev));
  for (const ve of view.edges) {
    const dstType = ve.triple[2];
    const n = h.get(dstType)!.rows;
    const xe = xE.get(ve.key) ?? null;
    const hSrc = ctx.tape.gatherRows(h.get(ve.triple[0])!, ve.src);
    const hDst = ctx.tape.gatherRows(h.get(dstType)!, ve.dst);
    const msgIn = xe === null ? hSrc : ctx.tape.concatCols([hSrc, xe]);
    const attIn = ctx.tape.concatCols(xe === null ? [hSrc, hDst] : [hSrc, hDst, xe]);
    const headOut: Val[] = [];
    for (let k = 0; k < heads; k++) {
      const v = p(ctx, `l${layer}/att/${ve.key}/h${k}/V`, attIn.cols, 1);
      const scores = ctx.tape.leakyRelu(ctx.tape.matmul(attIn, v));
      const alpha = ctx.tape.segmentSoftmax(scores, ve.dst, n);
      if (probe !== null) {
        probe.attention.push({
          layer,
          key: ve.key,
          dst: ve.dst,
          weights: Float64Array.from(alpha.data),
        });
      }
      const w = p(ctx, `l${layer}/rel/${ve.key}/h${k}/W`, msgIn.cols, headDim);
      const weighted = ctx.tape.rowMul(ctx.tape.matmul(msgIn, w), alpha);
      headOut.push(ctx.tape.segmentSum(weighted, ve.dst, n));
    }
    const summed = headOut.length === 1 ? headOut[0]! : ctx.tape.concatCols(headOut);
    acc.set(dstType, ctx.tape.add(acc.get(dstType)!, summed));
  }
  const out = new Map<string, Val>();
  for (const [t, z] of acc) out.set(t, ctx.tape.tanh(z));
  return out;
}
