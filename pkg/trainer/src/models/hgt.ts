// ---------------------------------------------------------------------------
// Heterogeneous graph transformer with edge features.
//
// Per head k, each incoming edge (u, e, v) is scored with typed key and
// query projections and a relation-specific bilinear map,
//
//     score = K_k(u) (W^ATT_{τ(e),k} + P_{τ(e),k}(x_e)) Q_k(v)^T / sqrt(d_k)
//
// where K_k(u) = h_u Klin_{t(u),k} and Q_k(v) = h_v Qlin_{t(v),k}, and
// P(x_e) = Σ_j x_{e,j} P_j is a parametrized linear projection of the edge
// features into an extra bilinear term (with no features it contributes
// nothing, so the model degenerates to plain HGT). Attention normalizes
// over every incoming edge of a node across relations. Messages concatenate
// the edge features before projection, msg = [h_u ∥ x_e] W^MSG_{τ(e),k},
// head outputs concatenate, and the update is the usual residual form
//
//     h_v' = Alin_{t(v)}( tanh(H̃_v) ) + h_v.
//
// The per-relation scalar attention prior of the original formulation is
// omitted; the relation-specific W^ATT already separates relations.
// ---------------------------------------------------------------------------

import { Val } from '../tape.js';
import { LayerArgs, p, zerosVal } from './common.js';

export function hgtLayer(args: LayerArgs): Map<string, Val> {
  const { ctx, layer, view, h, xE, probe } = args;
  const tape = ctx.tape;
  const hd = ctx.cfg.hiddenDim;
  const heads = ctx.cfg.heads ?? 1;
  const dk = hd / heads;
  const invSqrt = 1 / Math.sqrt(dk);

  const byDst = new Map<string, typeof view.edges>();
  for (const ve of view.edges) {
    const list = byDst.get(ve.triple[2]) ?? [];
    list.push(ve);
    byDst.set(ve.triple[2], list);
  }

  const keyCache = new Map<string, Val>();
  const keyOf = (t: string, k: number): Val => {
    const name = `${t}/h${k}`;
    let val = keyCache.get(name);
    if (val === undefined) {
      val = tape.matmul(h.get(t)!, p(ctx, `l${layer}/K/${t}/h${k}/W`, hd, dk));
      keyCache.set(name, val);
    }
    return val;
  };
  const queryCache = new Map<string, Val>();
  const queryOf = (t: string, k: number): Val => {
    const name = `${t}/h${k}`;
    let val = queryCache.get(name);
    if (val === undefined) {
      val = tape.matmul(h.get(t)!, p(ctx, `l${layer}/Q/${t}/h${k}/W`, hd, dk));
      queryCache.set(name, val);
    }
    return val;
  };

  const out = new Map<string, Val>();
  for (const [t, hPrev] of h) {
    const n = hPrev.rows;
    const ves = byDst.get(t) ?? [];
    const headAggs: Val[] = [];
    for (let k = 0; k < heads; k++) {
      let agg = zerosVal(tape, n, dk);
      if (ves.length > 0) {
        const scoreParts: Val[] = [];
        const messages: Val[] = [];
        const dstParts: number[] = [];
        for (const ve of ves) {
          const xe = xE.get(ve.key) ?? null;
          const kSrc = tape.gatherRows(keyOf(ve.triple[0], k), ve.src);
          const wAtt = p(ctx, `l${layer}/att/${ve.key}/h${k}/W`, dk, dk);
          let left = tape.matmul(kSrc, wAtt);
          if (xe !== null) {
            for (let j = 0; j < xe.cols; j++) {
              const pj = p(ctx, `l${layer}/att/${ve.key}/h${k}/P${j}`, dk, dk);
              const colScale = new Float64Array(ve.src.length);
              for (let i = 0; i < ve.src.length; i++) {
                colScale[i] = xe.data[i * xe.cols + j]!;
              }
              left = tape.add(left, tape.rowScale(tape.matmul(kSrc, pj), colScale));
            }
          }
          const qDst = tape.gatherRows(queryOf(t, k), ve.dst);
          const raw = tape.rowDot(left, qDst);
          const scale = new Float64Array(ve.src.length).fill(invSqrt);
          scoreParts.push(tape.rowScale(raw, scale));
          const hSrc = tape.gatherRows(h.get(ve.triple[0])!, ve.src);
          const msgIn = xe === null ? hSrc : tape.concatCols([hSrc, xe]);
          const wMsg = p(ctx, `l${layer}/msg/${ve.key}/h${k}/W`, msgIn.cols, dk);
          messages.push(tape.matmul(msgIn, wMsg));
          for (let i = 0; i < ve.dst.length; i++) dstParts.push(ve.dst[i]!);
        }
        const combinedDst = Int32Array.from(dstParts);
        const scores = scoreParts.length === 1 ? scoreParts[0]! : tape.concatRows(scoreParts);
        const alpha = tape.segmentSoftmax(scores, combinedDst, n);
        if (probe !== null) {
          probe.attention.push({
            layer,
            key: `hgt/${t}/h${k}`,
            dst: combinedDst,
            weights: Float64Array.from(alpha.data),
          });
        }
        let offset = 0;
        for (let v = 0; v < ves.length; v++) {
          const ve = ves[v]!;
          const m = ve.src.length;
          const idx = new Int32Array(m);
          for (let i = 0; i < m; i++) idx[i] = offset + i;
          const alphaSlice = tape.gatherRows(alpha, idx);
          const weighted = tape.rowMul(messages[v]!, alphaSlice);
          agg = tape.add(agg, tape.segmentSum(weighted, ve.dst, n));
          offset += m;
        }
      }
      headAggs.push(agg);
    }
    const stacked = headAggs.length === 1 ? headAggs[0]! : tape.concatCols(headAggs);
    const act = tape.tanh(stacked);
    const proj = tape.addBias(
      tape.matmul(act, p(ctx, `l${layer}/out/${t}/W`, hd, hd)),
      p(ctx, `l${layer}/out/${t}/b`, 1, hd),
    );
    out.set(t, tape.add(proj, hPrev));
  }
  return out;
}
