// ---------------------------------------------------------------------------
// Shared plumbing for the message-passing architectures.
//
// The convolutional architectures compute, per layer and node type,
//
//     h_v' = tanh( W_self_{t(v)} h_v + b_{t(v)} + AGG(incoming messages) )
//
// and differ in AGG; the transformer uses its own residual update but
// shares every helper here. Messages travel along stored edge direction
// (u, e, v): the graph extractor materializes a reverse edge type for every
// relation, so both directions are always available to the sampler and
// the trainer never has to invent transposes. tanh is the nonlinearity
// throughout because its smoothness keeps analytic gradients comparable
// against central finite differences at tight tolerance.
// ---------------------------------------------------------------------------

import { Batch } from '../batch.js';
import { ModelConfig } from '../config.js';
import {
  FeatureLayout,
  LabelPlan,
  checkLabelMasked,
  deriveLayout,
  edgeMatrix,
  nodeMatrix,
} from '../featurize.js';
import { Tape, Val } from '../tape.js';
import { SeedView, ViewEdges } from '../view.js';
import { Bound, ParamStore, bindParam } from './params.js';

/** Everything a forward pass needs besides the view itself. */
export interface Ctx {
  tape: Tape;
  store: ParamStore;
  bound: Bound;
  cfg: ModelConfig;
}

export function p(ctx: Ctx, name: string, rows: number, cols: number): Val {
  return bindParam(ctx.tape, ctx.store, ctx.bound, name, rows, cols);
}

/** Dense feature matrices for one batch under a fixed layout. */
export interface ModelInputs {
  layout: FeatureLayout;
  nodeX: Map<string, Float64Array>;
  edgeX: Map<string, Float64Array>;
}

export function batchInputs(batch: Batch, layout: FeatureLayout, plan: LabelPlan): ModelInputs {
  checkLabelMasked(batch, plan);
  const nodeX = new Map<string, Float64Array>();
  for (const t of batch.nodeFeatures.keys()) {
    nodeX.set(t, nodeMatrix(batch, t, layout, plan));
  }
  const edgeX = new Map<string, Float64Array>();
  for (const [key, be] of batch.edges) {
    edgeX.set(key, edgeMatrix(be, layout, key, plan.labelsOnly));
  }
  return { layout, nodeX, edgeX };
}

/** Batch-level feature layout shared by one export (see deriveLayout). */
export function inputsLayout(batch: Batch, plan: LabelPlan): FeatureLayout {
  return deriveLayout(batch, plan);
}

/** Copy selected rows of a row-major constant matrix into a fresh Val. */
export function constRows(
  tape: Tape,
  data: Float64Array,
  width: number,
  rows: Int32Array,
): Val {
  const out = new Float64Array(rows.length * width);
  for (let i = 0; i < rows.length; i++) {
    for (let j = 0; j < width; j++) out[i * width + j] = data[rows[i]! * width + j]!;
  }
  return tape.constant(out, rows.length, width);
}

export function zerosVal(tape: Tape, rows: number, cols: number): Val {
  return tape.constant(new Float64Array(rows * cols), rows, cols);
}

/** 1 / (number of view edges arriving at each destination position). */
export function inverseInDegree(dst: Int32Array, n: number): Float64Array {
  const deg = new Float64Array(n);
  for (let i = 0; i < dst.length; i++) deg[dst[i]!] = deg[dst[i]!]! + 1;
  const out = new Float64Array(dst.length);
  for (let i = 0; i < dst.length; i++) out[i] = 1 / deg[dst[i]!]!;
  return out;
}

/** Per-edge message input [h_u ∥ x_e]; featureless relations pass h_u alone. */
export function messageInput(ctx: Ctx, ve: ViewEdges, h: Map<string, Val>, xe: Val | null): Val {
  const hSrc = ctx.tape.gatherRows(h.get(ve.triple[0])!, ve.src);
  return xe === null ? hSrc : ctx.tape.concatCols([hSrc, xe]);
}

/** The W_self h_v + b term every layer starts from. */
export function selfTerm(ctx: Ctx, layer: number, nodeType: string, hPrev: Val): Val {
  const hd = ctx.cfg.hiddenDim;
  const w = p(ctx, `l${layer}/self/${nodeType}/W`, hd, hd);
  const b = p(ctx, `l${layer}/self/${nodeType}/b`, 1, hd);
  return ctx.tape.addBias(ctx.tape.matmul(hPrev, w), b);
}

/** Observed attention weights, for normalization checks. */
export interface AttentionRecord {
  layer: number;
  key: string;
  /** Destination view position of each incoming message. */
  dst: Int32Array;
  weights: Float64Array;
}

export interface Probe {
  attention: AttentionRecord[];
}

export interface LayerArgs {
  ctx: Ctx;
  layer: number;
  view: SeedView;
  /** Previous layer's embeddings per node type present in the view. */
  h: Map<string, Val>;
  /** Edge feature rows per view edge group key (null when width 0). */
  xE: Map<string, Val | null>;
  probe: Probe | null;
}

export type LayerFn = (args: LayerArgs) => Map<string, Val>;

/** Layer-0 embeddings: a learned projection of the raw node features. */
export function inputLayer(
  ctx: Ctx,
  view: SeedView,
  inputs: ModelInputs,
): Map<string, Val> {
  const hd = ctx.cfg.hiddenDim;
  const h = new Map<string, Val>();
  for (const [t, locals] of view.nodes) {
    const width = inputs.layout.nodes.get(t)?.width ?? 0;
    const b = p(ctx, `in/${t}/b`, 1, hd);
    if (width === 0) {
      h.set(t, ctx.tape.addBias(zerosVal(ctx.tape, locals.length, hd), b));
      continue;
    }
    const x = constRows(ctx.tape, inputs.nodeX.get(t)!, width, locals);
    const w = p(ctx, `in/${t}/W`, width, hd);
    h.set(t, ctx.tape.addBias(ctx.tape.matmul(x, w), b));
  }
  return h;
}

/** Edge feature slices for one view, keyed like view.edges. */
export function viewEdgeFeatures(
  ctx: Ctx,
  view: SeedView,
  inputs: ModelInputs,
): Map<string, Val | null> {
  const xE = new Map<string, Val | null>();
  for (const ve of view.edges) {
    const width = inputs.layout.edges.get(ve.key)?.width ?? 0;
    xE.set(
      ve.key,
      width === 0 ? null : constRows(ctx.tape, inputs.edgeX.get(ve.key)!, width, ve.rows),
    );
  }
  return xE;
}
