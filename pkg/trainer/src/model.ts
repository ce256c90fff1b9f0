// ---------------------------------------------------------------------------
// Forward passes: views in, per-seed outputs out.
//
// A forward runs one seed view at a time through layer 0 (a learned
// projection of raw features) and L architecture layers, keeping every
// layer's embeddings so common-neighbor scoring can read inner layers.
// Attribute tasks read the seed node's final embedding into a scalar or
// per-class head; link ranking scores the seed against each candidate with
// an MLP over endpoint embeddings, plus common-neighbor sums under the
// ncn_rgcn architecture. Dropout masks are drawn only when a generator is
// supplied, so evaluation passes are deterministic.
// ---------------------------------------------------------------------------

import { Batch } from './batch.js';
import { ModelConfig } from './config.js';
import { LabelPlan } from './featurize.js';
import { Rng } from './random.js';
import { Tape, Val } from './tape.js';
import { SeedView } from './view.js';
import {
  Ctx,
  LayerFn,
  ModelInputs,
  Probe,
  inputLayer,
  p,
  viewEdgeFeatures,
  zerosVal,
} from './models/common.js';
import { hgtLayer } from './models/hgt.js';
import { checkMetapaths, commonNeighborSum, commonNeighbors } from './models/ncn.js';
import { ParamStore, makeParams } from './models/params.js';
import { rgatLayer } from './models/rgat.js';
import { rgcnLayer } from './models/rgcn.js';
import { rpnaLayer } from './models/rpna.js';

const LAYER_FNS: Record<string, LayerFn> = {
  rgcn: rgcnLayer,
  ncn_rgcn: rgcnLayer,
  rgat: rgatLayer,
  hgt: hgtLayer,
  rpna: rpnaLayer,
};

export interface GraphModel {
  cfg: ModelConfig;
  store: ParamStore;
  plan: LabelPlan;
}

export function makeModel(cfg: ModelConfig, plan: LabelPlan, seed: number): GraphModel {
  if (cfg.architecture === 'mlp_tabular') {
    throw new Error('mlp_tabular consumes feature tables, not graph batches');
  }
  return { cfg, store: makeParams(seed), plan };
}

export interface ViewForward {
  /** Embeddings per node type for layers 0..L. */
  perLayer: Map<string, Val>[];
  /** The seed node's final embedding, 1 × hidden. */
  seedEmb: Val;
}

function dropoutMask(rng: Rng, rows: number, cols: number, rate: number): Float64Array {
  const mask = new Float64Array(rows * cols);
  const keep = 1 / (1 - rate);
  for (let i = 0; i < mask.length; i++) mask[i] = rng.uniform() < rate ? 0 : keep;
  return mask;
}

export function forwardView(
  ctx: Ctx,
  view: SeedView,
  inputs: ModelInputs,
  probe: Probe | null = null,
  dropoutRng: Rng | null = null,
): ViewForward {
  const layerFn = LAYER_FNS[ctx.cfg.architecture];
  if (layerFn === undefined) {
    throw new Error(`no forward for architecture ${ctx.cfg.architecture}`);
  }
  let h = inputLayer(ctx, view, inputs);
  const xE = viewEdgeFeatures(ctx, view, inputs);
  const perLayer = [h];
  for (let layer = 1; layer <= ctx.cfg.layers; layer++) {
    if (dropoutRng !== null && ctx.cfg.dropout > 0) {
      const dropped = new Map<string, Val>();
      for (const [t, val] of h) {
        dropped.set(
          t,
          ctx.tape.maskMul(val, dropoutMask(dropoutRng, val.rows, val.cols, ctx.cfg.dropout)),
        );
      }
      h = dropped;
    }
    h = layerFn({ ctx, layer, view, h, xE, probe });
    perLayer.push(h);
  }
  const seedEmb = ctx.tape.gatherRows(h.get(view.seedType)!, Int32Array.of(view.seedPos));
  return { perLayer, seedEmb };
}

/** Two-layer perceptron used by every output head. */
function mlp(ctx: Ctx, name: string, input: Val, outDim: number): Val {
  const hd = ctx.cfg.hiddenDim;
  const w1 = p(ctx, `${name}/W1`, input.cols, hd);
  const b1 = p(ctx, `${name}/b1`, 1, hd);
  const hid = ctx.tape.tanh(ctx.tape.addBias(ctx.tape.matmul(input, w1), b1));
  const w2 = p(ctx, `${name}/W2`, hd, outDim);
  const b2 = p(ctx, `${name}/b2`, 1, outDim);
  return ctx.tape.addBias(ctx.tape.matmul(hid, w2), b2);
}

/** Scalar output (logit or regression value) for the seed node. */
export function seedScore(ctx: Ctx, fwd: ViewForward): Val {
  const hd = ctx.cfg.hiddenDim;
  const w = p(ctx, 'head/W', hd, 1);
  const b = p(ctx, 'head/b', 1, 1);
  return ctx.tape.addBias(ctx.tape.matmul(fwd.seedEmb, w), b);
}

/** Per-class logits for the seed node. */
export function seedLogits(ctx: Ctx, fwd: ViewForward, classes: number): Val {
  const hd = ctx.cfg.hiddenDim;
  const w = p(ctx, 'head/W', hd, classes);
  const b = p(ctx, 'head/b', 1, classes);
  return ctx.tape.addBias(ctx.tape.matmul(fwd.seedEmb, w), b);
}

/**
 * Scores for [positive, ...negatives], one row each. Candidates absent
 * from the batch stand in as zero embeddings (and find no common
 * neighbors), so they are scored purely by the head's bias surface.
 */
export function candidateScores(
  ctx: Ctx,
  batch: Batch,
  view: SeedView,
  fwd: ViewForward,
): Val {
  if (view.candidatePos === null || view.candidateType === null) {
    throw new Error('seed carries no ranking candidates');
  }
  const hd = ctx.cfg.hiddenDim;
  const top = fwd.perLayer[fwd.perLayer.length - 1]!;
  const candEmb: Val[] = [];
  for (const pos of view.candidatePos) {
    candEmb.push(
      pos < 0
        ? zerosVal(ctx.tape, 1, hd)
        : ctx.tape.gatherRows(top.get(view.candidateType)!, Int32Array.of(pos)),
    );
  }
  const c = view.candidatePos.length;
  const seedRows = ctx.tape.concatRows(new Array<Val>(c).fill(fwd.seedEmb));
  const candRows = ctx.tape.concatRows(candEmb);
  const metapaths = ctx.cfg.architecture === 'ncn_rgcn' ? ctx.cfg.ncnMetapaths : null;
  if (ctx.cfg.architecture !== 'ncn_rgcn') {
    return mlp(ctx, 'rank', ctx.tape.concatCols([seedRows, candRows]), 1);
  }
  let cnFromSeed: Val;
  let cnFromCand: Val;
  if (metapaths === null) {
    cnFromSeed = zerosVal(ctx.tape, c, hd);
    cnFromCand = zerosVal(ctx.tape, c, hd);
  } else {
    checkMetapaths(batch, metapaths, view.seedType, view.candidateType);
    const term = metapaths[0][metapaths[0].length - 1]!;
    const seedParts: Val[] = [];
    const candParts: Val[] = [];
    for (const pos of view.candidatePos) {
      const cn =
        pos < 0
          ? new Int32Array(0)
          : commonNeighbors(view, view.seedPos, pos, metapaths);
      seedParts.push(
        commonNeighborSum(ctx, fwd.perLayer, term, cn, metapaths[0].length - 1),
      );
      candParts.push(
        commonNeighborSum(ctx, fwd.perLayer, term, cn, metapaths[1].length - 1),
      );
    }
    cnFromSeed = ctx.tape.concatRows(seedParts);
    cnFromCand = ctx.tape.concatRows(candParts);
  }
  const input = ctx.tape.concatCols([seedRows, candRows, cnFromSeed, cnFromCand]);
  return mlp(ctx, 'rank', input, 1);
}

/** Fresh per-step context; leaves bound on this tape share gradients. */
export function makeCtx(model: { cfg: ModelConfig; store: ParamStore }): Ctx {
  return { tape: new Tape(), store: model.store, bound: new Map(), cfg: model.cfg };
}
