// ---------------------------------------------------------------------------
// Tabular baseline over a compiled feature table.
//
// Instead of message passing, this model reads one row per seed from a
// feature table produced ahead of time (the aggregation compiler's output
// for the target table, stored as a binary column file). The table carries
// the target table's own columns plus the synthesized aggregate columns,
// one row per target-table row in storage order, so a seed's feature row
// is simply row seed.nodeIndex.
//
// The table also carries the raw label column under its plain name, and
// unlike graph batches nothing masks the seed's own cell, so that column
// is always dropped from the layout here; feeding it would hand the model
// the answer. The forward pass is `layers` tanh blocks of hidden_dim
// followed by the same scalar or per-class heads the graph models use.
// ---------------------------------------------------------------------------

import { ModelConfig } from '../config.js';
import { TypeLayout, tableLayout, tableMatrix } from '../featurize.js';
import { Column } from '../rdbc.js';
import { Rng } from '../random.js';
import { Tape, Val } from '../tape.js';
import { Ctx, p } from './common.js';
import { ParamStore, makeParams } from './params.js';

export interface TabularModel {
  cfg: ModelConfig;
  store: ParamStore;
  layout: TypeLayout;
  /** Dense features, one row per target-table row in storage order. */
  matrix: Float64Array;
  rows: number;
}

export function makeTabular(
  cfg: ModelConfig,
  columns: Column[],
  labelColumn: string | null,
  seed: number,
): TabularModel {
  if (cfg.architecture !== 'mlp_tabular') {
    throw new Error(`${cfg.architecture} consumes graph batches, not feature tables`);
  }
  const features = new Map(columns.map((c) => [c.name, c]));
  if (features.size !== columns.length) {
    throw new Error('feature table has duplicate column names');
  }
  const layout = tableLayout(features, (name) => name === labelColumn);
  const rows = columns.length > 0 ? columns[0]!.rowCount : 0;
  return {
    cfg,
    store: makeParams(seed),
    layout,
    matrix: tableMatrix(features, layout, rows),
    rows,
  };
}

function dropRows(tape: Tape, x: Val, rng: Rng, rate: number): Val {
  const mask = new Float64Array(x.rows * x.cols);
  const keep = 1 / (1 - rate);
  for (let i = 0; i < mask.length; i++) mask[i] = rng.uniform() < rate ? 0 : keep;
  return tape.maskMul(x, mask);
}

/**
 * Hidden representation (selected rows × hidden_dim). Row indices are
 * target-table row numbers, one per seed. Dropout masks are drawn only
 * when a generator is supplied, so evaluation passes are deterministic.
 */
export function tabularForward(
  ctx: Ctx,
  model: TabularModel,
  rows: Int32Array,
  dropoutRng: Rng | null = null,
): Val {
  const w = model.layout.width;
  const data = new Float64Array(rows.length * w);
  for (let i = 0; i < rows.length; i++) {
    const r = rows[i]!;
    if (r < 0 || r >= model.rows) {
      throw new Error(`row ${r} outside feature table of ${model.rows} rows`);
    }
    data.set(model.matrix.subarray(r * w, (r + 1) * w), i * w);
  }
  let h = ctx.tape.constant(data, rows.length, w);
  for (let layer = 1; layer <= ctx.cfg.layers; layer++) {
    if (dropoutRng !== null && ctx.cfg.dropout > 0) {
      h = dropRows(ctx.tape, h, dropoutRng, ctx.cfg.dropout);
    }
    const weight = p(ctx, `l${layer}/W`, h.cols, ctx.cfg.hiddenDim);
    const bias = p(ctx, `l${layer}/b`, 1, ctx.cfg.hiddenDim);
    h = ctx.tape.tanh(ctx.tape.addBias(ctx.tape.matmul(h, weight), bias));
  }
  return h;
}

/** Scalar output (logit or regression value) per selected row. */
export function tabularScores(ctx: Ctx, hidden: Val): Val {
  const w = p(ctx, 'head/W', hidden.cols, 1);
  const b = p(ctx, 'head/b', 1, 1);
  return ctx.tape.addBias(ctx.tape.matmul(hidden, w), b);
}

/** Per-class logits per selected row. */
export function tabularLogits(ctx: Ctx, hidden: Val, classes: number): Val {
  const w = p(ctx, 'head/W', hidden.cols, classes);
  const b = p(ctx, 'head/b', 1, classes);
  return ctx.tape.addBias(ctx.tape.matmul(hidden, w), b);
}
