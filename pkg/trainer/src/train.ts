// ---------------------------------------------------------------------------
// Task derivation, loss assembly, and the optimization loop.
//
// The evaluation metric decides the task shape: auc means binary
// classification with a scalar logit, accuracy means one logit per
// observed class, rmse means scalar regression, and mrr means ranking the
// true link target against each seed's sampled negatives. Everything else
// about the task (target node type, label column, candidate lists) is read
// off the seeds themselves, so the trainer needs no copy of the dataset
// definition that produced the export.
//
// Training minimizes the matching loss with Adam over lazily created
// parameters, evaluates the validation split after every epoch, keeps a
// snapshot of the best weights, and stops early when the validation metric
// has not improved for `patience` consecutive epochs. A non-finite loss
// aborts immediately, naming the batch that produced it, rather than
// letting NaNs spread through the parameters.
// ---------------------------------------------------------------------------

import { Batch, Seed } from './batch.js';
import { ModelConfig, TrainSettings } from './config.js';
import { FeatureLayout, LabelPlan, TypeLayout } from './featurize.js';
import { accuracy, auc, mrr, rmse } from './metrics.js';
import {
  GraphModel,
  candidateScores,
  forwardView,
  makeCtx,
  makeModel,
  seedLogits,
  seedScore,
} from './model.js';
import { Ctx, ModelInputs, batchInputs, inputsLayout } from './models/common.js';
import {
  TabularModel,
  makeTabular,
  tabularForward,
  tabularLogits,
  tabularScores,
} from './models/mlp.js';
import { Bound, ParamStore } from './models/params.js';
import { Column } from './rdbc.js';
import { Rng } from './random.js';
import { Val } from './tape.js';
import { buildSeedViews } from './view.js';

export const METRICS = ['auc', 'accuracy', 'rmse', 'mrr'] as const;

export type Metric = (typeof METRICS)[number];

export type TaskKind = 'binary' | 'multiclass' | 'regression' | 'ranking';

const KIND_BY_METRIC: Record<Metric, TaskKind> = {
  auc: 'binary',
  accuracy: 'multiclass',
  rmse: 'regression',
  mrr: 'ranking',
};

export interface TaskInfo {
  kind: TaskKind;
  metric: Metric;
  /** Node type the seeds live on. */
  targetType: string;
  /** Label column on the target type; null for ranking tasks. */
  labelColumn: string | null;
  /** Sorted distinct integer labels; non-empty only for multiclass. */
  classes: number[];
}

export interface SplitBatches {
  train: Batch[];
  val: Batch[];
  test: Batch[];
}

function labelValue(seed: Seed): number {
  const v = Number(seed.label);
  if (!Number.isFinite(v)) {
    throw new Error(`seed ${seed.seedId}: label ${JSON.stringify(seed.label)} is not numeric`);
  }
  return v;
}

/** Read the task's shape off the exported seeds and the chosen metric. */
export function deriveTask(metric: Metric, splits: SplitBatches): TaskInfo {
  const kind = KIND_BY_METRIC[metric];
  if (kind === undefined) {
    throw new Error(`unknown metric ${JSON.stringify(metric)}`);
  }
  const all = [...splits.train, ...splits.val, ...splits.test];
  let first: Seed | null = null;
  for (const b of all) {
    if (b.seeds.length > 0) {
      first = b.seeds[0]!;
      break;
    }
  }
  if (first === null) throw new Error('no seeds in any split');
  const classes: number[] = [];
  if (kind === 'multiclass') {
    const seen = new Set<number>();
    for (const b of all) {
      for (const s of b.seeds) {
        const v = labelValue(s);
        if (!Number.isInteger(v)) {
          throw new Error(`accuracy needs integer labels, got ${JSON.stringify(s.label)}`);
        }
        seen.add(v);
      }
    }
    classes.push(...[...seen].sort((x, y) => x - y));
  }
  if (kind === 'ranking' && first.labelRef === null) {
    throw new Error('mrr needs seeds that reference a foreign-key column');
  }
  return {
    kind,
    metric,
    targetType: first.nodeType,
    labelColumn: kind === 'ranking' ? null : first.labelRef,
    classes,
  };
}

/** How the model treats the label column, from config plus task. */
export function labelPlanFor(cfg: ModelConfig, task: TaskInfo): LabelPlan {
  return {
    targetType: task.targetType,
    labelColumn: task.labelColumn,
    useLabelFeature: cfg.useLabelFeature && task.labelColumn !== null,
    labelsOnly: cfg.labelsOnly,
  };
}

/**
 * Union of per-batch layouts. Per-type layouts agree across batches
 * because dictionaries and vector dims come from the full-table columns;
 * the union only fills in types a particular batch happened not to touch.
 */
export function layoutOver(batches: Batch[], plan: LabelPlan): FeatureLayout {
  const nodes = new Map<string, TypeLayout>();
  const edges = new Map<string, TypeLayout>();
  for (const b of batches) {
    const l = inputsLayout(b, plan);
    for (const [t, tl] of l.nodes) if (!nodes.has(t)) nodes.set(t, tl);
    for (const [k, tl] of l.edges) if (!edges.has(k)) edges.set(k, tl);
  }
  return { nodes, edges };
}

/** A batch with everything tape-independent computed once. */
export interface PreparedBatch {
  batch: Batch;
  views: ReturnType<typeof buildSeedViews> | null;
  inputs: ModelInputs | null;
}

export function prepareGraphBatches(
  batches: Batch[],
  layout: FeatureLayout,
  plan: LabelPlan,
): PreparedBatch[] {
  const out: PreparedBatch[] = [];
  for (const batch of batches) {
    if (batch.seeds.length === 0) continue;
    out.push({
      batch,
      views: buildSeedViews(batch),
      inputs: batchInputs(batch, layout, plan),
    });
  }
  return out;
}

export function prepareTabularBatches(batches: Batch[]): PreparedBatch[] {
  const out: PreparedBatch[] = [];
  for (const batch of batches) {
    if (batch.seeds.length === 0) continue;
    out.push({ batch, views: null, inputs: null });
  }
  return out;
}

export type AnyModel =
  | { kind: 'graph'; model: GraphModel }
  | { kind: 'tabular'; model: TabularModel };

export interface BatchOutputs {
  /** Stacked score rows: n×1, n×classes, or (Σ candidates)×1 for ranking. */
  out: Val;
  /** Ranking only: seed ordinal owning each score row. */
  seg: Int32Array | null;
}

function graphOutputs(
  ctx: Ctx,
  pb: PreparedBatch,
  task: TaskInfo,
  dropoutRng: Rng | null,
): BatchOutputs {
  if (pb.views === null || pb.inputs === null) {
    throw new Error('batch was not prepared for a graph model');
  }
  const parts: Val[] = [];
  const seg: number[] = [];
  for (const view of pb.views) {
    const fwd = forwardView(ctx, view, pb.inputs, null, dropoutRng);
    if (task.kind === 'ranking') {
      const scores = candidateScores(ctx, pb.batch, view, fwd);
      parts.push(scores);
      for (let i = 0; i < scores.rows; i++) seg.push(view.seedOrdinal);
    } else if (task.kind === 'multiclass') {
      parts.push(seedLogits(ctx, fwd, task.classes.length));
    } else {
      parts.push(seedScore(ctx, fwd));
    }
  }
  return {
    out: ctx.tape.concatRows(parts),
    seg: task.kind === 'ranking' ? Int32Array.from(seg) : null,
  };
}

function tabularOutputs(
  ctx: Ctx,
  model: TabularModel,
  pb: PreparedBatch,
  task: TaskInfo,
  dropoutRng: Rng | null,
): BatchOutputs {
  const rows = new Int32Array(pb.batch.seeds.length);
  for (let i = 0; i < rows.length; i++) rows[i] = pb.batch.seeds[i]!.nodeIndex;
  const hidden = tabularForward(ctx, model, rows, dropoutRng);
  const out =
    task.kind === 'multiclass'
      ? tabularLogits(ctx, hidden, task.classes.length)
      : tabularScores(ctx, hidden);
  return { out, seg: null };
}

export function batchOutputs(
  ctx: Ctx,
  model: AnyModel,
  pb: PreparedBatch,
  task: TaskInfo,
  dropoutRng: Rng | null = null,
): BatchOutputs {
  return model.kind === 'graph'
    ? graphOutputs(ctx, pb, task, dropoutRng)
    : tabularOutputs(ctx, model.model, pb, task, dropoutRng);
}

/** The task's loss over one batch's stacked outputs. */
export function batchLoss(ctx: Ctx, o: BatchOutputs, seeds: Seed[], task: TaskInfo): Val {
  if (task.kind === 'binary') {
    const labels = new Float64Array(seeds.length);
    for (let i = 0; i < seeds.length; i++) {
      const v = labelValue(seeds[i]!);
      if (v !== 0 && v !== 1) {
        throw new Error(`seed ${seeds[i]!.seedId}: binary label must be 0 or 1, got ${v}`);
      }
      labels[i] = v;
    }
    return ctx.tape.bceWithLogits(o.out, labels);
  }
  if (task.kind === 'regression') {
    const targets = new Float64Array(seeds.length);
    for (let i = 0; i < seeds.length; i++) targets[i] = labelValue(seeds[i]!);
    return ctx.tape.mse(o.out, targets);
  }
  if (task.kind === 'multiclass') {
    const targets = new Int32Array(seeds.length);
    for (let i = 0; i < seeds.length; i++) {
      const idx = task.classes.indexOf(labelValue(seeds[i]!));
      if (idx < 0) {
        throw new Error(`seed ${seeds[i]!.seedId}: label outside the class vocabulary`);
      }
      targets[i] = idx;
    }
    return ctx.tape.softmaxNll(o.out, targets);
  }
  if (o.seg === null) throw new Error('ranking loss needs per-row seed ordinals');
  return ctx.tape.rankingNll(o.out, o.seg, seeds.length);
}

export interface Prediction {
  seedId: string;
  /** Attribute tasks: probability, regression value, or predicted class. */
  score: number | null;
  /** Ranking: scores for [positive, ...negatives], in seed order. */
  scores: number[] | null;
  /** Numeric truth for attribute tasks; null for ranking. */
  label: number | null;
}

function sigmoid(z: number): number {
  return 1 / (1 + Math.exp(-z));
}

/** Deterministic (dropout-free) per-seed predictions for one batch. */
export function predictBatch(model: AnyModel, pb: PreparedBatch, task: TaskInfo): Prediction[] {
  const ctx = makeCtx(model.model);
  const o = batchOutputs(ctx, model, pb, task, null);
  const seeds = pb.batch.seeds;
  const preds: Prediction[] = [];
  if (task.kind === 'ranking') {
    let row = 0;
    for (const seed of seeds) {
      const count = 1 + (seed.negatives?.length ?? 0);
      const scores: number[] = [];
      for (let j = 0; j < count; j++) scores.push(o.out.data[row + j]!);
      row += count;
      preds.push({ seedId: seed.seedId, score: null, scores, label: null });
    }
    return preds;
  }
  for (let i = 0; i < seeds.length; i++) {
    let score: number;
    if (task.kind === 'multiclass') {
      const k = task.classes.length;
      let best = 0;
      for (let j = 1; j < k; j++) {
        if (o.out.data[i * k + j]! > o.out.data[i * k + best]!) best = j;
      }
      score = task.classes[best]!;
    } else if (task.kind === 'binary') {
      score = sigmoid(o.out.data[i]!);
    } else {
      score = o.out.data[i]!;
    }
    preds.push({ seedId: seeds[i]!.seedId, score, scores: null, label: labelValue(seeds[i]!) });
  }
  return preds;
}

/** The task metric over every seed of the given prepared batches. */
export function evaluateSplit(
  model: AnyModel,
  prepared: PreparedBatch[],
  task: TaskInfo,
): number {
  const scores: number[] = [];
  const labels: number[] = [];
  const queries: Array<Array<[number, number]>> = [];
  for (const pb of prepared) {
    for (const pr of predictBatch(model, pb, task)) {
      if (task.kind === 'ranking') {
        queries.push(pr.scores!.map((s, i) => [s, i === 0 ? 1 : 0] as [number, number]));
      } else {
        scores.push(pr.score!);
        labels.push(pr.label!);
      }
    }
  }
  if (task.metric === 'auc') return auc(scores, labels);
  if (task.metric === 'accuracy') return accuracy(scores, labels);
  if (task.metric === 'rmse') return rmse(scores, labels);
  return mrr(queries);
}

export interface Adam {
  lr: number;
  beta1: number;
  beta2: number;
  eps: number;
  step: number;
  m: Map<string, Float64Array>;
  v: Map<string, Float64Array>;
}

export function makeAdam(lr: number): Adam {
  return { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: new Map(), v: new Map() };
}

/**
 * One Adam update over the parameters bound this step. Moment buffers are
 * keyed by parameter name because parameters materialize lazily; a
 * parameter first touched late simply starts its moments at zero.
 */
export function adamStep(opt: Adam, bound: Bound): void {
  opt.step += 1;
  const c1 = 1 - opt.beta1 ** opt.step;
  const c2 = 1 - opt.beta2 ** opt.step;
  for (const [name, val] of bound) {
    let m = opt.m.get(name);
    let v = opt.v.get(name);
    if (m === undefined || v === undefined) {
      m = new Float64Array(val.data.length);
      v = new Float64Array(val.data.length);
      opt.m.set(name, m);
      opt.v.set(name, v);
    }
    for (let i = 0; i < val.data.length; i++) {
      const g = val.grad[i]!;
      m[i] = opt.beta1 * m[i]! + (1 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i]! + (1 - opt.beta2) * g * g;
      val.data[i] = val.data[i]! - (opt.lr * (m[i]! / c1)) / (Math.sqrt(v[i]! / c2) + opt.eps);
    }
  }
}

function snapshot(store: ParamStore): Map<string, Float64Array> {
  const snap = new Map<string, Float64Array>();
  for (const [name, e] of store.entries) snap.set(name, Float64Array.from(e.data));
  return snap;
}

/**
 * Return the store to a snapshot's state. Parameters created after the
 * snapshot are deleted outright: recreating them lazily reproduces their
 * deterministic initialization, which is exactly what they would have
 * held at snapshot time.
 */
function restore(store: ParamStore, snap: Map<string, Float64Array>): void {
  for (const name of [...store.entries.keys()]) {
    if (!snap.has(name)) store.entries.delete(name);
  }
  for (const [name, data] of snap) store.entries.get(name)!.data.set(data);
}

function betterThan(metric: Metric, a: number, b: number): boolean {
  return metric === 'rmse' ? a < b : a > b;
}

export interface EpochRecord {
  epoch: number;
  trainLoss: number;
  valMetric: number;
}

export interface TrainResult {
  history: EpochRecord[];
  /** Epoch whose weights the model ends with; -1 when no epoch ran. */
  bestEpoch: number;
  bestValMetric: number;
}

export function trainModel(
  model: AnyModel,
  trainBatches: PreparedBatch[],
  valBatches: PreparedBatch[],
  task: TaskInfo,
  settings: TrainSettings,
  log: ((line: string) => void) | null = null,
): TrainResult {
  if (model.kind === 'tabular' && task.kind === 'ranking') {
    throw new Error('mlp_tabular cannot rank link candidates');
  }
  const cfg = model.model.cfg;
  const store = model.model.store;
  const opt = makeAdam(settings.learningRate);
  const history: EpochRecord[] = [];
  let bestEpoch = -1;
  let bestValMetric = NaN;
  let bestSnap: Map<string, Float64Array> | null = null;
  let sinceBest = 0;
  for (let epoch = 0; epoch < settings.epochs; epoch++) {
    let lossSum = 0;
    for (const pb of trainBatches) {
      const ctx = makeCtx(model.model);
      const dropoutRng =
        cfg.dropout > 0
          ? new Rng(settings.seed).deriveStr(`dropout/${epoch}/${pb.batch.batchIndex}`)
          : null;
      const o = batchOutputs(ctx, model, pb, task, dropoutRng);
      const loss = batchLoss(ctx, o, pb.batch.seeds, task);
      const value = loss.data[0]!;
      if (!Number.isFinite(value)) {
        throw new Error(`non-finite loss at epoch ${epoch} in batch ${pb.batch.batchIndex}`);
      }
      ctx.tape.backward(loss);
      adamStep(opt, ctx.bound);
      lossSum += value;
    }
    const trainLoss = lossSum / Math.max(trainBatches.length, 1);
    const valMetric = evaluateSplit(model, valBatches, task);
    history.push({ epoch, trainLoss, valMetric });
    if (log !== null) {
      log(
        `epoch ${epoch}: loss ${trainLoss.toFixed(6)} ` +
          `val ${task.metric} ${valMetric.toFixed(6)}`,
      );
    }
    if (bestSnap === null || betterThan(task.metric, valMetric, bestValMetric)) {
      bestEpoch = epoch;
      bestValMetric = valMetric;
      bestSnap = snapshot(store);
      sinceBest = 0;
    } else {
      sinceBest += 1;
      if (sinceBest >= settings.patience) break;
    }
  }
  if (bestSnap !== null) restore(store, bestSnap);
  return { history, bestEpoch, bestValMetric };
}

/** Everything a training run needs, assembled from loaded batches. */
export interface Pipeline {
  model: AnyModel;
  task: TaskInfo;
  plan: LabelPlan;
  train: PreparedBatch[];
  val: PreparedBatch[];
  test: PreparedBatch[];
}

export function buildPipeline(
  cfg: ModelConfig,
  splits: SplitBatches,
  metric: Metric,
  seed: number,
  featureTable: Column[] | null = null,
): Pipeline {
  const task = deriveTask(metric, splits);
  const plan = labelPlanFor(cfg, task);
  if (cfg.architecture === 'mlp_tabular') {
    if (featureTable === null) {
      throw new Error('mlp_tabular requires a compiled feature table');
    }
    const model = makeTabular(cfg, featureTable, task.labelColumn, seed);
    return {
      model: { kind: 'tabular', model },
      task,
      plan,
      train: prepareTabularBatches(splits.train),
      val: prepareTabularBatches(splits.val),
      test: prepareTabularBatches(splits.test),
    };
  }
  const layout = layoutOver([...splits.train, ...splits.val, ...splits.test], plan);
  const model = makeModel(cfg, plan, seed);
  return {
    model: { kind: 'graph', model },
    task,
    plan,
    train: prepareGraphBatches(splits.train, layout, plan),
    val: prepareGraphBatches(splits.val, layout, plan),
    test: prepareGraphBatches(splits.test, layout, plan),
  };
}
