// ---------------------------------------------------------------------------
// Turning batch columns into dense model inputs.
//
// Each node or edge feature column encodes to a fixed number of matrix
// columns decided by its dtype: float and int become (value, null flag)
// pairs with nulls contributing value 0, categoricals become a one-hot row
// over the stored dictionary with nulls all-zero, vectors pass through
// width dim, and timestamps, text, and key columns carry no signal a dense
// head can use directly, so they encode to width 0. Dictionaries and dims
// come from the full-table columns, so the derived layout is identical
// across batches of one export.
//
// The task's label column is a stored feature like any other; the sampler
// masks each seed's own cell and records it in the batch's excluded list.
// Whether the label column is encoded at all is a model choice: including
// it turns message passing into label propagation from already-resolved
// neighbors, excluding it is the remove-label ablation, and labels_only
// additionally zeroes every non-label column so only labels and graph
// structure remain.
// ---------------------------------------------------------------------------

import { Batch, BatchEdges } from './batch.js';
import { Column } from './rdbc.js';

export interface ColumnEncoding {
  name: string;
  dtype: Column['dtype'];
  /** Matrix columns this feature occupies. */
  width: number;
  dictionary: string[] | null;
  dim: number | null;
}

export interface TypeLayout {
  columns: ColumnEncoding[];
  width: number;
}

export interface FeatureLayout {
  nodes: Map<string, TypeLayout>;
  edges: Map<string, TypeLayout>;
}

export interface LabelPlan {
  /** Node type carrying the task's label column, or null for no task. */
  targetType: string | null;
  /** The label column's name on that type. */
  labelColumn: string | null;
  useLabelFeature: boolean;
  labelsOnly: boolean;
}

export const NO_LABEL: LabelPlan = {
  targetType: null,
  labelColumn: null,
  useLabelFeature: false,
  labelsOnly: false,
};

function encodingOf(name: string, col: Column): ColumnEncoding {
  let width = 0;
  if (col.dtype === 'float' || col.dtype === 'int') width = 2;
  else if (col.dtype === 'categorical') width = (col.dictionary ?? []).length;
  else if (col.dtype === 'vector') width = col.dim ?? 0;
  return {
    name,
    dtype: col.dtype,
    width,
    dictionary: col.dictionary,
    dim: col.dim,
  };
}

/** Layout over a bag of named columns, skipping what the caller excludes. */
export function tableLayout(
  features: Map<string, Column>,
  skip: (name: string) => boolean,
): TypeLayout {
  const columns: ColumnEncoding[] = [];
  for (const name of [...features.keys()].sort()) {
    if (skip(name)) continue;
    const enc = encodingOf(name, features.get(name)!);
    if (enc.width > 0) columns.push(enc);
  }
  let width = 0;
  for (const c of columns) width += c.width;
  return { columns, width };
}

/**
 * Derive the feature layout shared by every batch of an export.
 *
 * The label column of the plan's target type is dropped entirely when
 * use_label_feature is off; labels_only does not change the layout, it
 * zeroes values at matrix-fill time so shapes stay comparable.
 */
export function deriveLayout(batch: Batch, plan: LabelPlan): FeatureLayout {
  const nodes = new Map<string, TypeLayout>();
  for (const [t, features] of batch.nodeFeatures) {
    const dropLabel =
      !plan.useLabelFeature && t === plan.targetType
        ? plan.labelColumn
        : null;
    nodes.set(t, tableLayout(features, (name) => name === dropLabel));
  }
  const edges = new Map<string, TypeLayout>();
  for (const [key, be] of batch.edges) {
    edges.set(key, tableLayout(be.features, () => false));
  }
  return { nodes, edges };
}

function fillColumn(
  out: Float64Array,
  stride: number,
  offset: number,
  col: Column,
  enc: ColumnEncoding,
  n: number,
): void {
  if (enc.dtype === 'float' || enc.dtype === 'int') {
    for (let i = 0; i < n; i++) {
      const isNull = col.nulls[i] === 1;
      out[i * stride + offset] = isNull ? 0 : col.numbers![i]!;
      out[i * stride + offset + 1] = isNull ? 1 : 0;
    }
  } else if (enc.dtype === 'categorical') {
    for (let i = 0; i < n; i++) {
      const code = col.numbers![i]!;
      if (col.nulls[i] === 0 && code >= 0) out[i * stride + offset + code] = 1;
    }
  } else {
    const dim = enc.dim ?? 0;
    for (let i = 0; i < n; i++) {
      if (col.nulls[i] === 1) continue;
      for (let d = 0; d < dim; d++) {
        out[i * stride + offset + d] = col.numbers![i * dim + d]!;
      }
    }
  }
}

function fillMatrix(
  features: Map<string, Column>,
  layout: TypeLayout,
  n: number,
  zeroExceptLabel: string | null,
): Float64Array {
  const out = new Float64Array(n * layout.width);
  let offset = 0;
  for (const enc of layout.columns) {
    const keep = zeroExceptLabel === null || enc.name === zeroExceptLabel;
    if (keep) fillColumn(out, layout.width, offset, features.get(enc.name)!, enc, n);
    offset += enc.width;
  }
  return out;
}

/** Dense matrix over a bag of named columns under a tableLayout. */
export function tableMatrix(
  features: Map<string, Column>,
  layout: TypeLayout,
  n: number,
): Float64Array {
  return fillMatrix(features, layout, n, null);
}

/** Dense feature matrix (local nodes × layout width) for one node type. */
export function nodeMatrix(
  batch: Batch,
  nodeType: string,
  layout: FeatureLayout,
  plan: LabelPlan,
): Float64Array {
  const tl = layout.nodes.get(nodeType);
  const features = batch.nodeFeatures.get(nodeType);
  if (tl === undefined || features === undefined) {
    throw new Error(`batch has no node type ${JSON.stringify(nodeType)}`);
  }
  const n = batch.globalIndex.get(nodeType)!.length;
  const zeroExceptLabel = plan.labelsOnly
    ? nodeType === plan.targetType && plan.useLabelFeature
      ? plan.labelColumn
      : ''
    : null;
  return fillMatrix(features, tl, n, zeroExceptLabel);
}

/** Dense feature matrix (edges × layout width) for one edge type. */
export function edgeMatrix(
  be: BatchEdges,
  layout: FeatureLayout,
  key: string,
  labelsOnly: boolean,
): Float64Array {
  const tl = layout.edges.get(key);
  if (tl === undefined) throw new Error(`no edge layout for ${JSON.stringify(key)}`);
  return fillMatrix(be.features, tl, be.src.length, labelsOnly ? '' : null);
}

/**
 * Verify the sampler masked each seed's own label cell before labels are
 * exposed as features. A seed of the target type must appear in the
 * batch's excluded list for the label column and the stored cell must be
 * null; anything else means the answer would flow into the model, so this
 * throws rather than train on it.
 */
export function checkLabelMasked(batch: Batch, plan: LabelPlan): void {
  if (!plan.useLabelFeature || plan.targetType === null || plan.labelColumn === null) {
    return;
  }
  const masked = new Set(
    batch.excluded
      .filter(([t, , c]) => t === plan.targetType && c === plan.labelColumn)
      .map(([, i]) => i),
  );
  const col = batch.nodeFeatures.get(plan.targetType)?.get(plan.labelColumn);
  for (let b = 0; b < batch.seeds.length; b++) {
    const seed = batch.seeds[b]!;
    if (seed.nodeType !== plan.targetType || seed.labelRef !== plan.labelColumn) {
      continue;
    }
    const local = batch.seedLocal[b]!;
    if (!masked.has(local) || col === undefined || col.nulls[local] !== 1) {
      throw new Error(
        `seed ${seed.seedId}: label cell ${plan.targetType}[${local}].` +
          `${plan.labelColumn} is not masked`,
      );
    }
  }
}
