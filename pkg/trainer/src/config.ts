// ---------------------------------------------------------------------------
// Model and training configuration.
//
// Configs are YAML or JSON files with a `model` block describing the
// architecture and an optional `train` block with optimizer settings. Every
// field is validated up front so a typo fails before any batch is read.
// ---------------------------------------------------------------------------

import { readFileSync } from 'node:fs';

import { parse as parseYaml } from 'yaml';

export const ARCHITECTURES = [
  'rgcn',
  'rgat',
  'hgt',
  'rpna',
  'ncn_rgcn',
  'mlp_tabular',
] as const;

export type Architecture = (typeof ARCHITECTURES)[number];

export const PNA_AGGREGATORS = ['mean', 'min', 'max'] as const;

export type PnaAggregator = (typeof PNA_AGGREGATORS)[number];

/** A pair of node-type walks; both must end at the same node type. */
export type Metapaths = [string[], string[]];

export interface ModelConfig {
  architecture: Architecture;
  layers: number;
  hiddenDim: number;
  /** Attention head count; required exactly for rgat and hgt. */
  heads: number | null;
  dropout: number;
  /** Neighbor aggregators concatenated before projection (rpna only). */
  pnaAggregators: PnaAggregator[];
  /** Feed the task's label column to the model as an ordinary feature. */
  useLabelFeature: boolean;
  /** Zero every non-label feature, leaving structure and labels only. */
  labelsOnly: boolean;
  /** Common-neighbor walks for ncn_rgcn; empty falls back to the base. */
  ncnMetapaths: Metapaths | null;
}

export interface TrainSettings {
  epochs: number;
  learningRate: number;
  patience: number;
  seed: number;
}

export interface TrainerConfig {
  model: ModelConfig;
  train: TrainSettings;
}

function fail(msg: string): never {
  throw new Error(`config: ${msg}`);
}

function intField(raw: Record<string, unknown>, key: string, fallback: number | null): number {
  const v = raw[key];
  if (v === undefined || v === null) {
    if (fallback === null) fail(`missing ${key}`);
    return fallback;
  }
  if (typeof v !== 'number' || !Number.isInteger(v)) fail(`${key} must be an integer`);
  return v;
}

function numField(raw: Record<string, unknown>, key: string, fallback: number): number {
  const v = raw[key];
  if (v === undefined || v === null) return fallback;
  if (typeof v !== 'number' || !Number.isFinite(v)) fail(`${key} must be a number`);
  return v;
}

function boolField(raw: Record<string, unknown>, key: string, fallback: boolean): boolean {
  const v = raw[key];
  if (v === undefined || v === null) return fallback;
  if (typeof v !== 'boolean') fail(`${key} must be a boolean`);
  return v;
}

function metapathsField(raw: unknown): Metapaths | null {
  if (raw === undefined || raw === null) return null;
  if (!Array.isArray(raw) || raw.length !== 2) {
    fail('ncn_metapaths must be a pair of node-type lists');
  }
  const pair = raw.map((walk) => {
    if (!Array.isArray(walk) || walk.some((t) => typeof t !== 'string')) {
      fail('ncn_metapaths entries must be lists of node type names');
    }
    return walk as string[];
  }) as Metapaths;
  const [a, b] = pair;
  if (a.length === 0 || b.length === 0) {
    fail('ncn_metapaths walks must each name at least the endpoint type');
  }
  if (a[a.length - 1] !== b[b.length - 1]) {
    fail('ncn_metapaths walks must end at the same node type');
  }
  return pair;
}

export function modelConfigFrom(raw: unknown): ModelConfig {
  if (typeof raw !== 'object' || raw === null) fail('model block must be a mapping');
  const r = raw as Record<string, unknown>;
  const known = new Set([
    'architecture',
    'layers',
    'hidden_dim',
    'heads',
    'dropout',
    'pna_aggregators',
    'use_label_feature',
    'labels_only',
    'ncn_metapaths',
  ]);
  for (const key of Object.keys(r)) {
    if (!known.has(key)) fail(`unknown model key ${JSON.stringify(key)}`);
  }
  const architecture = r.architecture as Architecture;
  if (!ARCHITECTURES.includes(architecture)) {
    fail(`unknown architecture ${JSON.stringify(r.architecture)}`);
  }
  const layers = intField(r, 'layers', null);
  if (layers < 1) fail('layers must be at least 1');
  const hiddenDim = intField(r, 'hidden_dim', null);
  if (hiddenDim < 1) fail('hidden_dim must be at least 1');
  const needsHeads = architecture === 'rgat' || architecture === 'hgt';
  const heads = r.heads === undefined || r.heads === null ? null : intField(r, 'heads', null);
  if (needsHeads && heads === null) fail(`${architecture} requires heads`);
  if (!needsHeads && heads !== null) fail(`heads only applies to rgat and hgt`);
  if (heads !== null && (heads < 1 || hiddenDim % heads !== 0)) {
    fail('heads must be positive and divide hidden_dim');
  }
  const dropout = numField(r, 'dropout', 0);
  if (dropout < 0 || dropout >= 1) fail('dropout must lie in [0, 1)');
  let pnaAggregators: PnaAggregator[] = ['mean', 'min', 'max'];
  if (r.pna_aggregators !== undefined && r.pna_aggregators !== null) {
    if (architecture !== 'rpna') fail('pna_aggregators only applies to rpna');
    if (!Array.isArray(r.pna_aggregators) || r.pna_aggregators.length === 0) {
      fail('pna_aggregators must be a non-empty list');
    }
    for (const a of r.pna_aggregators) {
      if (!PNA_AGGREGATORS.includes(a)) fail(`unknown aggregator ${JSON.stringify(a)}`);
    }
    pnaAggregators = [...new Set(r.pna_aggregators as PnaAggregator[])];
  }
  const ncnMetapaths = metapathsField(r.ncn_metapaths);
  if (ncnMetapaths !== null && architecture !== 'ncn_rgcn') {
    fail('ncn_metapaths only applies to ncn_rgcn');
  }
  return {
    architecture,
    layers,
    hiddenDim,
    heads,
    dropout,
    pnaAggregators,
    useLabelFeature: boolField(r, 'use_label_feature', true),
    labelsOnly: boolField(r, 'labels_only', false),
    ncnMetapaths,
  };
}

export function trainSettingsFrom(raw: unknown): TrainSettings {
  const r = (raw ?? {}) as Record<string, unknown>;
  if (typeof r !== 'object') fail('train block must be a mapping');
  const known = new Set(['epochs', 'learning_rate', 'patience', 'seed']);
  for (const key of Object.keys(r)) {
    if (!known.has(key)) fail(`unknown train key ${JSON.stringify(key)}`);
  }
  const epochs = intField(r, 'epochs', 50);
  if (epochs < 0) fail('epochs must be non-negative');
  const learningRate = numField(r, 'learning_rate', 0.01);
  if (learningRate <= 0) fail('learning_rate must be positive');
  const patience = intField(r, 'patience', 10);
  if (patience < 1) fail('patience must be at least 1');
  return { epochs, learningRate, patience, seed: intField(r, 'seed', 0) };
}

export function trainerConfigFrom(raw: unknown): TrainerConfig {
  if (typeof raw !== 'object' || raw === null) fail('config must be a mapping');
  const r = raw as Record<string, unknown>;
  for (const key of Object.keys(r)) {
    if (key !== 'model' && key !== 'train') fail(`unknown key ${JSON.stringify(key)}`);
  }
  if (r.model === undefined) fail('missing model block');
  return { model: modelConfigFrom(r.model), train: trainSettingsFrom(r.train) };
}

/** Parse a config file; YAML is a superset of JSON so one parser covers both. */
export function loadTrainerConfig(path: string): TrainerConfig {
  return trainerConfigFrom(parseYaml(readFileSync(path, 'utf-8')));
}
