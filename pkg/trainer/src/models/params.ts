// ---------------------------------------------------------------------------
// Name-addressed model parameters.
//
// Parameters are created lazily the first time a forward pass asks for
// them, because their shapes depend on the feature layout (input widths per
// node type, edge feature widths per relation). Initialization is keyed by
// the parameter's name and the model seed, never by creation order, so two
// runs that touch parameters in different orders still start from
// identical weights. Names ending in "/b" are biases and start at zero;
// everything else is Xavier-uniform.
// ---------------------------------------------------------------------------

import { Rng, xavier } from '../random.js';
import { Tape, Val } from '../tape.js';

export interface ParamEntry {
  data: Float64Array;
  rows: number;
  cols: number;
}

export interface ParamStore {
  seed: number;
  entries: Map<string, ParamEntry>;
}

export function makeParams(seed: number): ParamStore {
  return { seed, entries: new Map() };
}

export function param(store: ParamStore, name: string, rows: number, cols: number): ParamEntry {
  let entry = store.entries.get(name);
  if (entry === undefined) {
    const data = name.endsWith('/b')
      ? new Float64Array(rows * cols)
      : xavier(new Rng(store.seed).deriveStr(name), rows, cols);
    entry = { data, rows, cols };
    store.entries.set(name, entry);
  } else if (entry.rows !== rows || entry.cols !== cols) {
    throw new Error(
      `parameter ${name}: wanted ${rows}x${cols}, stored ${entry.rows}x${entry.cols}`,
    );
  }
  return entry;
}

/** Leaf Vals per parameter name, shared across one optimization step. */
export type Bound = Map<string, Val>;

/**
 * Fetch a parameter as a tape leaf, creating both on first use. All seed
 * views of one step share the leaf, so gradients accumulate across seeds.
 */
export function bindParam(
  tape: Tape,
  store: ParamStore,
  bound: Bound,
  name: string,
  rows: number,
  cols: number,
): Val {
  let val = bound.get(name);
  if (val === undefined) {
    const entry = param(store, name, rows, cols);
    val = tape.leaf(entry.data, entry.rows, entry.cols);
    bound.set(name, val);
  }
  return val;
}

/** Total number of scalar parameters currently materialized. */
export function paramCount(store: ParamStore): number {
  let n = 0;
  for (const e of store.entries.values()) n += e.data.length;
  return n;
}
