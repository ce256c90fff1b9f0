// ---------------------------------------------------------------------------
// Prediction export.
//
// One JSON object per line, one line per seed. Attribute tasks write
// {"seed_id", "score"}: a probability for binary tasks, the raw value for
// regression, and the predicted class value (rounded downstream) for
// multiclass. Ranking tasks write {"seed_id", "scores"} where scores[0]
// belongs to the true target and scores[1..] to the seed's negatives in
// their stored order, which is the order the evaluation command pairs
// them back up in.
// ---------------------------------------------------------------------------

import { writeFileSync } from 'node:fs';

import { AnyModel, PreparedBatch, Prediction, TaskInfo, predictBatch } from './train.js';

export function predictionLine(pr: Prediction): string {
  if (pr.scores !== null) {
    return JSON.stringify({ seed_id: pr.seedId, scores: pr.scores });
  }
  return JSON.stringify({ seed_id: pr.seedId, score: pr.score });
}

/** Predict every seed of the prepared batches and write the JSONL file. */
export function writePredictions(
  path: string,
  model: AnyModel,
  prepared: PreparedBatch[],
  task: TaskInfo,
): number {
  const lines: string[] = [];
  for (const pb of prepared) {
    for (const pr of predictBatch(model, pb, task)) lines.push(predictionLine(pr));
  }
  writeFileSync(path, lines.join('\n') + (lines.length > 0 ? '\n' : ''));
  return lines.length;
}
