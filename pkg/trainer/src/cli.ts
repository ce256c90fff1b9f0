// ---------------------------------------------------------------------------
// Command line entry point.
//
//   trainer train --data DIR --config FILE --metric NAME --out FILE
//                 [--split test] [--features FILE] [--history FILE]
//
// DIR is a sampling export root holding train/, val/, and test/
// subdirectories (each a manifest plus batch files). The model trains on
// train/, early-stops on val/, and writes predictions for the chosen
// split as JSON lines the evaluation command can score directly. The
// mlp_tabular architecture additionally needs --features, a binary column
// table of compiled per-row features for the target table.
// ---------------------------------------------------------------------------

import { readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';
import { parseArgs } from 'node:util';

import { loadExport } from './batch.js';
import { loadTrainerConfig } from './config.js';
import { writePredictions } from './predict.js';
import { Column, readTable } from './rdbc.js';
import {
  METRICS,
  Metric,
  PreparedBatch,
  SplitBatches,
  buildPipeline,
  evaluateSplit,
  trainModel,
} from './train.js';

const USAGE = `usage: trainer train --data DIR --config FILE --metric NAME --out FILE
                     [--split SPLIT] [--features FILE] [--history FILE]

  --data DIR       export root with train/, val/, and test/ subdirectories
  --config FILE    YAML or JSON model (and optional train) configuration
  --metric NAME    one of ${METRICS.join(', ')}; decides the task shape
  --out FILE       where to write the chosen split's predictions (JSONL)
  --split SPLIT    split to predict: train, val, or test (default test)
  --features FILE  compiled feature table, required for mlp_tabular
  --history FILE   optionally write per-epoch loss and metric as JSON
`;

function loadSplits(root: string): SplitBatches {
  return {
    train: loadExport(join(root, 'train')),
    val: loadExport(join(root, 'val')),
    test: loadExport(join(root, 'test')),
  };
}

export function runTrain(argv: string[], log: (line: string) => void): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      data: { type: 'string' },
      config: { type: 'string' },
      metric: { type: 'string' },
      out: { type: 'string' },
      split: { type: 'string', default: 'test' },
      features: { type: 'string' },
      history: { type: 'string' },
    },
  });
  for (const key of ['data', 'config', 'metric', 'out'] as const) {
    if (values[key] === undefined) {
      log(`missing --${key}`);
      log(USAGE);
      return 2;
    }
  }
  const metric = values.metric as Metric;
  if (!METRICS.includes(metric)) {
    log(`unknown metric ${JSON.stringify(values.metric)}; wanted ${METRICS.join(', ')}`);
    return 2;
  }
  const split = values.split!;
  if (split !== 'train' && split !== 'val' && split !== 'test') {
    log(`unknown split ${JSON.stringify(split)}`);
    return 2;
  }
  const config = loadTrainerConfig(values.config!);
  const splits = loadSplits(values.data!);
  let featureTable: Column[] | null = null;
  if (values.features !== undefined) {
    featureTable = readTable(readFileSync(values.features));
  }
  const pipeline = buildPipeline(
    config.model,
    splits,
    metric,
    config.train.seed,
    featureTable,
  );
  const result = trainModel(
    pipeline.model,
    pipeline.train,
    pipeline.val,
    pipeline.task,
    config.train,
    log,
  );
  const byName: Record<string, PreparedBatch[]> = {
    train: pipeline.train,
    val: pipeline.val,
    test: pipeline.test,
  };
  const predicted = byName[split]!;
  const written = writePredictions(values.out!, pipeline.model, predicted, pipeline.task);
  log(`wrote ${written} predictions to ${values.out}`);
  if (predicted.length > 0) {
    const value = evaluateSplit(pipeline.model, predicted, pipeline.task);
    log(`${split} ${metric} ${value.toFixed(6)} (best epoch ${result.bestEpoch})`);
  }
  if (values.history !== undefined) {
    writeFileSync(
      values.history,
      JSON.stringify(
        {
          metric,
          best_epoch: result.bestEpoch,
          best_val_metric: result.bestValMetric,
          epochs: result.history.map((h) => ({
            epoch: h.epoch,
            train_loss: h.trainLoss,
            val_metric: h.valMetric,
          })),
        },
        null,
        2,
      ) + '\n',
    );
  }
  return 0;
}

export function main(argv: string[], log: (line: string) => void = console.log): number {
  const command = argv[0];
  if (command === 'train') return runTrain(argv.slice(1), log);
  log(USAGE);
  return command === undefined || command === '--help' || command === 'help' ? 0 : 2;
}
