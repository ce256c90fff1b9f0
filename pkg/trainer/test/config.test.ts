import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { describe, expect, it } from 'vitest';

import {
  loadTrainerConfig,
  modelConfigFrom,
  trainSettingsFrom,
  trainerConfigFrom,
} from '../src/config.js';

function model(over: Record<string, unknown> = {}): Record<string, unknown> {
  return { architecture: 'rgcn', layers: 2, hidden_dim: 8, ...over };
}

describe('model block', () => {
  it('fills documented defaults', () => {
    const cfg = modelConfigFrom(model());
    expect(cfg.architecture).toBe('rgcn');
    expect(cfg.layers).toBe(2);
    expect(cfg.hiddenDim).toBe(8);
    expect(cfg.heads).toBeNull();
    expect(cfg.dropout).toBe(0);
    expect(cfg.pnaAggregators).toEqual(['mean', 'min', 'max']);
    expect(cfg.useLabelFeature).toBe(true);
    expect(cfg.labelsOnly).toBe(false);
    expect(cfg.ncnMetapaths).toBeNull();
  });

  it('parses a fully specified block', () => {
    const cfg = modelConfigFrom({
      architecture: 'hgt',
      layers: 3,
      hidden_dim: 12,
      heads: 4,
      dropout: 0.25,
      use_label_feature: false,
      labels_only: true,
    });
    expect(cfg.heads).toBe(4);
    expect(cfg.dropout).toBe(0.25);
    expect(cfg.useLabelFeature).toBe(false);
    expect(cfg.labelsOnly).toBe(true);
  });

  it('dedupes aggregators in order', () => {
    const cfg = modelConfigFrom(
      model({ architecture: 'rpna', pna_aggregators: ['max', 'mean', 'max'] }),
    );
    expect(cfg.pnaAggregators).toEqual(['max', 'mean']);
  });

  it('accepts metapaths ending at a shared type', () => {
    const cfg = modelConfigFrom(
      model({
        architecture: 'ncn_rgcn',
        ncn_metapaths: [['account', 'txn', 'merchant'], ['merchant']],
      }),
    );
    expect(cfg.ncnMetapaths).toEqual([['account', 'txn', 'merchant'], ['merchant']]);
  });

  const rejected: Array<[string, Record<string, unknown>, RegExp]> = [
    ['unknown architecture', model({ architecture: 'gcn' }), /unknown architecture "gcn"/],
    ['unknown key', model({ depth: 3 }), /unknown model key "depth"/],
    ['missing layers', { architecture: 'rgcn', hidden_dim: 8 }, /missing layers/],
    ['fractional layers', model({ layers: 1.5 }), /layers must be an integer/],
    ['zero layers', model({ layers: 0 }), /layers must be at least 1/],
    ['zero hidden_dim', model({ hidden_dim: 0 }), /hidden_dim must be at least 1/],
    ['rgat without heads', model({ architecture: 'rgat' }), /rgat requires heads/],
    ['hgt without heads', model({ architecture: 'hgt' }), /hgt requires heads/],
    ['heads on rgcn', model({ heads: 2 }), /heads only applies to rgat and hgt/],
    [
      'heads not dividing hidden_dim',
      model({ architecture: 'rgat', heads: 3 }),
      /divide hidden_dim/,
    ],
    ['dropout of 1', model({ dropout: 1 }), /dropout must lie in \[0, 1\)/],
    ['negative dropout', model({ dropout: -0.1 }), /dropout must lie/],
    [
      'aggregators on rgcn',
      model({ pna_aggregators: ['mean'] }),
      /pna_aggregators only applies to rpna/,
    ],
    [
      'unknown aggregator',
      model({ architecture: 'rpna', pna_aggregators: ['median'] }),
      /unknown aggregator "median"/,
    ],
    [
      'empty aggregator list',
      model({ architecture: 'rpna', pna_aggregators: [] }),
      /non-empty/,
    ],
    [
      'metapaths on rgcn',
      model({ ncn_metapaths: [['a'], ['a']] }),
      /ncn_metapaths only applies to ncn_rgcn/,
    ],
    [
      'metapaths not a pair',
      model({ architecture: 'ncn_rgcn', ncn_metapaths: [['a']] }),
      /pair of node-type lists/,
    ],
    [
      'metapath with empty walk',
      model({ architecture: 'ncn_rgcn', ncn_metapaths: [[], ['a']] }),
      /at least the endpoint/,
    ],
    [
      'metapaths ending at different types',
      model({ architecture: 'ncn_rgcn', ncn_metapaths: [['a', 'b'], ['c']] }),
      /end at the same node type/,
    ],
    ['non-mapping block', 7 as unknown as Record<string, unknown>, /must be a mapping/],
  ];

  for (const [label, raw, want] of rejected) {
    it(`rejects ${label}`, () => {
      expect(() => modelConfigFrom(raw)).toThrow(want);
    });
  }
});

describe('train block', () => {
  it('fills defaults when absent', () => {
    expect(trainSettingsFrom(undefined)).toEqual({
      epochs: 50,
      learningRate: 0.01,
      patience: 10,
      seed: 0,
    });
  });

  it('parses explicit settings', () => {
    expect(
      trainSettingsFrom({ epochs: 0, learning_rate: 0.5, patience: 3, seed: 9 }),
    ).toEqual({ epochs: 0, learningRate: 0.5, patience: 3, seed: 9 });
  });

  it('rejects bad settings', () => {
    expect(() => trainSettingsFrom({ epochs: -1 })).toThrow(/non-negative/);
    expect(() => trainSettingsFrom({ learning_rate: 0 })).toThrow(/positive/);
    expect(() => trainSettingsFrom({ patience: 0 })).toThrow(/at least 1/);
    expect(() => trainSettingsFrom({ momentum: 0.9 })).toThrow(/unknown train key/);
  });
});

describe('file loading', () => {
  it('loads YAML and JSON files identically', () => {
    const dir = mkdtempSync(join(tmpdir(), 'cfg-'));
    const yamlPath = join(dir, 'model.yaml');
    writeFileSync(
      yamlPath,
      [
        'model:',
        '  architecture: rgat',
        '  layers: 2',
        '  hidden_dim: 8',
        '  heads: 2',
        'train:',
        '  epochs: 5',
        '  learning_rate: 0.1',
      ].join('\n'),
    );
    const jsonPath = join(dir, 'model.json');
    writeFileSync(
      jsonPath,
      JSON.stringify({
        model: { architecture: 'rgat', layers: 2, hidden_dim: 8, heads: 2 },
        train: { epochs: 5, learning_rate: 0.1 },
      }),
    );
    const fromYaml = loadTrainerConfig(yamlPath);
    const fromJson = loadTrainerConfig(jsonPath);
    expect(fromYaml).toEqual(fromJson);
    expect(fromYaml.model.heads).toBe(2);
    expect(fromYaml.train.epochs).toBe(5);
  });

  it('rejects unknown top-level keys and a missing model block', () => {
    expect(() => trainerConfigFrom({ model: model(), extra: 1 })).toThrow(
      /unknown key "extra"/,
    );
    expect(() => trainerConfigFrom({ train: {} })).toThrow(/missing model block/);
    expect(() => trainerConfigFrom(null)).toThrow(/config must be a mapping/);
  });
});
