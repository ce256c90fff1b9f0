import { describe, expect, it } from 'vitest';

import { Batch, loadExport } from '../src/batch.js';
import { SeedView, buildSeedViews, referencedType } from '../src/view.js';
import { fixturePath, floatCol, makeBatch, rankingBatch, seed, tenNodeBatch } from './helpers.js';

function viewChecks(batch: Batch, views: SeedView[]): void {
  expect(views.length).toBe(batch.seeds.length);
  const claimed = new Map<string, Set<number>>();
  for (const view of views) {
    expect(view.seedPos).toBe(0);
    expect(view.nodes.get(view.seedType)![0]).toBe(batch.seedLocal[view.seedOrdinal]!);
    for (const ve of view.edges) {
      const be = batch.edges.get(ve.key)!;
      const srcNodes = view.nodes.get(ve.triple[0])!;
      const dstNodes = view.nodes.get(ve.triple[2])!;
      expect(ve.src.length).toBe(ve.rows.length);
      for (let i = 0; i < ve.rows.length; i++) {
        const row = ve.rows[i]!;
        expect(be.seed[row]).toBe(view.seedOrdinal);
        expect(srcNodes[ve.src[i]!]).toBe(be.src[row]!);
        expect(dstNodes[ve.dst[i]!]).toBe(be.dst[row]!);
        let set = claimed.get(ve.key);
        if (set === undefined) {
          set = new Set();
          claimed.set(ve.key, set);
        }
        expect(set.has(row)).toBe(false);
        set.add(row);
      }
    }
  }
  // every batch edge row belongs to exactly one view
  for (const [key, be] of batch.edges) {
    expect(claimed.get(key)?.size ?? 0).toBe(be.src.length);
  }
}

describe('buildSeedViews on a synthetic batch', () => {
  it('puts the seed first and partitions edge rows by owning seed', () => {
    const batch = tenNodeBatch();
    const views = buildSeedViews(batch);
    viewChecks(batch, views);
    // the empty relation contributes to no view
    for (const view of views) {
      expect(view.edges.some((e) => e.key === 'b/b.self/b')).toBe(false);
    }
    expect(views[0]!.candidateType).toBeNull();
    expect(views[0]!.candidatePos).toBeNull();
  });

  it('deduplicates nodes reached over several relations', () => {
    const batch = tenNodeBatch();
    const views = buildSeedViews(batch);
    const a0 = views[0]!.nodes.get('a')!;
    expect([...a0]).toEqual([0, 1, 2, 3]);
    expect([...views[0]!.nodes.get('b')!]).toEqual([0, 1, 2]);
    const a1 = views[1]!.nodes.get('a')!;
    expect([...a1]).toEqual([4, 5]);
    expect([...views[1]!.nodes.get('b')!]).toEqual([2, 3, 0]);
  });
});

describe('candidate resolution', () => {
  it('appends in-batch candidates to the view and marks missing ones -1', () => {
    const batch = rankingBatch();
    const views = buildSeedViews(batch);
    viewChecks(batch, views);
    const v0 = views[0]!;
    expect(v0.candidateType).toBe('b');
    expect([...v0.candidatePos!]).toEqual([1, 2, 3]);
    expect([...v0.nodes.get('b')!]).toEqual([0, 1, 2, 3]);
    const v1 = views[1]!;
    // negative 99 exists nowhere in the batch
    expect([...v1.candidatePos!]).toEqual([1, 2, -1]);
    expect([...v1.nodes.get('b')!]).toEqual([2, 3, 0]);
  });

  it('resolves candidates on a sampled link ranking batch', () => {
    for (const split of ['train', 'val', 'test']) {
      for (const batch of loadExport(fixturePath('gadget', 'rank', split))) {
        const views = buildSeedViews(batch);
        viewChecks(batch, views);
        const merchants = batch.globalIndex.get('merchant')!;
        for (const view of views) {
          const s = batch.seeds[view.seedOrdinal]!;
          expect(view.candidateType).toBe('merchant');
          const pos = view.candidatePos!;
          expect(pos.length).toBe(1 + s.negatives!.length);
          // the true target was expanded from the seed, so it is in the batch
          expect(pos[0]!).toBeGreaterThanOrEqual(0);
          const nodes = view.nodes.get('merchant')!;
          const globals = [s.label as number, ...s.negatives!];
          for (let i = 0; i < globals.length; i++) {
            const local = merchants.indexOf(globals[i]!);
            if (pos[i]! === -1) {
              expect(local).toBe(-1);
            } else {
              expect(nodes[pos[i]!]).toBe(local);
            }
          }
        }
      }
    }
  });
});

describe('referencedType', () => {
  it('accepts the qualified relation name', () => {
    const batch = rankingBatch();
    expect(referencedType(batch, 'a', 'link')).toBe('b');
    expect(referencedType(batch, 'a', 'a.link')).toBe('b');
  });

  it('accepts a bare relation name', () => {
    const batch = makeBatch({
      seeds: [seed({ seedId: 'a:1', nodeType: 'a', nodeIndex: 1 })],
      nodes: {
        a: { globalIndex: [1], features: [floatCol('f', [0])] },
        b: { globalIndex: [2], features: [] },
      },
      edges: [{ triple: ['a', 'link', 'b'], src: [0], dst: [0], seed: [0] }],
    });
    expect(referencedType(batch, 'a', 'link')).toBe('b');
  });

  it('throws when no relation matches', () => {
    const batch = rankingBatch();
    expect(() => referencedType(batch, 'a', 'nope')).toThrow(/no edge type \(a, nope/);
    expect(() => referencedType(batch, 'b', 'link')).toThrow(/cannot rank/);
  });
});
