// ---------------------------------------------------------------------------
// Evaluation metrics computed exactly from rank statistics.
//
// These mirror the evaluation harness that consumes the prediction files,
// so the value used for early stopping is the value reported downstream.
// AUC uses the Mann-Whitney identity with average ranks (ties earn half
// credit); MRR resolves ties pessimistically, ranking the positive below
// every negative it ties with.
// ---------------------------------------------------------------------------

export function accuracy(predClass: ArrayLike<number>, truth: ArrayLike<number>): number {
  if (predClass.length !== truth.length || predClass.length === 0) {
    throw new Error('accuracy wants two equal non-empty lists');
  }
  let hits = 0;
  for (let i = 0; i < predClass.length; i++) {
    if (predClass[i] === truth[i]) hits++;
  }
  return hits / predClass.length;
}

export function rmse(pred: ArrayLike<number>, truth: ArrayLike<number>): number {
  if (pred.length !== truth.length || pred.length === 0) {
    throw new Error('rmse wants two equal non-empty lists');
  }
  let total = 0;
  for (let i = 0; i < pred.length; i++) {
    const d = pred[i]! - truth[i]!;
    total += d * d;
  }
  return Math.sqrt(total / pred.length);
}

/** 1-based ranks with ties sharing the average of their positions. */
function averageRanks(scores: ArrayLike<number>): Float64Array {
  const n = scores.length;
  const order = Array.from({ length: n }, (_, i) => i);
  order.sort((a, b) => scores[a]! - scores[b]!);
  const ranks = new Float64Array(n);
  let start = 0;
  while (start < n) {
    let end = start + 1;
    while (end < n && scores[order[end]!]! === scores[order[start]!]!) end++;
    const avg = (start + end - 1) / 2 + 1;
    for (let i = start; i < end; i++) ranks[order[i]!] = avg;
    start = end;
  }
  return ranks;
}

/** Area under the ROC curve, P(pos > neg) + 0.5 P(tie), exact. */
export function auc(scores: ArrayLike<number>, labels: ArrayLike<number>): number {
  if (scores.length !== labels.length) throw new Error('auc: length mismatch');
  let nPos = 0;
  let nNeg = 0;
  for (let i = 0; i < labels.length; i++) {
    if (labels[i] === 1) nPos++;
    else if (labels[i] === 0) nNeg++;
    else throw new Error('labels must be 0 or 1');
  }
  if (nPos === 0 || nNeg === 0) throw new Error('auc needs both classes present');
  const ranks = averageRanks(scores);
  let posRankSum = 0;
  for (let i = 0; i < labels.length; i++) {
    if (labels[i] === 1) posRankSum += ranks[i]!;
  }
  return (posRankSum - (nPos * (nPos + 1)) / 2) / (nPos * nNeg);
}

/**
 * Mean reciprocal rank over queries of (score, is_positive) candidates.
 * Each query holds exactly one positive; its rank is 1 plus the number of
 * negatives scoring at least as high.
 */
export function mrr(rankedCandidates: Array<Array<[number, number]>>): number {
  if (rankedCandidates.length === 0) throw new Error('mrr of empty input');
  let total = 0;
  for (const candidates of rankedCandidates) {
    const positives = candidates.filter(([, flag]) => flag === 1);
    if (positives.length !== 1) {
      throw new Error(`query has ${positives.length} positives, wants 1`);
    }
    const p = positives[0]![0];
    let rank = 1;
    for (const [s, flag] of candidates) {
      if (flag !== 1 && s >= p) rank++;
    }
    total += 1 / rank;
  }
  return total / rankedCandidates.length;
}
