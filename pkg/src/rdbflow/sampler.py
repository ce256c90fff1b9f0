"""Leakage-free temporal neighborhood sampling and batch export.

Sampling walks the graph outward from seed nodes, hop by hop, following
incoming edges of each frontier node. A candidate edge (u -> n) is eligible
for a seed with cutoff c only when its effective timestamp, the later of
the edge timestamp and the source node timestamp with nulls ignored, does
not exceed c. Elements carrying no timestamp at all are always eligible.
This conjunction guarantees the exported invariant that every sampled edge
and every reached node with a timestamp lies at or before the cutoff of the
seed whose frontier reached it.

Per (frontier node, edge type, hop) at most ``fanout`` neighbors are kept,
picked uniformly at random from the eligible prefix or by recency. All
randomness flows from a single seed; batch b of an export owns the stream
``SeedSequence(rng_seed, spawn_key=(b,))`` so parallel and serial export
produce identical bytes.
"""

from __future__ import annotations

import base64
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np

from . import rdbc
from .columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    INT,
    NULL_TS,
    TEXT,
    VECTOR,
    ColumnData,
    ConfigError,
    DataError,
)
from .graph import EdgeType, HeteroGraph

logger = logging.getLogger(__name__)

NEIGHBOR_ORDERS = ("uniform_random", "most_recent")

#: Fanout value meaning "no cap".
FULL_FANOUT = -1


@dataclass(frozen=True)
class Seed:
    """One prediction instance anchored to a node at a cutoff time."""

    node_type: str
    node_index: int
    cutoff: Optional[int] = None
    seed_id: str = ""
    label: Any = None
    label_ref: Optional[str] = None
    negatives: Optional[tuple[int, ...]] = None


FanoutSpec = Union[int, dict[str, int]]


@dataclass(frozen=True)
class FanoutPlan:
    """Per-hop neighbor caps plus the selection policy.

    ``fanouts[h]`` is either an int applied to every edge type or a dict
    keyed by ``"src/rel/dst"``; missing keys default to 0 (do not expand).
    ``FULL_FANOUT`` lifts the cap.
    """

    fanouts: tuple[FanoutSpec, ...]
    neighbor_order: str = "uniform_random"
    replace: bool = False
    max_hops: int = 6

    def __post_init__(self) -> None:
        if self.neighbor_order not in NEIGHBOR_ORDERS:
            raise ConfigError(f"unknown neighbor_order {self.neighbor_order!r}")
        if len(self.fanouts) > self.max_hops:
            raise ConfigError(
                f"{len(self.fanouts)} hops exceed max_hops={self.max_hops}")

    def cap(self, hop: int, etype: EdgeType) -> int:
        f = self.fanouts[hop]
        if isinstance(f, dict):
            return int(f.get("/".join(etype), 0))
        return int(f)

    def to_dict(self) -> dict:
        return {"fanouts": [f if isinstance(f, int) else dict(f) for f in self.fanouts],
                "neighbor_order": self.neighbor_order, "replace": self.replace,
                "max_hops": self.max_hops}


@dataclass
class BatchEdges:
    """Sampled edges of one type, in batch-local node indices."""

    src: np.ndarray
    dst: np.ndarray
    seed: np.ndarray  # ordinal of the seed whose expansion sampled the edge
    hop: np.ndarray
    timestamps: Optional[np.ndarray]
    features: dict[str, ColumnData]

    def __len__(self) -> int:
        return len(self.src)


@dataclass
class SubgraphBatch:
    """A merged sampled subgraph for a list of seeds.

    Nodes of each type are deduplicated across seeds; ``node_index[t][i]``
    is the global index of local node i, in first-touch order with the seed
    nodes touched first. ``excluded`` lists masked feature cells as
    (node type, local index, column) triples; the masked cells hold the
    dtype sentinel in ``node_features``.
    """

    seeds: list[Seed]
    node_index: dict[str, np.ndarray]
    node_features: dict[str, dict[str, ColumnData]]
    node_timestamps: dict[str, Optional[np.ndarray]]
    edges: dict[EdgeType, BatchEdges]
    seed_local: np.ndarray
    excluded: list[tuple[str, int, str]] = field(default_factory=list)
    batch_index: int = 0

    def local_of(self, node_type: str, global_index: int) -> int:
        hits = np.flatnonzero(self.node_index[node_type] == global_index)
        if len(hits) == 0:
            raise DataError(f"node {node_type}:{global_index} not in batch")
        return int(hits[0])


class _Adjacency:
    """Per edge type CSR over destination nodes, eligibility-sorted.

    Incoming edges of each node are stored ordered by effective timestamp
    ascending (nulls first), ties by edge id descending. Eligible edges for
    a cutoff are then a prefix, and reading the prefix backwards yields the
    most-recent-first order with index-ascending tie breaks.
    """

    def __init__(self, g: HeteroGraph, etype: EdgeType) -> None:
        es = g.edges[etype]
        n_dst = g.nodes[etype[2]].count
        m = len(es)
        elig = np.full(m, NULL_TS, dtype=np.int64)
        if es.timestamps is not None:
            elig = es.timestamps.copy()
        src_ts = g.nodes[etype[0]].timestamps
        if src_ts is not None:
            node_part = src_ts[es.src]
            elig = np.maximum(elig, node_part)
        order = np.lexsort((-np.arange(m, dtype=np.int64), elig, es.dst))
        self.edge_ids = order
        self.src = es.src[order]
        self.elig_ts = elig[order]
        self.offsets = np.zeros(n_dst + 1, dtype=np.int64)
        np.add.at(self.offsets, es.dst + 1, 1)
        np.cumsum(self.offsets, out=self.offsets)

    def eligible_range(self, node: int, cutoff: Optional[int]) -> tuple[int, int]:
        lo, hi = int(self.offsets[node]), int(self.offsets[node + 1])
        if cutoff is None:
            return lo, hi
        pos = lo + int(np.searchsorted(self.elig_ts[lo:hi], cutoff, side="right"))
        return lo, pos


def _sentinel_mask(col: ColumnData, local: int) -> None:
    if col.dtype == FLOAT:
        col.values[local] = np.nan
    elif col.dtype == INT:
        col.values[local] = 0
        if col.mask is None:
            col.mask = np.zeros(len(col), dtype=bool)
        col.mask[local] = True
    elif col.dtype == CATEGORICAL:
        col.values[local] = -1
    elif col.dtype == DATETIME:
        col.values[local] = NULL_TS
    elif col.dtype == TEXT:
        col.values[local] = None
    elif col.dtype == VECTOR:
        col.values[local] = np.nan
        if col.mask is None:
            col.mask = np.zeros(len(col), dtype=bool)
        col.mask[local] = True
    else:
        raise DataError(f"cannot mask dtype {col.dtype!r}")


def exclude_target(batch: SubgraphBatch, node_type: str, local: int, column: str) -> None:
    """Mask one feature cell in place, recording it in ``batch.excluded``.

    The cell is replaced by its dtype's null sentinel. Idempotent: masking
    the same cell twice leaves the batch unchanged.
    """
    key = (node_type, int(local), column)
    if key in batch.excluded:
        return
    feats = batch.node_features[node_type]
    if column not in feats:
        raise DataError(f"node type {node_type!r} has no feature {column!r}")
    _sentinel_mask(feats[column], int(local))
    batch.excluded.append(key)


def temporal_sample(g: HeteroGraph, seeds: Sequence[Seed], plan: FanoutPlan,
                    rng_seed: int, batch_index: int = 0,
                    adjacency: Optional[dict[EdgeType, _Adjacency]] = None
                    ) -> SubgraphBatch:
    """Sample a merged temporal subgraph around the given seeds.

    Deterministic: the same (g, seeds, plan, rng_seed, batch_index) always
    produces an identical batch. Seeds with a ``label_ref`` get that feature
    cell of their seed node masked via :func:`exclude_target`.
    """
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(batch_index,)))
    if adjacency is None:
        adjacency = {et: _Adjacency(g, et) for et in g.edges}
    locals_: dict[str, dict[int, int]] = {t: {} for t in g.nodes}

    def local_of(t: str, gi: int) -> int:
        table = locals_[t]
        if gi not in table:
            table[gi] = len(table)
        return table[gi]

    seed_local = np.zeros(len(seeds), dtype=np.int64)
    for b, seed in enumerate(seeds):
        if seed.node_type not in g.nodes:
            raise DataError(f"seed names unknown node type {seed.node_type!r}")
        if not (0 <= seed.node_index < g.nodes[seed.node_type].count):
            raise DataError(f"seed index {seed.node_index} out of range")
        seed_local[b] = local_of(seed.node_type, seed.node_index)

    collected: dict[EdgeType, dict[str, list]] = {
        et: {"src": [], "dst": [], "seed": [], "hop": [], "edge": []} for et in g.edges}
    for b, seed in enumerate(seeds):
        visited: set[tuple[str, int]] = {(seed.node_type, seed.node_index)}
        frontier: list[tuple[str, int]] = [(seed.node_type, seed.node_index)]
        for hop in range(len(plan.fanouts)):
            nxt: list[tuple[str, int]] = []
            for t, gi in frontier:
                for etype in g.edges:
                    if etype[2] != t:
                        continue
                    cap = plan.cap(hop, etype)
                    if cap == 0:
                        continue
                    adj = adjacency[etype]
                    lo, hi = adj.eligible_range(gi, seed.cutoff)
                    k = hi - lo
                    if k <= 0:
                        continue
                    if cap == FULL_FANOUT or (not plan.replace and k <= cap):
                        if plan.neighbor_order == "most_recent":
                            picks = np.arange(hi - 1, lo - 1, -1, dtype=np.int64)
                        else:
                            picks = np.arange(lo, hi, dtype=np.int64)
                    elif plan.neighbor_order == "most_recent":
                        picks = np.arange(hi - 1, hi - 1 - min(cap, k), -1, dtype=np.int64)
                    else:
                        picks = lo + rng.choice(k, size=min(cap, k) if not plan.replace
                                                else cap, replace=plan.replace)
                        picks = picks.astype(np.int64)
                    bucket = collected[etype]
                    for p in picks:
                        u = int(adj.src[p])
                        src_t = etype[0]
                        bucket["src"].append((src_t, u))
                        bucket["dst"].append((t, gi))
                        bucket["seed"].append(b)
                        bucket["hop"].append(hop)
                        bucket["edge"].append(int(adj.edge_ids[p]))
                        if (src_t, u) not in visited:
                            visited.add((src_t, u))
                            nxt.append((src_t, u))
            frontier = nxt
            if not frontier:
                break

    # resolving src/dst through local_of assigns local ids to every node the
    # expansion touched, in a fixed traversal order
    edges: dict[EdgeType, BatchEdges] = {}
    for et, bucket in collected.items():
        src_local = np.array([local_of(t, gi) for t, gi in bucket["src"]], dtype=np.int64)
        dst_local = np.array([local_of(t, gi) for t, gi in bucket["dst"]], dtype=np.int64)
        edge_ids = np.array(bucket["edge"], dtype=np.int64)
        es = g.edges[et]
        feats = {name: col.take(edge_ids) for name, col in es.features.items()}
        ts = None if es.timestamps is None else es.timestamps[edge_ids]
        edges[et] = BatchEdges(src=src_local, dst=dst_local,
                               seed=np.array(bucket["seed"], dtype=np.int64),
                               hop=np.array(bucket["hop"], dtype=np.int64),
                               timestamps=ts, features=feats)

    node_index = {t: np.array(sorted(locals_[t], key=locals_[t].get), dtype=np.int64)
                  for t in g.nodes}
    node_features = {}
    node_ts: dict[str, Optional[np.ndarray]] = {}
    for t, ns in g.nodes.items():
        idx = node_index[t]
        node_features[t] = {name: col.take(idx) for name, col in ns.features.items()}
        node_ts[t] = None if ns.timestamps is None else ns.timestamps[idx]

    batch = SubgraphBatch(seeds=list(seeds), node_index=node_index,
                          node_features=node_features, node_timestamps=node_ts,
                          edges=edges, seed_local=seed_local, batch_index=batch_index)
    for b, seed in enumerate(seeds):
        if seed.label_ref is not None and seed.label_ref in node_features[seed.node_type]:
            exclude_target(batch, seed.node_type, int(seed_local[b]), seed.label_ref)
    return batch


def sample_negatives(g: HeteroGraph, target_type: str, positives: Sequence[int],
                     count: int, rng_seed: int,
                     cutoffs: Optional[Sequence[Optional[int]]] = None) -> list[np.ndarray]:
    """Draw ``count`` distinct corruption candidates per positive.

    The pool for position i is every node of ``target_type`` except the
    positive itself; with ``cutoffs`` given, nodes whose timestamp exceeds
    ``cutoffs[i]`` are excluded (null timestamps stay eligible). Raises when
    a pool is too small.
    """
    ns = g.nodes.get(target_type)
    if ns is None:
        raise DataError(f"unknown node type {target_type!r}")
    out = []
    all_nodes = np.arange(ns.count, dtype=np.int64)
    for i, pos in enumerate(positives):
        pool = all_nodes
        if cutoffs is not None and cutoffs[i] is not None and ns.timestamps is not None:
            pool = pool[ns.timestamps <= cutoffs[i]]
        pool = pool[pool != pos]
        if len(pool) < count:
            raise DataError(
                f"negative pool for {target_type}:{pos} has {len(pool)} < {count} nodes")
        rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(i,)))
        out.append(np.sort(pool[rng.choice(len(pool), size=count, replace=False)]))
    return out


def _b64(name: str, col: ColumnData) -> str:
    return base64.b64encode(rdbc.column_bytes(name, col)).decode("ascii")


def _unb64(blob: str) -> ColumnData:
    return rdbc.column_from_bytes(base64.b64decode(blob))[1]


def _int_col(arr: np.ndarray) -> ColumnData:
    return ColumnData(INT, np.asarray(arr, dtype=np.int64),
                      mask=np.zeros(len(arr), dtype=bool))


def write_batch_file(batch: SubgraphBatch, path: str) -> None:
    """Serialize one batch as JSON lines with base64 column blocks."""
    lines = []
    header = {
        "kind": "header",
        "batch_index": batch.batch_index,
        "seeds": [{
            "seed_id": s.seed_id, "node_type": s.node_type, "node_index": s.node_index,
            "cutoff": s.cutoff, "label": s.label, "label_ref": s.label_ref,
            "negatives": None if s.negatives is None else list(s.negatives),
        } for s in batch.seeds],
        "seed_local": [int(v) for v in batch.seed_local],
        "excluded": [[t, i, c] for t, i, c in batch.excluded],
        "node_counts": {t: int(len(batch.node_index[t])) for t in batch.node_index},
    }
    lines.append(json.dumps(header, sort_keys=True))
    for t in batch.node_index:
        rec = {
            "kind": "nodes", "node_type": t,
            "count": int(len(batch.node_index[t])),
            "global_index": _b64("global_index", _int_col(batch.node_index[t])),
            "ts": None if batch.node_timestamps[t] is None
            else _b64("_ts", ColumnData(DATETIME, batch.node_timestamps[t])),
            "features": {name: _b64(name, col)
                         for name, col in batch.node_features[t].items()},
        }
        lines.append(json.dumps(rec, sort_keys=True))
    for et, be in batch.edges.items():
        rec = {
            "kind": "edges", "triple": list(et), "count": int(len(be)),
            "src": _b64("src", _int_col(be.src)), "dst": _b64("dst", _int_col(be.dst)),
            "seed": _b64("seed", _int_col(be.seed)), "hop": _b64("hop", _int_col(be.hop)),
            "ts": None if be.timestamps is None
            else _b64("_ts", ColumnData(DATETIME, be.timestamps)),
            "features": {name: _b64(name, col) for name, col in be.features.items()},
        }
        lines.append(json.dumps(rec, sort_keys=True))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_batch_file(path: str) -> SubgraphBatch:
    with open(path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    if not records or records[0].get("kind") != "header":
        raise DataError(f"{path}: missing batch header")
    header = records[0]
    seeds = [Seed(node_type=s["node_type"], node_index=s["node_index"],
                  cutoff=s["cutoff"], seed_id=s["seed_id"], label=s["label"],
                  label_ref=s["label_ref"],
                  negatives=None if s["negatives"] is None else tuple(s["negatives"]))
             for s in header["seeds"]]
    node_index: dict[str, np.ndarray] = {}
    node_features: dict[str, dict[str, ColumnData]] = {}
    node_ts: dict[str, Optional[np.ndarray]] = {}
    edges: dict[EdgeType, BatchEdges] = {}
    for rec in records[1:]:
        if rec["kind"] == "nodes":
            t = rec["node_type"]
            node_index[t] = _unb64(rec["global_index"]).values
            node_features[t] = {name: _unb64(blob)
                                for name, blob in rec["features"].items()}
            node_ts[t] = None if rec["ts"] is None else _unb64(rec["ts"]).values
        elif rec["kind"] == "edges":
            et = tuple(rec["triple"])
            edges[et] = BatchEdges(  # type: ignore[index]
                src=_unb64(rec["src"]).values, dst=_unb64(rec["dst"]).values,
                seed=_unb64(rec["seed"]).values, hop=_unb64(rec["hop"]).values,
                timestamps=None if rec["ts"] is None else _unb64(rec["ts"]).values,
                features={name: _unb64(blob) for name, blob in rec["features"].items()},
            )
    return SubgraphBatch(
        seeds=seeds, node_index=node_index, node_features=node_features,
        node_timestamps=node_ts, edges=edges,
        seed_local=np.array(header["seed_local"], dtype=np.int64),
        excluded=[(t, int(i), c) for t, i, c in header["excluded"]],
        batch_index=header["batch_index"],
    )


def export_batches(g: HeteroGraph, seeds: Sequence[Seed], plan: FanoutPlan,
                   batch_size: int, out_dir: str, rng_seed: int,
                   split: str = "all") -> str:
    """Chunk seeds, sample each chunk, and write batch files plus a manifest.

    Batch b draws from its own stream spawned off ``rng_seed``, so exports
    are reproducible regardless of scheduling. Returns the manifest path.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    os.makedirs(out_dir, exist_ok=True)
    adjacency = {et: _Adjacency(g, et) for et in g.edges}
    files = []
    for b, start in enumerate(range(0, len(seeds), batch_size)):
        chunk = list(seeds[start:start + batch_size])
        batch = temporal_sample(g, chunk, plan, rng_seed, batch_index=b,
                                adjacency=adjacency)
        rel = f"batch_{b:05d}.jsonl"
        write_batch_file(batch, os.path.join(out_dir, rel))
        files.append({"path": rel, "batch_index": b, "num_seeds": len(chunk)})
    manifest = {
        "split": split,
        "rng_seed": int(rng_seed),
        "batch_size": int(batch_size),
        "num_seeds": len(seeds),
        "plan": plan.to_dict(),
        "files": files,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def iter_batches(export_dir: str) -> Iterator[SubgraphBatch]:
    with open(os.path.join(export_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    for entry in manifest["files"]:
        yield read_batch_file(os.path.join(export_dir, entry["path"]))


def audit_export(g: HeteroGraph, export_dir: str) -> list[str]:
    """Check an export for temporal leakage; returns human-readable problems.

    Verifies, for every batch, that each sampled edge's effective timestamp
    and each reached node's timestamp lie at or before the cutoff of the
    seed that sampled it.
    """
    problems: list[str] = []
    for batch in iter_batches(export_dir):
        cutoffs = [s.cutoff for s in batch.seeds]
        for b, s in enumerate(batch.seeds):
            ts = batch.node_timestamps.get(s.node_type)
            if ts is not None and s.cutoff is not None:
                own = int(ts[batch.seed_local[b]])
                if own != NULL_TS and own > s.cutoff:
                    problems.append(f"seed {s.seed_id}: node after cutoff")
        for et, be in batch.edges.items():
            src_ts = batch.node_timestamps.get(et[0])
            for j in range(len(be)):
                c = cutoffs[int(be.seed[j])]
                if c is None:
                    continue
                if be.timestamps is not None and int(be.timestamps[j]) != NULL_TS \
                        and int(be.timestamps[j]) > c:
                    problems.append(f"batch {batch.batch_index}: edge {et} [{j}] after cutoff")
                if src_ts is not None:
                    t_src = int(src_ts[int(be.src[j])])
                    if t_src != NULL_TS and t_src > c:
                        problems.append(
                            f"batch {batch.batch_index}: node via {et} [{j}] after cutoff")
    return problems
