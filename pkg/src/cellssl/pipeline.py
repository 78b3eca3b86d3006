"""Dataset-to-training plumbing shared by the CLI and the test suites."""

from __future__ import annotations

import concurrent.futures as futures

import numpy as np

from .ccnn import CCNNConfig, CCNNParams, ComplexBatch, init_ccnn_params, pack_batch
from .graph_io import Dataset, FeatureMatrix, dataset_node_features
from .lift import CellularComplex, NeighborhoodTables, build_neighborhoods, initial_cell_features, lift_graph
from .scheduler import SchedulerParams, init_scheduler_params

Item = tuple[CellularComplex, NeighborhoodTables, tuple[FeatureMatrix, ...]]


def _prepare_one(args) -> Item:
    g, m, feats = args
    x = lift_graph(g, m)
    return x, build_neighborhoods(x), initial_cell_features(x, feats)


def prepare_items(dataset: Dataset, m: int, scheme: str = "auto", threads: int = 1) -> list[Item]:
    """Lift every graph, build tables and initial features.

    Results are collected in dataset order regardless of thread count.
    """
    node_feats = dataset_node_features(dataset, scheme)
    tasks = [(g, m, f) for g, f in zip(dataset.graphs, node_feats)]
    if threads > 1:
        with futures.ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_prepare_one, tasks))
    return [_prepare_one(t) for t in tasks]


def make_batches(items: list[Item], batch_size: int, seed: int, epoch: int) -> list[ComplexBatch]:
    """Seeded shuffle then fixed-size packing; order is a pure function of (seed, epoch)."""
    rng = np.random.default_rng([seed, 23, epoch])
    order = rng.permutation(len(items))
    batches = []
    for start in range(0, len(items), batch_size):
        chunk = [items[i] for i in order[start:start + batch_size]]
        if len(chunk) >= 2:  # contrastive loss needs at least two graphs
            batches.append(pack_batch(chunk))
    return batches


def pack_all(items: list[Item]) -> ComplexBatch:
    """One batch holding the whole dataset, in dataset order (for embedding)."""
    return pack_batch(items)


def init_model(cfg: CCNNConfig, in_dim: int, seed: int) -> tuple[CCNNParams, SchedulerParams]:
    return init_ccnn_params(cfg, in_dim, seed), init_scheduler_params(cfg)
