"""Cellular complex encoder.

Each layer runs, for every dimension, four message branches (boundary,
coboundary, lower, upper): a branch feeds ``(1 + eps) * h(cell) + sum of
neighbor features`` through a two-layer perceptron, the four outputs are
concatenated and mixed by an update perceptron.  Undefined neighborhoods
(boundary/lower at dimension 0, coboundary/upper at dimension 2)
contribute a zero aggregation but still pass through their perceptron so
the concatenation width stays fixed.

The graph embedding sums, per dimension, the jump-concatenated cell
embeddings of all layers, applies a readout perceptron and adds the three
dimension terms.  Trimming weights, when given, scale each 2-cell's
contribution to the pooled sum only; message passing is never masked.

Complexes are packed into batches so the per-branch work is a sparse
aggregation plus dense matmuls over all cells of a dimension at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .diffcore import ParameterStore, Tensor
from .graph_io import FeatureMatrix
from .lift import CellularComplex, NeighborhoodTables, build_neighborhoods

# branch order is fixed: boundary, coboundary, lower, upper
_BRANCHES = ("B", "C", "D", "U")


@dataclass
class CCNNConfig:
    num_layers: int = 3
    hidden_dim: int = 32
    proj_layers: int = 2
    proj_dim: int = 96
    jump_mode: str = "cat"
    normalize: bool = True
    pooling: str = "sum"

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1 or self.proj_dim < 1:
            raise ValueError("layer count and dims must be positive")
        if self.jump_mode != "cat" or self.pooling != "sum":
            raise ValueError("only jump_mode='cat' with sum pooling is supported")
        if self.proj_layers != 2:
            raise ValueError("projection head is a 2-layer perceptron")

    @property
    def percell_dim(self) -> int:
        return self.num_layers * self.hidden_dim


@dataclass
class CCNNParams:
    encoder: ParameterStore
    projector: ParameterStore


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _init_mlp(store: ParameterStore, prefix: str, d_in: int, d_hidden: int,
              d_out: int, rng: np.random.Generator, bn: bool) -> None:
    store.add(f"{prefix}.lin1.W", _glorot(rng, d_in, d_hidden))
    store.add(f"{prefix}.lin1.b", np.zeros(d_hidden))
    if bn:
        store.add(f"{prefix}.bn.gamma", np.ones(d_hidden))
        store.add(f"{prefix}.bn.beta", np.zeros(d_hidden))
        store.buffer(f"{prefix}.bn.mean", np.zeros(d_hidden))
        store.buffer(f"{prefix}.bn.var", np.ones(d_hidden))
    store.add(f"{prefix}.lin2.W", _glorot(rng, d_hidden, d_out))
    store.add(f"{prefix}.lin2.b", np.zeros(d_out))


def init_ccnn_params(cfg: CCNNConfig, in_dim: int, seed: int) -> CCNNParams:
    """Seeded Glorot-uniform initialization of all encoder and head parameters."""
    rng = np.random.default_rng(seed)
    enc = ParameterStore("encoder")
    for layer in range(cfg.num_layers):
        d_in = in_dim if layer == 0 else cfg.hidden_dim
        for r in range(3):
            for k in _BRANCHES:
                prefix = f"l{layer}.r{r}.n{k}"
                _init_mlp(enc, prefix, d_in, cfg.hidden_dim, cfg.hidden_dim, rng, cfg.normalize)
                enc.add(f"{prefix}.eps", np.zeros(1))
            _init_mlp(enc, f"l{layer}.r{r}.upd", 4 * cfg.hidden_dim, cfg.hidden_dim,
                      cfg.hidden_dim, rng, cfg.normalize)
    for r in range(3):
        _init_mlp(enc, f"ro.r{r}", cfg.percell_dim, cfg.hidden_dim, cfg.hidden_dim, rng, bn=False)
    proj = ParameterStore("projector")
    _init_mlp(proj, "proj", cfg.hidden_dim, cfg.proj_dim, cfg.proj_dim, rng, bn=False)
    return CCNNParams(enc, proj)


def _mlp2(store: ParameterStore, prefix: str, x: Tensor, normalize: bool,
          training: bool, update_running: bool) -> Tensor:
    h = dc.add(dc.matmul(x, store[f"{prefix}.lin1.W"]), store[f"{prefix}.lin1.b"])
    if normalize and f"{prefix}.bn.gamma" in store:
        # training-mode batch stats need >= 2 rows; tiny/empty dims pass through
        if not training or h.shape[0] >= 2:
            running = (store.buffer(f"{prefix}.bn.mean", None),
                       store.buffer(f"{prefix}.bn.var", None))
            h = dc.batchnorm(h, store[f"{prefix}.bn.gamma"], store[f"{prefix}.bn.beta"],
                             running, training=training, update_running=update_running)
    h = dc.relu(h)
    return dc.add(dc.matmul(h, store[f"{prefix}.lin2.W"]), store[f"{prefix}.lin2.b"])


# source dimension feeding each (dimension, branch) pair; None when undefined
_SOURCE_DIM = {
    (0, "B"): None, (0, "C"): 1, (0, "D"): None, (0, "U"): 0,
    (1, "B"): 0, (1, "C"): 2, (1, "D"): 1, (1, "U"): 1,
    (2, "B"): 1, (2, "C"): None, (2, "D"): 2, (2, "U"): None,
}

_TABLE_FIELD = {"B": "boundary", "C": "coboundary", "D": "lower", "U": "upper"}


@dataclass
class ComplexBatch:
    """Several complexes packed into per-dimension concatenated blocks."""

    feats: list[np.ndarray]
    counts: list[int]
    graph_ids: list[np.ndarray]
    adj: dict
    num_graphs: int
    n2_slices: list[tuple[int, int]]
    complexes: list[CellularComplex] = field(repr=False, default_factory=list)

    @property
    def n2(self) -> int:
        return self.counts[2]


def pack_batch(
    items: list[tuple[CellularComplex, NeighborhoodTables | None, tuple[FeatureMatrix, ...]]],
) -> ComplexBatch:
    """Pack (complex, tables, per-dim features) triples into one batch."""
    complexes = []
    tables = []
    featmats = []
    for x, t, fs in items:
        complexes.append(x)
        tables.append(t if t is not None else build_neighborhoods(x))
        featmats.append([f.values for f in fs])

    in_dim = featmats[0][0].shape[1]
    counts = [0, 0, 0]
    offsets = []  # per complex, per dim
    for x in complexes:
        offsets.append([counts[0], counts[1], counts[2]])
        counts[0] += x.n0
        counts[1] += x.n1
        counts[2] += x.n2

    feats = []
    graph_ids = []
    for r in range(3):
        mats = [fm[r] for fm in featmats]
        feats.append(np.vstack(mats) if counts[r] else np.zeros((0, in_dim)))
        gid = np.concatenate(
            [np.full((x.n0, x.n1, x.n2)[r], ci, dtype=np.int64) for ci, x in enumerate(complexes)]
        ) if counts[r] else np.zeros(0, dtype=np.int64)
        graph_ids.append(gid)

    adj = {}
    for r in range(3):
        for k in _BRANCHES:
            src = _SOURCE_DIM[(r, k)]
            if src is None:
                continue
            rows, cols = [], []
            for ci, (x, t) in enumerate(zip(complexes, tables)):
                dim_off = x.dim_offset(src)
                table = getattr(t, _TABLE_FIELD[k])
                for local, cell in enumerate(x.cells_by_dim[r]):
                    for nbr in table[cell.id]:
                        rows.append(offsets[ci][r] + local)
                        cols.append(offsets[ci][src] + (nbr - dim_off))
            if rows:
                mat = sp.csr_matrix(
                    (np.ones(len(rows)), (rows, cols)), shape=(counts[r], counts[src])
                )
                adj[(r, k)] = dc.AdjacencyOp(mat)

    n2_slices = []
    for ci, x in enumerate(complexes):
        start = offsets[ci][2]
        n2_slices.append((start, start + x.n2))
    return ComplexBatch(feats, counts, graph_ids, adj, len(complexes), n2_slices, complexes)


def encode_core(batch: ComplexBatch, enc: ParameterStore, cfg: CCNNConfig,
                training: bool = False, update_running: bool = False) -> list[Tensor]:
    """Message passing; returns per-dimension jump-concatenated cell embeddings."""
    h = [dc.const(batch.feats[r]) for r in range(3)]
    jumps: list[list[Tensor]] = [[], [], []]
    for layer in range(cfg.num_layers):
        new_h = []
        for r in range(3):
            branches = []
            for k in _BRANCHES:
                prefix = f"l{layer}.r{r}.n{k}"
                eps = enc[f"{prefix}.eps"]
                self_term = dc.mul(h[r], dc.add_const(eps, 1.0))
                op = batch.adj.get((r, k))
                src = _SOURCE_DIM[(r, k)]
                if op is not None:
                    branch_in = dc.add(self_term, dc.neighbor_sum(op, h[src]))
                else:
                    branch_in = self_term
                branches.append(
                    _mlp2(enc, prefix, branch_in, cfg.normalize, training, update_running)
                )
            cat = dc.concat(branches, axis=1)
            new_h.append(
                _mlp2(enc, f"l{layer}.r{r}.upd", cat, cfg.normalize, training, update_running)
            )
        h = new_h
        for r in range(3):
            jumps[r].append(h[r])
    if cfg.num_layers == 1:
        return [jumps[r][0] for r in range(3)]
    return [dc.concat(jumps[r], axis=1) for r in range(3)]


@dataclass
class Embedding:
    """Graph embeddings plus the per-cell tensors the scheduler reads."""

    h: Tensor
    percell: list[Tensor]
    readout_terms: list[Tensor]
    batch: ComplexBatch = field(repr=False, default=None)

    def vectors(self) -> np.ndarray:
        return self.h.data.copy()


def readout(percell: list[Tensor], batch: ComplexBatch, enc: ParameterStore,
            cfg: CCNNConfig, masks: dict[int, Tensor] | None = None) -> Embedding:
    """Pool per-dimension cells per graph, apply readout perceptrons, sum dims."""
    terms = []
    for r in range(3):
        vec = percell[r]
        if masks and r in masks:
            m = masks[r]
            if m.data.shape[0] != batch.counts[r]:
                raise ValueError(
                    f"mask length {m.data.shape[0]} != {batch.counts[r]} cells of dim {r}")
            vec = dc.mul(vec, dc.reshape(m, (batch.counts[r], 1)))
        pooled = dc.segment_sum(vec, batch.graph_ids[r], batch.num_graphs)
        terms.append(_mlp2(enc, f"ro.r{r}", pooled, normalize=False,
                           training=False, update_running=False))
    h = dc.add(dc.add(terms[0], terms[1]), terms[2])
    return Embedding(h, percell, terms, batch)


def encode_batch(batch: ComplexBatch, params: CCNNParams, cfg: CCNNConfig,
                 mask: Tensor | np.ndarray | None = None, training: bool = False,
                 update_running: bool = False) -> Embedding:
    percell = encode_core(batch, params.encoder, cfg, training, update_running)
    masks = None
    if mask is not None:
        m = mask if isinstance(mask, Tensor) else dc.const(np.asarray(mask, dtype=np.float64))
        masks = {2: m}
    return readout(percell, batch, params.encoder, cfg, masks)


def encode(x: CellularComplex, feats: tuple[FeatureMatrix, ...], params: CCNNParams,
           cfg: CCNNConfig, tables: NeighborhoodTables | None = None,
           training: bool = False) -> Embedding:
    """Encode a single complex; ``Embedding.h`` has one row."""
    batch = pack_batch([(x, tables, feats)])
    return encode_batch(batch, params, cfg, training=training)


def encode_trimmed(x: CellularComplex, feats: tuple[FeatureMatrix, ...], params: CCNNParams,
                   cfg: CCNNConfig, mask, tables: NeighborhoodTables | None = None,
                   training: bool = False) -> Embedding:
    """Encode with per-2-cell retain weights applied at readout."""
    n = mask.data.shape[0] if isinstance(mask, Tensor) else np.asarray(mask).shape[0]
    if n != x.n2:
        raise ValueError(f"mask length {n} != {x.n2} 2-cells")
    batch = pack_batch([(x, tables, feats)])
    return encode_batch(batch, params, cfg, mask=mask, training=training)


def project(emb: Embedding | Tensor, proj: ParameterStore) -> Tensor:
    """Two-layer head then row normalization onto the unit sphere."""
    z = emb.h if isinstance(emb, Embedding) else emb
    z = dc.add(dc.matmul(z, proj["proj.lin1.W"]), proj["proj.lin1.b"])
    z = dc.relu(z)
    z = dc.add(dc.matmul(z, proj["proj.lin2.W"]), proj["proj.lin2.b"])
    return dc.l2_normalize_rows(z)
