"""Per-2-cell trimming gate.

A linear layer over each 2-cell's final (jump-concatenated) embedding
yields a trim/retain probability pair; differentiable masks are drawn with
the Gumbel-Softmax reparameterization, so gradients flow to the gate
weights and the encoder while the noise stays fixed.  Soft retain weights
are used directly (no straight-through rounding) and scale each 2-cell's
readout contribution.

The machinery is dimension-generic (``readout`` accepts masks for any
dimension) but only 2-cell trimming is a supported configuration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .ccnn import CCNNConfig, CCNNParams, ComplexBatch, Embedding, encode_core, pack_batch, readout
from .diffcore import ParameterStore, Tensor

_LAMBDA_FLOOR = 1e-20


@dataclass
class SchedulerParams:
    """Gate weights: a 2 x d matrix and a 2-vector bias over cell embeddings."""

    store: ParameterStore

    @property
    def weight(self) -> Tensor:
        return self.store["W"]

    @property
    def bias(self) -> Tensor:
        return self.store["b"]

    @property
    def dim(self) -> int:
        return self.store["W"].data.shape[1]


def init_scheduler_params(cfg: CCNNConfig) -> SchedulerParams:
    # zero init makes the initial retain probability exactly 0.5
    store = ParameterStore("scheduler")
    store.add("W", np.zeros((2, cfg.percell_dim)))
    store.add("b", np.zeros(2))
    return SchedulerParams(store)


@dataclass
class TrimMask:
    """Sampled retain weights for the 2-cells of one batch."""

    weights: np.ndarray
    zeta: float
    seed: int | None = None

    def __post_init__(self):
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ValueError("retain weights must lie in [0, 1]")


def trim_logits(h2: Tensor, sp: SchedulerParams) -> Tensor:
    """Probability pairs (trim, retain) per 2-cell, rows on the 2-simplex."""
    if h2.data.shape[1] != sp.dim:
        raise ValueError(f"embedding width {h2.data.shape[1]} != scheduler dim {sp.dim}")
    scores = dc.add(dc.matmul(h2, dc.transpose(sp.weight)), sp.bias)
    return dc.softmax_rows(scores)


def gumbel_noise(num_cells: int, seed_parts) -> np.ndarray:
    """Standard Gumbel draws, one pair per cell."""
    rng = np.random.default_rng(seed_parts)
    u = rng.uniform(1e-12, 1.0, size=(num_cells, 2))
    return -np.log(-np.log(u))


def batch_gumbel_noise(batch: ComplexBatch, seed_parts: list[int]) -> np.ndarray:
    """Per-graph seeded Gumbel streams packed into one array."""
    chunks = []
    for ci, (start, end) in enumerate(batch.n2_slices):
        chunks.append(gumbel_noise(end - start, seed_parts + [ci]))
    if not chunks:
        return np.zeros((0, 2))
    return np.vstack(chunks)


def gumbel_mask(lam: Tensor, zeta: float, noise: np.ndarray) -> Tensor:
    """Differentiable retain weights from probabilities and frozen noise."""
    if zeta <= 0:
        raise ValueError("temperature zeta must be positive")
    if np.any(lam.data <= 0):
        warnings.warn("clamping zero trim probabilities to 1e-20")
    scaled = dc.mul_const(dc.add_const(dc.log(lam, floor=_LAMBDA_FLOOR), noise), 1.0 / zeta)
    y = dc.softmax_rows(scaled)
    return dc.column(y, 1)


def gumbel_sample(lam, zeta: float, seed: int) -> TrimMask:
    """Draw a mask from probability pairs with a fresh seeded Gumbel draw."""
    lam_t = lam if isinstance(lam, Tensor) else dc.const(np.asarray(lam, dtype=np.float64))
    noise = gumbel_noise(lam_t.data.shape[0], [int(seed)])
    mask = gumbel_mask(lam_t, zeta, noise)
    return TrimMask(mask.data.copy(), zeta, seed)


def scheduled_embedding(
    batch: ComplexBatch,
    params: CCNNParams,
    sp: SchedulerParams,
    cfg: CCNNConfig,
    zeta: float,
    noise: np.ndarray,
    training: bool = False,
    update_running: bool = False,
) -> tuple[Embedding, Tensor | None]:
    """One message-passing pass, gate from its own 2-cell embeddings, trimmed readout."""
    percell = encode_core(batch, params.encoder, cfg, training, update_running)
    mask_t = None
    if batch.counts[2] > 0:
        lam = trim_logits(percell[2], sp)
        mask_t = gumbel_mask(lam, zeta, noise)
    emb = readout(percell, batch, params.encoder, cfg, {2: mask_t} if mask_t is not None else None)
    return emb, mask_t


def apply_scheduler(
    x,
    feats,
    params: CCNNParams,
    sp: SchedulerParams,
    zeta: float,
    seed: int,
    cfg: CCNNConfig,
    tables=None,
) -> tuple[Embedding, TrimMask]:
    """Single-complex trimmed embedding with a seed-deterministic mask."""
    batch = pack_batch([(x, tables, feats)])
    noise = batch_gumbel_noise(batch, [int(seed)])
    emb, mask_t = scheduled_embedding(batch, params, sp, cfg, zeta, noise)
    weights = mask_t.data.copy() if mask_t is not None else np.zeros(0)
    return emb, TrimMask(weights, zeta, seed)


def mask_dump(batch: ComplexBatch, weights: np.ndarray) -> str:
    """Diagnostic dump: ``graph_id cell_id vertex_set retain_weight`` per 2-cell."""
    lines = []
    for ci, (start, end) in enumerate(batch.n2_slices):
        x = batch.complexes[ci]
        for local, cell in enumerate(x.cells_by_dim[2]):
            vs = ",".join(str(v) for v in cell.vertex_set)
            lines.append(f"{ci} {cell.id} {vs} {weights[start + local]:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")
