"""Parameter-perturbation views and the contrastive objective.

The second view of a batch comes from re-encoding with noisy encoder
parameters: every tensor gets zero-mean Gaussian noise with that tensor's
own population standard deviation, scaled by the rate ``eta``.  The input
complexes are never touched, so all cellular structure survives in both
views.  Positive pairs are the clean/perturbed embeddings of one complex;
the loss denominator ranges over the perturbed views of the other batch
members only (the positive pair is excluded, as the objective is written;
``include_positive`` switches to the conventional form).

The perturbed parameters are treated as constants: gradients reach the
encoder through the clean view and the projection head through both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .ccnn import CCNNConfig, CCNNParams, ComplexBatch, encode_core, project, readout
from .diffcore import Adam, ParameterStore, Tensor
from .scheduler import SchedulerParams, batch_gumbel_noise, scheduled_embedding


@dataclass
class NoiseConfig:
    eta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("noise rate eta must be nonnegative")


@dataclass
class LossConfig:
    rho: float = 0.2
    batch_size: int = 128
    include_positive: bool = False

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("temperature rho must be positive")
        if self.batch_size < 2:
            raise ValueError("contrastive batches need at least two complexes")


def perturbation_units(store: ParameterStore, seed_parts) -> dict[str, np.ndarray]:
    """Standard-normal draws per parameter, in sorted name order."""
    rng = np.random.default_rng(seed_parts)
    return {name: rng.standard_normal(t.data.shape) for name, t in store.items()}


def perturb_with_units(store: ParameterStore, eta: float,
                       units: dict[str, np.ndarray]) -> ParameterStore:
    """Perturbed copy of ``store``; the copy is constant so no tape is recorded on it."""
    out = ParameterStore(store.name + "~")
    for name, t in store.items():
        out.add(name, t.data + eta * t.data.std() * units[name], trainable=False)
    for bname, b in store.buffers().items():
        out.buffers()[bname] = b.copy()
    return out


def perturb_params(store: ParameterStore, eta: float, seed: int) -> ParameterStore:
    """Seed-deterministic perturbed copy; the original store is untouched."""
    return perturb_with_units(store, eta, perturbation_units(store, [int(seed)]))


def ntxent_loss(z: Tensor, z_aug: Tensor, rho: float, include_positive: bool = False) -> Tensor:
    """Temperature-scaled contrastive loss over two aligned batches of unit rows."""
    n = z.data.shape[0]
    if n < 2 or z_aug.data.shape[0] != n:
        raise ValueError("need two aligned batches with at least two rows")
    if rho <= 0:
        raise ValueError("temperature rho must be positive")
    for mat in (z.data, z_aug.data):
        if np.abs(np.linalg.norm(mat, axis=1) - 1.0).max() > 1e-9:
            raise ValueError("embeddings must be unit-normalized rows")
    sims = dc.scale(dc.matmul(z, dc.transpose(z_aug)), 1.0 / rho)
    eye = np.eye(n)
    denom_mask = np.ones((n, n)) if include_positive else (1.0 - eye)
    denom = dc.sum_axis1(dc.mul_const(dc.exp(sims), denom_mask))
    positives = dc.sum_axis1(dc.mul_const(sims, eye))
    per_sample = dc.sub(dc.log(denom), positives)
    hi = 2.0 / rho + np.log(max(n - 1, 1)) + 1e-9
    if per_sample.data.min() < -2.0 / rho - 1e-9 or per_sample.data.max() > hi:
        raise FloatingPointError("contrastive summand outside its analytic bounds")
    return dc.mean_all(per_sample)


@dataclass
class FrozenNoise:
    """All randomness of one training step, drawn once and reused."""

    gumbel: np.ndarray
    units: dict[str, np.ndarray]


def draw_step_noise(batch: ComplexBatch, enc: ParameterStore, seed: int,
                    epoch: int, step: int, stage: int = 1) -> FrozenNoise:
    parts = [int(seed), int(stage), int(epoch), int(step)]
    gumbel = batch_gumbel_noise(batch, parts + [7])
    units = perturbation_units(enc, parts + [11])
    return FrozenNoise(gumbel, units)


def contrastive_batch_loss(
    batch: ComplexBatch,
    enc: ParameterStore,
    proj: ParameterStore,
    sched: ParameterStore,
    cfg: CCNNConfig,
    loss_cfg: LossConfig,
    eta: float,
    zeta: float,
    noise: FrozenNoise,
    training: bool = True,
    update_running: bool = True,
    aux: dict | None = None,
    pert_store: ParameterStore | None = None,
    _pert_percell: list[Tensor] | None = None,
) -> Tensor:
    """Pipeline loss for one batch under frozen noise.

    Encodes the clean view with a trimmed readout, re-encodes with
    perturbed parameters under the same mask, projects both with the
    shared head and evaluates the contrastive objective.  The perturbed
    side is a constant with respect to the tape; ``pert_store`` pins it
    explicitly (gradient checks differentiate exactly that function).
    """
    params = CCNNParams(enc, proj)
    sp = SchedulerParams(sched)
    emb, mask_t = scheduled_embedding(batch, params, sp, cfg, zeta, noise.gumbel,
                                      training=training, update_running=update_running)
    pert = pert_store if pert_store is not None else perturb_with_units(enc, eta, noise.units)
    percell_p = _pert_percell
    if percell_p is None:
        percell_p = encode_core(batch, pert, cfg, training=training, update_running=False)
    emb_p = readout(percell_p, batch, pert, cfg,
                    {2: mask_t} if mask_t is not None else None)
    z = project(emb, proj)
    z_p = project(emb_p, proj)
    if aux is not None:
        aux["mean_retain"] = float(mask_t.data.mean()) if mask_t is not None else 1.0
        aux["mask"] = mask_t.data.copy() if mask_t is not None else np.zeros(0)
    return ntxent_loss(z, z_p, loss_cfg.rho, loss_cfg.include_positive)


def train_epoch_standard(
    batches: list[ComplexBatch],
    params: CCNNParams,
    sp: SchedulerParams,
    cfg: CCNNConfig,
    loss_cfg: LossConfig,
    noise_cfg: NoiseConfig,
    zeta: float,
    opt_enc: Adam,
    opt_proj: Adam,
    epoch: int,
    log_fn=None,
) -> float:
    """First-stage pass: step encoder and head, scheduler frozen."""
    total = 0.0
    for step, batch in enumerate(batches):
        noise = draw_step_noise(batch, params.encoder, noise_cfg.seed, epoch, step)
        params.encoder.zero_grad()
        params.projector.zero_grad()
        sp.store.zero_grad()
        loss = contrastive_batch_loss(
            batch, params.encoder, params.projector, sp.store, cfg, loss_cfg,
            noise_cfg.eta, zeta, noise,
        )
        dc.backward(loss)
        opt_enc.step(params.encoder)
        opt_proj.step(params.projector)
        sp.store.zero_grad()
        total += loss.item()
        if log_fn is not None:
            log_fn(f"{step} {loss.item():.6f} {opt_enc.lr} {noise_cfg.eta}")
    return total / max(len(batches), 1)
