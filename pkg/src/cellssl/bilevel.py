"""Bi-level meta-updates of the trimming gate.

The gate never gets a plain gradient step on the training loss; instead,
encoder and head are advanced by one plain gradient step (the lookahead)
and the loss after that step is differentiated with respect to the gate.
The second-order mode adds the chain-rule correction through the lookahead
step, with the mixed second derivative approximated by central finite
differences on the parameters (step 0.01 / ||outer gradient||), the
standard one-step approximation.  First-order mode treats the stepped
parameters as constants.

All routines act on a loss closure ``loss_fn(enc, proj, sched) -> Tensor``
so the same code path serves the full pipeline and analytic toy problems.
Within one meta step the closure must be noise-frozen: Gumbel draws and
perturbation draws are fixed once per batch and reused by every
evaluation, including the finite-difference probes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .ccnn import CCNNConfig, CCNNParams, ComplexBatch
from .contrastive import (
    LossConfig,
    NoiseConfig,
    contrastive_batch_loss,
    draw_step_noise,
    train_epoch_standard,
)
from .diffcore import Adam, ParameterStore
from .scheduler import SchedulerParams

log = logging.getLogger(__name__)


@dataclass
class BilevelConfig:
    alpha: float = 1e-3
    beta: float = 1e-3
    outer_lr: float = 1e-3
    mode: str = "second-order"
    fd_scale: float = 0.01

    def __post_init__(self):
        # zero is allowed: it collapses the lookahead to the identity
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("inner learning rates must be nonnegative")
        if self.mode not in ("second-order", "first-order"):
            raise ValueError(f"unknown bilevel mode {self.mode!r}")


def _zeroed_grads(store: ParameterStore) -> dict[str, np.ndarray]:
    out = {}
    for name, t in store.items():
        out[name] = t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
    return out


def _eval_grads(loss_fn, enc, proj, sched, wrt: list[ParameterStore]):
    for s in (enc, proj, sched):
        s.zero_grad()
    loss = loss_fn(enc, proj, sched)
    dc.backward(loss)
    grads = [_zeroed_grads(s) for s in wrt]
    return loss.item(), grads


def lookahead_step(loss_fn, enc: ParameterStore, proj: ParameterStore,
                   sched: ParameterStore, alpha: float, beta: float):
    """One plain gradient step of encoder and head; originals untouched.

    Returns (enc_hat, proj_hat, inner_loss).
    """
    inner, (g_enc, g_proj) = _eval_grads(loss_fn, enc, proj, sched, [enc, proj])
    enc_hat = ParameterStore(enc.name + "^")
    for name, t in enc.items():
        enc_hat.add(name, t.data - alpha * g_enc[name])
    for bname, b in enc.buffers().items():
        enc_hat.buffers()[bname] = b.copy()
    proj_hat = ParameterStore(proj.name + "^")
    for name, t in proj.items():
        proj_hat.add(name, t.data - beta * g_proj[name])
    for bname, b in proj.buffers().items():
        proj_hat.buffers()[bname] = b.copy()
    for s in (enc, proj, sched):
        s.zero_grad()
    return enc_hat, proj_hat, inner


def _shifted(store: ParameterStore, direction: dict[str, np.ndarray], step: float) -> ParameterStore:
    out = ParameterStore(store.name)
    for name, t in store.items():
        out.add(name, t.data + step * direction[name])
    for bname, b in store.buffers().items():
        out.buffers()[bname] = b.copy()
    return out


def _global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    return float(np.sqrt(total))


def hypergradient(loss_fn, enc: ParameterStore, proj: ParameterStore,
                  sched: ParameterStore, enc_hat: ParameterStore,
                  proj_hat: ParameterStore, cfg: BilevelConfig):
    """Gradient of the post-lookahead loss with respect to the gate parameters.

    Returns (grads, outer_loss).
    """
    outer, (direct, v_enc, v_proj) = _eval_grads(
        loss_fn, enc_hat, proj_hat, sched, [sched, enc_hat, proj_hat])
    if cfg.mode == "first-order":
        return direct, outer

    result = {name: g.copy() for name, g in direct.items()}
    for base, hat_grads, lr, which in (
        (enc, v_enc, cfg.alpha, "encoder"),
        (proj, v_proj, cfg.beta, "head"),
    ):
        if base.num_values() == 0 or lr == 0.0:
            continue
        norm = _global_norm(hat_grads)
        if norm < 1e-12:
            log.warning("degenerate %s gradient norm; skipping its correction term", which)
            continue
        eps = cfg.fd_scale / norm
        if which == "encoder":
            _, (g_plus,) = _eval_grads(loss_fn, _shifted(base, hat_grads, eps), proj, sched, [sched])
            _, (g_minus,) = _eval_grads(loss_fn, _shifted(base, hat_grads, -eps), proj, sched, [sched])
        else:
            _, (g_plus,) = _eval_grads(loss_fn, enc, _shifted(base, hat_grads, eps), sched, [sched])
            _, (g_minus,) = _eval_grads(loss_fn, enc, _shifted(base, hat_grads, -eps), sched, [sched])
        for name in result:
            result[name] = result[name] - lr * (g_plus[name] - g_minus[name]) / (2 * eps)
    return result, outer


def meta_epoch(
    batches: list[ComplexBatch],
    params: CCNNParams,
    sp: SchedulerParams,
    cfg: CCNNConfig,
    loss_cfg: LossConfig,
    noise_cfg: NoiseConfig,
    zeta: float,
    bl_cfg: BilevelConfig,
    opt_sched: Adam,
    epoch: int,
    log_fn=None,
) -> float:
    """Second-stage pass: update only the gate, via lookahead hypergradients."""
    total = 0.0
    enc, proj, sched = params.encoder, params.projector, sp.store
    for step, batch in enumerate(batches):
        noise = draw_step_noise(batch, enc, noise_cfg.seed, epoch, step, stage=2)
        aux: dict = {}

        def loss_fn(e, p, s, _batch=batch, _noise=noise, _aux=aux):
            return contrastive_batch_loss(
                _batch, e, p, s, cfg, loss_cfg, noise_cfg.eta, zeta, _noise,
                training=True, update_running=False, aux=_aux)

        enc_hat, proj_hat, inner = lookahead_step(loss_fn, enc, proj, sched,
                                                  bl_cfg.alpha, bl_cfg.beta)
        grads, outer = hypergradient(loss_fn, enc, proj, sched, enc_hat, proj_hat, bl_cfg)
        sched.zero_grad()
        for name, t in sched.items():
            t.grad = grads[name]
        opt_sched.step(sched)
        for s in (enc, proj, sched):
            s.zero_grad()
        total += outer
        if log_fn is not None:
            log_fn(f"{epoch} 2 {step} {inner:.6f} {outer:.6f} {aux.get('mean_retain', 1.0):.4f}")
    return total / max(len(batches), 1)


def alternating_train(
    batches: list[ComplexBatch],
    params: CCNNParams,
    sp: SchedulerParams,
    cfg: CCNNConfig,
    loss_cfg: LossConfig,
    noise_cfg: NoiseConfig,
    bl_cfg: BilevelConfig,
    epochs: int,
    zeta: float = 1.0,
    lr: float = 1e-3,
    log_fn=None,
) -> None:
    """Standard epochs alternate with meta epochs until the epoch budget runs out."""
    opt_enc = Adam(lr=lr)
    opt_proj = Adam(lr=lr)
    opt_sched = Adam(lr=bl_cfg.outer_lr)
    for epoch in range(epochs):
        stage1 = train_epoch_standard(
            batches, params, sp, cfg, loss_cfg, noise_cfg, zeta,
            opt_enc, opt_proj, epoch,
            log_fn=(lambda line: log_fn(f"{epoch} 1 {line}")) if log_fn else None,
        )
        stage2 = meta_epoch(
            batches, params, sp, cfg, loss_cfg, noise_cfg, zeta, bl_cfg,
            opt_sched, epoch, log_fn=log_fn,
        )
        log.info("epoch %d stage1 %.6f stage2 %.6f", epoch, stage1, stage2)
