"""Self-check routines behind the ``gradcheck`` and ``bilevel-check`` commands."""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .bilevel import BilevelConfig, hypergradient, lookahead_step
from .ccnn import CCNNConfig
from .contrastive import FrozenNoise, LossConfig, contrastive_batch_loss, perturbation_units
from .graph_io import FeatureMatrix, Graph
from .pipeline import init_model
from .ccnn import pack_batch
from .lift import build_neighborhoods, initial_cell_features, lift_graph
from .scheduler import batch_gumbel_noise
from .synth import gnp_random_graph


def finite_difference_grads(build_loss, stores, step: float = 1e-6):
    """Central finite differences of a scalar loss over every parameter entry."""
    out = {}
    for store in stores:
        grads = {}
        for name, t in store.items():
            g = np.zeros_like(t.data)
            flat = t.data.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = build_loss()
                flat[i] = orig - step
                down = build_loss()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * step)
            grads[name] = g
        out[store.name] = grads
    return out


def max_relative_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        rel = np.abs(a - n) / np.maximum.reduce([np.abs(a), np.abs(n), np.ones_like(a)])
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst


def _random_complex_batch(rng: np.random.Generator, in_dim: int):
    items = []
    for _ in range(2):
        while True:
            g = gnp_random_graph(int(rng.integers(4, 8)), 0.5, rng)
            if g.num_edges >= 3:
                break
        x = lift_graph(g, int(rng.integers(4, 7)))
        feats = FeatureMatrix(rng.normal(size=(g.num_nodes, in_dim)))
        items.append((x, build_neighborhoods(x), initial_cell_features(x, feats)))
    return pack_batch(items)


def full_pipeline_gradcheck(trials: int = 20, seed: int = 0, step: float = 1e-6) -> float:
    """Worst relative error of analytic vs numeric gradients of the batch loss.

    Exercises the whole differentiable path: message passing with
    normalization, trimmed readout through the Gumbel gate with frozen
    noise, projection and the contrastive objective, over all encoder,
    head and gate parameters.
    """
    rng = np.random.default_rng([seed, 99])
    cfg = CCNNConfig(num_layers=1, hidden_dim=2, proj_dim=3)
    loss_cfg = LossConfig(rho=0.2, batch_size=2)
    worst = 0.0
    for trial in range(trials):
        in_dim = 2
        batch = _random_complex_batch(rng, in_dim)
        params, sp = init_model(cfg, in_dim, seed=int(rng.integers(0, 2**31)))
        # differences are taken at a generic point: zero-initialized biases
        # would park relu inputs exactly on their kink (0 @ W + 0), where the
        # two-sided difference quotient measures the average slope
        for store in (params.encoder, params.projector, sp.store):
            for _, t in store.items():
                t.data[...] = rng.normal(scale=0.5, size=t.data.shape)
        noise = FrozenNoise(
            gumbel=batch_gumbel_noise(batch, [seed, trial, 3]),
            units=perturbation_units(params.encoder, [seed, trial, 5]),
        )
        stores = (params.encoder, params.projector, sp.store)
        # the augmented view is an input of the checked function, frozen
        # like the noise itself, so its constant features are precomputed
        from .ccnn import encode_core
        from .contrastive import perturb_with_units

        pert = perturb_with_units(params.encoder, 0.1, noise.units)
        pert_percell = encode_core(batch, pert, cfg, training=True, update_running=False)

        def build():
            return contrastive_batch_loss(
                batch, params.encoder, params.projector, sp.store, cfg, loss_cfg,
                eta=0.1, zeta=1.0, noise=noise, training=True, update_running=False,
                pert_store=pert, _pert_percell=pert_percell)

        for s in stores:
            s.zero_grad()
        loss = build()
        dc.backward(loss)
        analytic = {
            s.name: {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                     for n, t in s.items()}
            for s in stores
        }
        numeric = finite_difference_grads(lambda: build().item(), stores, step)
        for s in stores:
            worst = max(worst, max_relative_error(analytic[s.name], numeric[s.name]))
    return worst


def toy_bilevel_check(trials: int = 100, seed: int = 0) -> float:
    """Worst deviation of the second-order hypergradient from the closed form.

    Inner and outer losses are (theta - upsilon)^2; after the lookahead
    theta_hat = theta - 2 alpha (theta - upsilon), the exact derivative in
    upsilon is -2 (1 - 2 alpha)^2 (theta - upsilon).
    """
    rng = np.random.default_rng([seed, 17])
    worst = 0.0
    for _ in range(trials):
        theta0 = float(rng.normal())
        ups0 = float(rng.normal())
        alpha = float(rng.uniform(0.005, 0.395))
        enc = dc.ParameterStore("enc")
        enc.add("theta", np.array([theta0]))
        proj = dc.ParameterStore("proj")
        sched = dc.ParameterStore("sched")
        sched.add("upsilon", np.array([ups0]))

        def loss_fn(e, p, s):
            d = dc.sub(e["theta"], s["upsilon"])
            return dc.sum_all(dc.mul(d, d))

        cfg = BilevelConfig(alpha=alpha, beta=alpha, mode="second-order")
        enc_hat, proj_hat, _ = lookahead_step(loss_fn, enc, proj, sched, alpha, alpha)
        grads, _ = hypergradient(loss_fn, enc, proj, sched, enc_hat, proj_hat, cfg)
        exact = -2.0 * (1.0 - 2.0 * alpha) ** 2 * (theta0 - ups0)
        worst = max(worst, abs(float(grads["upsilon"][0]) - exact))
    return worst
