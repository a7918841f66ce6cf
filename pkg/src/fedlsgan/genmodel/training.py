"""One local epoch of adversarial training and scenario sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..data import ClientDataset
from .losses import DEFAULT_CODING, LossCoding, d_loss_gan, d_loss_lsgan, g_loss_gan, g_loss_lsgan
from .nets import EVAL, d_apply, from_tensors, g_apply, generator_forward, to_tensors
from .optim import OptState, adam_update, opt_to_numpy, opt_to_tensors
from .params import DISCRIMINATOR, GENERATOR, ModelParams, NetConfig

LOSSES = ("lsgan", "gan")


@dataclass(frozen=True)
class EpochResult:
    params_G: ModelParams
    params_D: ModelParams
    opt_G: OptState
    opt_D: OptState
    loss_trace: tuple[tuple[float, float], ...]

    @property
    def mean_losses(self) -> tuple[float, float]:
        trace = np.asarray(self.loss_trace)
        return float(trace[:, 0].mean()), float(trace[:, 1].mean())


def _adam_tensors(t: dict, opt: OptState):
    names = list(opt.m)
    return names, [t[n] for n in names]


def _apply_update(t: dict, names, grads, opt: OptState):
    with torch.no_grad():
        new, opt = adam_update(t, dict(zip(names, grads)), opt)
    for n in names:
        new[n].requires_grad_(True)
    return new, opt


def local_train_epoch(
    client: ClientDataset,
    params_G: ModelParams,
    params_D: ModelParams,
    opt_G: OptState,
    opt_D: OptState,
    coding: LossCoding = DEFAULT_CODING,
    m: int = 32,
    seed=0,
    *,
    net: NetConfig,
    loss: str = "lsgan",
    dtype=torch.float32,
) -> EpochResult:
    """One pass over the client's training windows.

    Each of the ``len(train) // m`` minibatches does one discriminator update on
    (real batch, fresh fake batch) followed by one generator update on a fresh
    noise batch. Minibatch order and all noise come from ``seed``.
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
    data = client.train_array
    n = len(data)
    if n < m:
        raise ValueError(f"client {client.client_id}: {n} training windows < batch size {m}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)

    tg = to_tensors(params_G, dtype, requires_grad=True)
    td = to_tensors(params_D, dtype, requires_grad=True)
    og = opt_to_tensors(opt_G, dtype)
    od = opt_to_tensors(opt_D, dtype)
    labels = None
    if net.conditional:
        labels = torch.tensor(np.tile(client.label, (m, 1)), dtype=dtype)

    trace = []
    for b in range(n // m):
        real = torch.tensor(data[order[b * m:(b + 1) * m]], dtype=dtype)[:, None]

        z = torch.tensor(rng.standard_normal((m, net.noise_dim)), dtype=dtype)
        with torch.no_grad():
            fake = g_apply(tg, z, labels, net, training=True)
        s_real = d_apply(td, real, labels, net, training=True)
        s_fake = d_apply(td, fake, labels, net, training=True)
        if loss == "lsgan":
            l_d = d_loss_lsgan(s_real, s_fake, coding)
        else:
            l_d = d_loss_gan(torch.sigmoid(s_real), torch.sigmoid(s_fake))
        names, leaves = _adam_tensors(td, od)
        td, od = _apply_update(td, names, torch.autograd.grad(l_d, leaves), od)

        z = torch.tensor(rng.standard_normal((m, net.noise_dim)), dtype=dtype)
        s_gen = d_apply(td, g_apply(tg, z, labels, net, training=True), labels, net, training=True)
        if loss == "lsgan":
            l_g = g_loss_lsgan(s_gen, coding)
        else:
            l_g = g_loss_gan(torch.sigmoid(s_gen))
        names, leaves = _adam_tensors(tg, og)
        tg, og = _apply_update(tg, names, torch.autograd.grad(l_g, leaves), og)

        trace.append((l_d.item(), l_g.item()))

    return EpochResult(
        params_G=from_tensors(GENERATOR, tg),
        params_D=from_tensors(DISCRIMINATOR, td),
        opt_G=opt_to_numpy(og),
        opt_D=opt_to_numpy(od),
        loss_trace=tuple(trace),
    )


def sample_noise(n: int, noise_dim: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, noise_dim))


def generate(params_G: ModelParams, n: int, seed, *, net: NetConfig, label: int | None = None,
             noise: np.ndarray | None = None, batch: int = 256) -> np.ndarray:
    """Draw ``n`` eval-mode scenarios, flattened to ``(n, side*side)``.

    Passing the same ``noise`` for several labels of a conditional model
    gives scenarios that share their latent draw.
    """
    if noise is None:
        noise = sample_noise(n, net.noise_dim, seed)
    out = []
    for s in range(0, n, batch):
        z = noise[s:s + batch]
        labels = None
        if net.conditional:
            if label is None:
                raise ValueError("a conditional model needs a label to generate")
            labels = np.zeros((len(z), net.n_labels))
            labels[:, label] = 1.0
        out.append(generator_forward(params_G, z, labels, EVAL, config=net))
    return np.concatenate(out).reshape(n, -1)
