"""Functional DC-style generator and discriminator.

Networks are plain functions of a ``{name: tensor}`` mapping so that the
same parameters can be averaged, checkpointed and differentiated without
module objects in between.

Generator: FC(z -> c0*6*6) BN ReLU, TCONV4x4/2 (c0 -> c1) BN ReLU,
TCONV4x4/2 (c1 -> 1) sigmoid.
Discriminator: CONV4x4/2 (1 -> d0) LeakyReLU, CONV4x4/2 (d0 -> d1) BN
LeakyReLU, FC(d1*6*6 -> 1) with a linear output.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .params import DISCRIMINATOR, GENERATOR, ModelParams, NetConfig

TRAIN = "train"
EVAL = "eval"


class ShapeError(ValueError):
    pass


def to_tensors(params: ModelParams, dtype=torch.float32, requires_grad: bool = False) -> dict:
    out = {}
    for name, arr in params.entries.items():
        t = torch.tensor(np.asarray(arr), dtype=dtype)
        if requires_grad and name in params.trainable_names:
            t.requires_grad_(True)
        out[name] = t
    return out


def from_tensors(role: str, tensors: dict) -> ModelParams:
    return ModelParams(
        role, {n: t.detach().to(torch.float64).numpy().copy() for n, t in tensors.items()}
    )


def _bn(h, t, prefix, cfg: NetConfig, training: bool):
    return F.batch_norm(
        h,
        t[f"{prefix}.running_mean"],
        t[f"{prefix}.running_var"],
        t[f"{prefix}.weight"],
        t[f"{prefix}.bias"],
        training=training,
        momentum=cfg.bn_momentum,
        eps=cfg.bn_eps,
    )


def g_apply(t: dict, z, labels, cfg: NetConfig, training: bool):
    """Generator on tensors; returns ``(m, 1, side, side)`` in [0, 1].

    In training mode the running batch-norm statistics held in ``t`` are
    updated in place.
    """
    if cfg.conditional:
        z = torch.cat([z, labels], dim=1)
    s = cfg.base_side
    c0, c1 = cfg.g_channels
    h = F.linear(z, t["g.fc.weight"], t["g.fc.bias"]).view(-1, c0, s, s)
    h = F.relu(_bn(h, t, "g.bn0", cfg, training))
    h = F.conv_transpose2d(h, t["g.tconv1.weight"], t["g.tconv1.bias"], stride=2, padding=1)
    h = F.relu(_bn(h, t, "g.bn1", cfg, training))
    h = F.conv_transpose2d(h, t["g.tconv2.weight"], t["g.tconv2.bias"], stride=2, padding=1)
    return torch.sigmoid(h)


def d_apply(t: dict, x, labels, cfg: NetConfig, training: bool):
    """Discriminator on tensors; ``x`` is ``(m, 1, side, side)``, returns ``(m,)`` scores."""
    if cfg.conditional:
        planes = labels[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        x = torch.cat([x, planes], dim=1)
    slope = cfg.leaky_slope
    h = F.leaky_relu(F.conv2d(x, t["d.conv1.weight"], t["d.conv1.bias"], stride=2, padding=1), slope)
    h = F.conv2d(h, t["d.conv2.weight"], t["d.conv2.bias"], stride=2, padding=1)
    h = F.leaky_relu(_bn(h, t, "d.bn2", cfg, training), slope)
    return F.linear(h.flatten(1), t["d.fc.weight"], t["d.fc.bias"]).view(-1)


def _check_labels(labels, m: int, cfg: NetConfig):
    if not cfg.conditional:
        if labels is not None:
            raise ShapeError("labels given to an unconditional network")
        return None
    if labels is None:
        raise ShapeError("a conditional network needs labels")
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (m, cfg.n_labels):
        raise ShapeError(f"labels must have shape ({m}, {cfg.n_labels}), got {labels.shape}")
    return labels


def _check_mode(mode: str) -> bool:
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == TRAIN


def _generator(params_G, noise, labels, mode, config):
    if params_G.role != GENERATOR:
        raise ShapeError("expected generator parameters")
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 2 or noise.shape[1] != config.noise_dim:
        raise ShapeError(f"noise must have shape (m, {config.noise_dim}), got {noise.shape}")
    labels = _check_labels(labels, noise.shape[0], config)
    training = _check_mode(mode)
    t = to_tensors(params_G, torch.float64)
    with torch.no_grad():
        lab = None if labels is None else torch.from_numpy(labels)
        out = g_apply(t, torch.from_numpy(noise), lab, config, training)
    grids = out[:, 0].numpy().copy()
    return grids, from_tensors(GENERATOR, t)


def _discriminator(params_D, grids, labels, mode, config):
    if params_D.role != DISCRIMINATOR:
        raise ShapeError("expected discriminator parameters")
    grids = np.asarray(grids, dtype=float)
    side = config.grid_side
    if grids.ndim == 2 and grids.shape[1] == side * side:
        grids = grids.reshape(-1, side, side)
    if grids.ndim != 3 or grids.shape[1:] != (side, side):
        raise ShapeError(f"grids must have shape (m, {side}, {side}), got {grids.shape}")
    labels = _check_labels(labels, grids.shape[0], config)
    training = _check_mode(mode)
    t = to_tensors(params_D, torch.float64)
    with torch.no_grad():
        lab = None if labels is None else torch.from_numpy(labels)
        scores = d_apply(t, torch.from_numpy(grids)[:, None], lab, config, training)
    return scores.numpy().copy(), from_tensors(DISCRIMINATOR, t)


def generator_forward(params_G: ModelParams, noise, labels=None, mode: str = EVAL, *,
                      config: NetConfig) -> np.ndarray:
    """Map an ``(m, noise_dim)`` noise batch to ``(m, side, side)`` grids in [0, 1]."""
    return _generator(params_G, noise, labels, mode, config)[0]


def generator_forward_train(params_G, noise, labels=None, *, config):
    """Train-mode forward that also returns the updated running statistics."""
    return _generator(params_G, noise, labels, TRAIN, config)


def discriminator_forward(params_D: ModelParams, grids, labels=None, mode: str = EVAL, *,
                          config: NetConfig) -> np.ndarray:
    """One unbounded real score per grid."""
    return _discriminator(params_D, grids, labels, mode, config)[0]


def discriminator_forward_train(params_D, grids, labels=None, *, config):
    return _discriminator(params_D, grids, labels, TRAIN, config)
