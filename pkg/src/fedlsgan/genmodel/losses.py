"""Least-squares and cross-entropy adversarial losses.

Every function accepts numpy arrays or torch tensors and returns the same
kind of scalar, so the training loop can differentiate through them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossCoding:
    """Targets for the least-squares losses: fake ``a``, real ``b``, generator ``c``."""

    a: float = 0.0
    b: float = 1.0
    c: float = 1.0


DEFAULT_CODING = LossCoding()


def _mean(x):
    if isinstance(x, torch.Tensor):
        return x.mean()
    return np.mean(np.asarray(x, dtype=float))


def _nonempty(*batches):
    for b in batches:
        if len(b) == 0:
            raise ValueError("loss needs a non-empty batch")


def _as_array(x):
    return x if isinstance(x, torch.Tensor) else np.asarray(x, dtype=float)


def d_loss_lsgan(scores_real, scores_fake, coding: LossCoding = DEFAULT_CODING):
    scores_real, scores_fake = _as_array(scores_real), _as_array(scores_fake)
    _nonempty(scores_real, scores_fake)
    return 0.5 * _mean((scores_real - coding.b) ** 2) + 0.5 * _mean((scores_fake - coding.a) ** 2)


def g_loss_lsgan(scores_fake, coding: LossCoding = DEFAULT_CODING):
    scores_fake = _as_array(scores_fake)
    _nonempty(scores_fake)
    return 0.5 * _mean((scores_fake - coding.c) ** 2)


def _clamp_log(p, one_minus: bool = False):
    if isinstance(p, torch.Tensor):
        p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
        return torch.log(1.0 - p) if one_minus else torch.log(p)
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return np.log(1.0 - p) if one_minus else np.log(p)


def d_loss_gan(p_real, p_fake):
    """``-mean(log p_real) - mean(log(1 - p_fake))`` with probabilities clamped to [eps, 1-eps]."""
    p_real, p_fake = _as_array(p_real), _as_array(p_fake)
    _nonempty(p_real, p_fake)
    return -_mean(_clamp_log(p_real)) - _mean(_clamp_log(p_fake, one_minus=True))


def g_loss_gan(p_fake):
    """Saturating generator loss ``mean(log(1 - p_fake))``."""
    p_fake = _as_array(p_fake)
    _nonempty(p_fake)
    return _mean(_clamp_log(p_fake, one_minus=True))


def optimal_lsgan_score(p_data, p_gen, coding: LossCoding = DEFAULT_CODING):
    """Pointwise minimizer of the discriminator loss for fixed densities."""
    p_data, p_gen = np.asarray(p_data, dtype=float), np.asarray(p_gen, dtype=float)
    return (coding.b * p_data + coding.a * p_gen) / (p_data + p_gen)
