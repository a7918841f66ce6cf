"""Adam with bias correction, written as a pure function over named arrays."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .params import ModelParams


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


@dataclass(frozen=True)
class OptState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, params: ModelParams, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8) -> "OptState":
        names = params.trainable_names
        return cls(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0,
            m={n: np.zeros_like(params[n]) for n in names},
            v={n: np.zeros_like(params[n]) for n in names},
        )

    def copy(self) -> "OptState":
        return replace(
            self,
            m={n: np.array(a, copy=True) for n, a in self.m.items()},
            v={n: np.array(a, copy=True) for n, a in self.v.items()},
        )


def _all_finite(g) -> bool:
    if isinstance(g, torch.Tensor):
        return bool(torch.isfinite(g).all())
    return bool(np.all(np.isfinite(g)))


def adam_update(entries: dict, grads: dict, opt: OptState) -> tuple[dict, OptState]:
    """One Adam step on ``{name: array}`` (numpy or torch); returns new objects.

    Only names present in ``opt.m`` are updated; other entries pass through.
    """
    for name in opt.m:
        if name not in grads:
            raise KeyError(f"missing gradient for parameter {name!r}")
        if not _all_finite(grads[name]):
            raise NonFiniteGradientError(name)
    t = opt.t + 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new = dict(entries)
    m_new, v_new = {}, {}
    for name in opt.m:
        g = grads[name]
        m = b1 * opt.m[name] + (1.0 - b1) * g
        v = b2 * opt.v[name] + (1.0 - b2) * g * g
        sq = v.sqrt() if isinstance(v, torch.Tensor) else np.sqrt(v)
        new[name] = entries[name] - opt.lr * (m / c1) / (sq / math.sqrt(c2) + opt.eps)
        m_new[name] = m
        v_new[name] = v
    return new, replace(opt, t=t, m=m_new, v=v_new)


def adam_step(params: ModelParams, grads: dict, opt: OptState) -> tuple[ModelParams, OptState]:
    for name in opt.m:
        if name in params.entries and np.shape(grads.get(name, params[name])) != np.shape(params[name]):
            raise ValueError(f"gradient shape mismatch for {name!r}")
    entries, opt = adam_update(params.entries, grads, opt)
    return ModelParams(params.role, entries), opt


def opt_to_tensors(opt: OptState, dtype=torch.float32) -> OptState:
    return replace(
        opt,
        m={n: torch.tensor(a, dtype=dtype) for n, a in opt.m.items()},
        v={n: torch.tensor(a, dtype=dtype) for n, a in opt.v.items()},
    )


def opt_to_numpy(opt: OptState) -> OptState:
    def conv(a):
        return a.detach().to(torch.float64).numpy().copy() if isinstance(a, torch.Tensor) else a

    return replace(opt, m={n: conv(a) for n, a in opt.m.items()},
                   v={n: conv(a) for n, a in opt.v.items()})
