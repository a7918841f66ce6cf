"""Comparison methods: Gaussian copula and centralized (non-federated) GAN training."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from . import container
from .data import ClientDataset, NormStats, ScenarioWindow, one_hot
from .federation import FederationConfig, client_epoch_seed, fresh_client_state
from .genmodel import (
    DEFAULT_CODING,
    LossCoding,
    ModelParams,
    NetConfig,
    init_params,
    local_train_epoch,
)

PSD_FLOOR = 1e-10


@dataclass(frozen=True)
class CopulaModel:
    """Empirical marginals plus a Gaussian dependence structure.

    ``tables[:, j]`` holds the sorted training values of dimension ``j`` and
    ``positions`` the matching plotting positions ``rank / (n + 1)``.
    """

    tables: np.ndarray
    positions: np.ndarray
    corr: np.ndarray
    degenerate: np.ndarray

    @property
    def dim(self) -> int:
        return self.tables.shape[1]

    def save(self, path) -> None:
        container.save(
            path,
            {"tables": self.tables, "positions": self.positions, "corr": self.corr,
             "degenerate": self.degenerate.astype(float)},
            {"kind": "gaussian_copula"},
        )

    @classmethod
    def load(cls, path) -> "CopulaModel":
        entries, meta = container.load(path)
        if meta.get("kind") != "gaussian_copula":
            raise container.ContainerError(f"{path} is not a copula model")
        return cls(entries["tables"], entries["positions"], entries["corr"],
                   entries["degenerate"].astype(bool))


def repair_correlation(corr: np.ndarray, floor: float = PSD_FLOOR) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale back to a unit diagonal."""
    sym = (corr + corr.T) / 2
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() >= floor:
        fixed = sym
    else:
        fixed = (vecs * np.clip(vals, floor, None)) @ vecs.T
    scale = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(scale, scale)
    fixed = (fixed + fixed.T) / 2
    np.fill_diagonal(fixed, 1.0)
    return fixed


def fit_copula(train) -> CopulaModel:
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or len(x) < 10:
        raise ValueError("copula fit needs a 2-D array with at least 10 scenarios")
    n, d = x.shape
    tables = np.sort(x, axis=0)
    positions = np.arange(1, n + 1) / (n + 1)
    degenerate = tables[0] == tables[-1]
    u = rankdata(x, axis=0) / (n + 1)
    z = norm.ppf(u)
    z[:, degenerate] = 0.0
    corr = np.eye(d)
    live = ~degenerate
    if live.sum() > 1:
        corr[np.ix_(live, live)] = np.corrcoef(z[:, live], rowvar=False)
    return CopulaModel(tables, positions, repair_correlation(corr), degenerate)


def sample_copula(model: CopulaModel, n: int, seed) -> np.ndarray:
    """Inverse-transform sampling; values never leave the training range."""
    rng = np.random.default_rng(seed)
    vals, vecs = np.linalg.eigh(model.corr)
    root = vecs * np.sqrt(np.clip(vals, 0, None))
    z = rng.standard_normal((n, model.dim)) @ root.T
    u = norm.cdf(z)
    out = np.empty_like(u)
    for j in range(model.dim):
        if model.degenerate[j]:
            out[:, j] = model.tables[0, j]
        else:
            out[:, j] = np.interp(u[:, j], model.positions, model.tables[:, j])
    return out


def daily_profiles(windows: np.ndarray, points: int = 24) -> np.ndarray:
    """Reduce flattened windows to ``points``-long daily mean profiles (one row per day)."""
    x = np.asarray(windows, dtype=float).reshape(len(windows), -1)
    per_day = 288
    days = x.reshape(-1, per_day)
    return days.reshape(len(days), points, per_day // points).mean(axis=2)


def pooled_client(windows: Sequence[ScenarioWindow] | np.ndarray, site_id: str = "pooled") -> ClientDataset:
    """Wrap pooled training windows as a single client 0."""
    if isinstance(windows, np.ndarray):
        windows = [ScenarioWindow(g, site_id, datetime(2000, 1, 1)) for g in windows]
    return ClientDataset(0, tuple(windows), (), NormStats(0.0, 1.0), one_hot(0, 1), site_id)


def train_centralized(
    all_data: Sequence[ScenarioWindow] | np.ndarray | ClientDataset,
    net: NetConfig,
    loss: str = "lsgan",
    epochs: int = 100,
    seed: int = 0,
    *,
    m: int = 32,
    lr: float = 2e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    coding: LossCoding = DEFAULT_CODING,
    history: list | None = None,
) -> tuple[ModelParams, ModelParams]:
    """Single-trainer loop over the pooled data, using the local epoch machinery.

    Seeds are derived exactly as for client 0 of a federation, so with the
    LSGAN loss this matches a one-client federated run with ``K = 1``.
    """
    client = all_data if isinstance(all_data, ClientDataset) else pooled_client(all_data)
    fed = FederationConfig(W=max(epochs, 1), K=1, E=1.0, m=m, lr=lr, beta1=beta1, beta2=beta2,
                           seed=seed)
    g, d = init_params(net, seed)
    state = fresh_client_state(g, d, fed)
    for w in range(1, epochs + 1):
        res = local_train_epoch(client, state.params_G, state.params_D, state.opt_G, state.opt_D,
                                coding, m, client_epoch_seed(seed, w, 0), net=net, loss=loss)
        state = type(state)(res.params_G, res.params_D, res.opt_G, res.opt_D)
        if history is not None:
            history.append((w, *res.mean_losses))
    return state.params_G, state.params_D
