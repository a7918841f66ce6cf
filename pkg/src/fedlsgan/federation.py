"""Server-side orchestration of federated LSGAN training.

The server only ever handles :class:`ModelParams`. Client data stays inside
:class:`ClientWorker` and is read only by its local epoch; parameters move
through a :class:`Transport`, which rejects any other payload type.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import ClientDataset
from .genmodel import (
    DEFAULT_CODING,
    LossCoding,
    ModelParams,
    NetConfig,
    OptState,
    SchemaError,
    init_params,
    local_train_epoch,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

_CLIENT_STREAM = 1
_SELECT_STREAM = 2


@dataclass(frozen=True)
class FederationConfig:
    W: int = 1000
    K: int = 100
    E: float = 1.0
    m: int = 32
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.W >= self.K >= 1:
            raise ValueError(f"need W >= K >= 1, got W={self.W} K={self.K}")
        if not 0 < self.E <= 1:
            raise ValueError(f"client fraction E must be in (0, 1], got {self.E}")
        if self.m < 1 or self.workers < 1:
            raise ValueError("batch size and worker count must be positive")


@dataclass(frozen=True)
class ClientState:
    params_G: ModelParams
    params_D: ModelParams
    opt_G: OptState
    opt_D: OptState


@dataclass(frozen=True)
class HistoryRecord:
    epoch: int
    client_id: int
    loss_d: float
    loss_g: float
    synced: bool = False


@dataclass
class FederationState:
    w: int
    server_G: ModelParams
    server_D: ModelParams
    clients: list[ClientState]
    history: list[HistoryRecord] = field(default_factory=list)
    sync_epochs: list[int] = field(default_factory=list)
    selected: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def client_losses(self, client_id: int) -> np.ndarray:
        """``(n_epochs_trained, 2)`` array of per-epoch mean (L_D, L_G)."""
        rows = [(r.loss_d, r.loss_g) for r in self.history if r.client_id == client_id]
        return np.asarray(rows).reshape(-1, 2)

    def mean_loss_by_epoch(self) -> np.ndarray:
        """``(W, 2)`` mean over the clients that trained in each epoch."""
        by_epoch: dict[int, list] = {}
        for r in self.history:
            by_epoch.setdefault(r.epoch, []).append((r.loss_d, r.loss_g))
        return np.asarray([np.mean(by_epoch[w], axis=0) for w in sorted(by_epoch)])


class ClientTrainingError(RuntimeError):
    def __init__(self, client_id: int, cause: Exception):
        super().__init__(f"client {client_id}: {cause}")
        self.client_id = client_id


# -- transport ----------------------------------------------------------------

@dataclass(frozen=True)
class ParamMessage:
    sender: int
    epoch: int
    params_G: ModelParams
    params_D: ModelParams


class PayloadError(TypeError):
    pass


class Transport:
    """In-process mailbox between clients and server, parameters only."""

    SERVER = -1

    def __init__(self):
        self._boxes: dict[int, list[ParamMessage]] = {}

    def _check(self, msg):
        if not isinstance(msg, ParamMessage):
            raise PayloadError(f"transport carries ParamMessage only, got {type(msg).__name__}")
        for p in (msg.params_G, msg.params_D):
            if not isinstance(p, ModelParams):
                raise PayloadError(f"parameter payload must be ModelParams, got {type(p).__name__}")

    def send_params(self, receiver: int, msg: ParamMessage) -> None:
        self._check(msg)
        # by-value hand-off
        msg = replace(msg, params_G=msg.params_G.copy(), params_D=msg.params_D.copy())
        self._boxes.setdefault(receiver, []).append(msg)

    def recv_params(self, receiver: int) -> list[ParamMessage]:
        return self._boxes.pop(receiver, [])


# -- client -------------------------------------------------------------------

def client_epoch_seed(seed: int, w: int, client_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, _CLIENT_STREAM, w, client_id])


class ClientWorker:
    """A site: private data plus its local model and optimizer state."""

    def __init__(self, dataset: ClientDataset, state: ClientState):
        self._dataset = dataset
        self.client_id = dataset.client_id
        self.state = state

    def train_epoch(self, w: int, fed: FederationConfig, net: NetConfig,
                    coding: LossCoding = DEFAULT_CODING, loss: str = "lsgan") -> tuple[float, float]:
        s = self.state
        try:
            res = local_train_epoch(
                self._dataset, s.params_G, s.params_D, s.opt_G, s.opt_D, coding, fed.m,
                client_epoch_seed(fed.seed, w, self.client_id), net=net, loss=loss,
            )
        except Exception as exc:
            raise ClientTrainingError(self.client_id, exc) from exc
        self.state = ClientState(res.params_G, res.params_D, res.opt_G, res.opt_D)
        return res.mean_losses

    @property
    def n_train(self) -> int:
        return len(self._dataset.train)

    def upload(self, transport: Transport, w: int) -> None:
        transport.send_params(
            Transport.SERVER, ParamMessage(self.client_id, w, self.state.params_G, self.state.params_D)
        )

    def receive(self, params_G: ModelParams, params_D: ModelParams) -> None:
        self.state = replace(self.state, params_G=params_G.copy(), params_D=params_D.copy())


# -- server operations ----------------------------------------------------------

def select_clients(n_clients: int, E: float, rng: np.random.Generator) -> tuple[int, ...]:
    """Draw ``max(1, round(E * n))`` distinct client ids uniformly without replacement."""
    if n_clients < 1:
        raise ValueError("need at least one client")
    n_e = min(n_clients, max(1, int(round(E * n_clients))))
    return tuple(sorted(int(i) for i in rng.choice(n_clients, size=n_e, replace=False)))


def aggregate(param_sets: Sequence[ModelParams]) -> ModelParams:
    """Unweighted element-wise mean per named tensor."""
    if not param_sets:
        raise ValueError("nothing to aggregate")
    first = param_sets[0]
    for p in param_sets[1:]:
        if p.schema() != first.schema():
            raise SchemaError("cannot aggregate parameter sets with different schemas")
    n = len(param_sets)
    return ModelParams(
        first.role,
        {name: sum(np.asarray(p[name], dtype=np.float64) for p in param_sets) / n for name in first},
    )


def broadcast(server_params: tuple[ModelParams, ModelParams], state: FederationState) -> FederationState:
    """Overwrite every client's G/D with the server copy; optimizer state is kept."""
    g, d = server_params
    for c in state.clients:
        c.params_G.check_same_schema(g)
        c.params_D.check_same_schema(d)
    clients = [replace(c, params_G=g.copy(), params_D=d.copy()) for c in state.clients]
    return replace(state, server_G=g, server_D=d, clients=clients,
                   sync_epochs=state.sync_epochs + [state.w])


def delta_accuracy(v_sum: float, v_fed: float) -> float:
    return abs(v_sum - v_fed)


def fresh_client_state(g: ModelParams, d: ModelParams, fed: FederationConfig) -> ClientState:
    return ClientState(
        g.copy(), d.copy(),
        OptState.fresh(g, fed.lr, fed.beta1, fed.beta2),
        OptState.fresh(d, fed.lr, fed.beta1, fed.beta2),
    )


def run_federated(
    clients: Sequence[ClientDataset],
    net: NetConfig,
    fed: FederationConfig,
    *,
    coding: LossCoding = DEFAULT_CODING,
    transport: Transport | None = None,
    on_sync: Callable[[int, ModelParams, ModelParams], None] | None = None,
    on_epoch: Callable[[int, FederationState], None] | None = None,
) -> tuple[ModelParams, ModelParams, FederationState]:
    """Federated LSGAN training loop.

    Every epoch ``w`` a random ``E`` fraction of clients runs one local epoch;
    when ``w % K == 0`` the server averages the selected clients' G and D and
    sends the result to all clients.
    """
    if not clients:
        raise ValueError("need at least one client")
    ids = [c.client_id for c in clients]
    if sorted(ids) != list(range(len(clients))):
        raise ValueError(f"client ids must be 0..{len(clients) - 1}, got {ids}")
    transport = transport or Transport()

    g0, d0 = init_params(net, fed.seed)
    workers = {c.client_id: ClientWorker(c, fresh_client_state(g0, d0, fed))
               for c in sorted(clients, key=lambda c: c.client_id)}
    for cid, wk in workers.items():
        if wk.n_train < fed.m:
            raise ValueError(f"client {cid}: {wk.n_train} training windows < m={fed.m}")
    state = FederationState(w=0, server_G=g0, server_D=d0,
                            clients=[workers[i].state for i in sorted(workers)])
    pool = ThreadPoolExecutor(fed.workers) if fed.workers > 1 else None
    try:
        for w in range(1, fed.W + 1):
            selected = select_clients(len(workers), fed.E,
                                      np.random.default_rng([fed.seed, _SELECT_STREAM, w]))

            def train(cid, w=w):
                return workers[cid].train_epoch(w, fed, net, coding)

            if pool is None:
                losses = [train(cid) for cid in selected]
            else:
                losses = list(pool.map(train, selected))
            synced = w % fed.K == 0
            history = state.history + [
                HistoryRecord(w, cid, ld, lg, synced) for cid, (ld, lg) in zip(selected, losses)
            ]
            state = replace(state, w=w, history=history,
                            clients=[workers[i].state for i in sorted(workers)],
                            selected={**state.selected, w: selected})
            if synced:
                for cid in selected:
                    workers[cid].upload(transport, w)
                msgs = transport.recv_params(Transport.SERVER)
                g = aggregate([m.params_G for m in msgs])
                d = aggregate([m.params_D for m in msgs])
                state = broadcast((g, d), state)
                for cid in sorted(workers):
                    workers[cid].receive(g, d)
                if on_sync is not None:
                    on_sync(w, g, d)
            if on_epoch is not None:
                on_epoch(w, state)
    finally:
        if pool is not None:
            pool.shutdown()
    return state.server_G, state.server_D, state


# -- run artifacts --------------------------------------------------------------

def write_history_csv(path, state: FederationState) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "client_id", "L_D", "L_G", "synced"])
        for r in state.history:
            w.writerow([r.epoch, r.client_id, repr(r.loss_d), repr(r.loss_g), int(r.synced)])


def read_history_csv(path) -> list[HistoryRecord]:
    with Path(path).open(newline="") as fh:
        return [
            HistoryRecord(int(r["epoch"]), int(r["client_id"]), float(r["L_D"]), float(r["L_G"]),
                          bool(int(r["synced"])))
            for r in csv.DictReader(fh)
        ]


def checkpoint_writer(run_dir, net: NetConfig) -> Callable[[int, ModelParams, ModelParams], None]:
    """``on_sync`` callback that writes ``checkpoints/sync_<w>.flgc``."""
    ckpt_dir = Path(run_dir) / "checkpoints"

    def write(w, g, d):
        save_checkpoint(ckpt_dir / f"sync_{w:06d}.flgc", g, d, net, {"epoch": w})

    return write


def write_run_config(path, net: NetConfig, fed: FederationConfig, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"net": net.to_dict(), "federation": asdict(fed), **(extra or {})}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
