"""Small fixtures shared across test modules."""
from datetime import datetime

import numpy as np

from fedlsgan import data
from fedlsgan.genmodel import NetConfig

TINY = NetConfig(noise_dim=4, g_channels=(2, 2), d_channels=(2, 2))


def random_client(cid=0, n_clients=1, n_windows=40, seed=0):
    """Uniform-noise site; 40 windows leave 32 for training, one batch of 32."""
    vals = np.random.default_rng([seed, cid]).random(n_windows * 576)
    ts = data.TimeSeries(f"site{cid}", datetime(2020, 1, 1), vals)
    return data.build_client(ts, cid, n_clients)


def random_clients(n, n_windows=40, seed=0):
    return [random_client(i, n, n_windows, seed) for i in range(n)]


# -- acceptance reporting -----------------------------------------------------

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- finite-difference gradient check -------------------------------------------

def _loss_fns(cfg):
    import torch
    from fedlsgan.genmodel import d_loss_gan, d_loss_lsgan, g_loss_gan, g_loss_lsgan
    from fedlsgan.genmodel.nets import d_apply, g_apply

    def G(t, z):
        return g_apply(t, z, None, cfg, True)

    def Dsc(t, x):
        return d_apply(t, x, None, cfg, True)

    return {
        "lsgan_d": lambda tg, td, z, x: d_loss_lsgan(Dsc(td, x), Dsc(td, G(tg, z))),
        "lsgan_g": lambda tg, td, z, x: g_loss_lsgan(Dsc(td, G(tg, z))),
        "gan_d": lambda tg, td, z, x: d_loss_gan(torch.sigmoid(Dsc(td, x)),
                                                 torch.sigmoid(Dsc(td, G(tg, z)))),
        "gan_g": lambda tg, td, z, x: g_loss_gan(torch.sigmoid(Dsc(td, G(tg, z)))),
    }


def gradient_check(which, cfg=TINY, h=1e-4, rel=1e-3, per_tensor=6, seed=1):
    """Compare autograd against central differences on a few coordinates per tensor.

    Returns ``(n_checked, failures)``; a coordinate passes when the two agree
    to ``rel`` relative error, or both are below 1e-9 in absolute terms.
    """
    import torch
    from fedlsgan.genmodel import init_params
    from fedlsgan.genmodel.nets import to_tensors

    fn = _loss_fns(cfg)[which]
    Gp, Dp = init_params(cfg, 3)
    # scaled-up weights keep gradients well above round-off
    Gp, Dp = Gp.map(lambda a: a * 10), Dp.map(lambda a: a * 10)
    rng = np.random.default_rng(seed)
    z = torch.tensor(rng.standard_normal((6, cfg.noise_dim)))
    x = torch.tensor(rng.random((6, 1, cfg.grid_side, cfg.grid_side)))

    def loss_at(flat):
        # training-mode batch norm writes its buffers, so work on clones
        t = {k: v.detach().clone() for k, v in flat.items()}
        return fn({k: v for k, v in t.items() if k.startswith("g.")},
                  {k: v for k, v in t.items() if k.startswith("d.")}, z, x)

    tg = to_tensors(Gp, torch.float64, requires_grad=True)
    td = to_tensors(Dp, torch.float64, requires_grad=True)
    loss = fn({k: v.clone() if not v.requires_grad else v for k, v in tg.items()},
              {k: v.clone() if not v.requires_grad else v for k, v in td.items()}, z, x)
    leaves = {**{n: tg[n] for n in Gp.trainable_names}, **{n: td[n] for n in Dp.trainable_names}}
    grads = torch.autograd.grad(loss, list(leaves.values()), allow_unused=True)
    base = {**tg, **td}

    checked, failures = 0, []
    for (name, leaf), g in zip(leaves.items(), grads):
        g = torch.zeros_like(leaf) if g is None else g
        for idx in rng.choice(leaf.numel(), size=min(per_tensor, leaf.numel()), replace=False):
            plus = {k: v.detach().clone() for k, v in base.items()}
            minus = {k: v.detach().clone() for k, v in base.items()}
            plus[name].view(-1)[idx] += h
            minus[name].view(-1)[idx] -= h
            with torch.no_grad():
                fd = (loss_at(plus) - loss_at(minus)).item() / (2 * h)
            an = g.reshape(-1)[idx].item()
            err = abs(an - fd)
            checked += 1
            if not (err <= rel * max(abs(an), abs(fd)) or err < 1e-9):
                failures.append((name, int(idx), an, fd))
    return checked, failures


# -- privacy witness ------------------------------------------------------------

class SpyClient:
    """Wraps a client dataset and logs every read of its windows with the caller side."""

    WINDOW_FIELDS = {"train", "test", "train_array", "test_array"}

    def __init__(self, inner, log):
        self._inner = inner
        self._log = log

    def __getattr__(self, name):
        if name in self.WINDOW_FIELDS:
            import inspect
            from fedlsgan.federation import ClientWorker

            client_side = any(
                f.function == "local_train_epoch"
                or isinstance(f.frame.f_locals.get("self"), ClientWorker)
                for f in inspect.stack(context=0)[1:]
            )
            self._log.append((name, client_side))
        return getattr(self._inner, name)


def recording_transport():
    from fedlsgan.federation import Transport

    class RecordingTransport(Transport):
        def __init__(self):
            super().__init__()
            self.sent = []

        def send_params(self, receiver, msg):
            self.sent.append((receiver, msg))
            super().send_params(receiver, msg)

    return RecordingTransport()


def privacy_violations(clients, log, transport):
    """Everything the instrumented run did that would move data off a client."""
    from fedlsgan.federation import ParamMessage, Transport
    from fedlsgan.genmodel import ModelParams

    problems = [f"server-side read of {n}" for n, ok in log if not ok]
    if not log:
        problems.append("spy saw no reads")
    windows = {c.train_array[i].tobytes() for c in clients for i in range(len(c.train))}
    for receiver, msg in transport.sent:
        if receiver != Transport.SERVER or type(msg) is not ParamMessage:
            problems.append(f"unexpected message {type(msg).__name__} to {receiver}")
            continue
        for p in (msg.params_G, msg.params_D):
            if type(p) is not ModelParams:
                problems.append(f"payload type {type(p).__name__}")
            elif any(p[n].tobytes() in windows for n in p.names):
                problems.append("payload carries a window")
    if not transport.sent:
        problems.append("no messages were sent")
    return problems
