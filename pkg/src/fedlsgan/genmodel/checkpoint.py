"""Generator/discriminator checkpoints in the shared container format."""
from __future__ import annotations

from .. import container
from .params import DISCRIMINATOR, GENERATOR, ModelParams, NetConfig


def save_checkpoint(path, params_G: ModelParams, params_D: ModelParams, net: NetConfig,
                    extra: dict | None = None) -> None:
    entries = {**params_G.entries, **params_D.entries}
    meta = {
        "kind": "gan_checkpoint",
        "net": net.to_dict(),
        "generator": params_G.names,
        "discriminator": params_D.names,
        **(extra or {}),
    }
    container.save(path, entries, meta)


def load_checkpoint(path) -> tuple[ModelParams, ModelParams, NetConfig, dict]:
    entries, meta = container.load(path)
    if meta.get("kind") != "gan_checkpoint":
        raise container.ContainerError(f"{path} is not a GAN checkpoint")
    g = ModelParams(GENERATOR, {n: entries[n] for n in meta["generator"]})
    d = ModelParams(DISCRIMINATOR, {n: entries[n] for n in meta["discriminator"]})
    return g, d, NetConfig.from_dict(meta["net"]), meta
