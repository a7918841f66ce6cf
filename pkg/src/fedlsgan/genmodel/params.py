"""Parameter containers, network configuration and weight initialization."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

GENERATOR = "generator"
DISCRIMINATOR = "discriminator"

INIT_STD = 0.02
# entries updated by batch statistics rather than by the optimizer
BUFFER_SUFFIXES = (".running_mean", ".running_var")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    noise_dim: int = 100
    grid_side: int = 24
    g_channels: tuple[int, int] = (128, 64)
    d_channels: tuple[int, int] = (64, 128)
    leaky_slope: float = 0.2
    conditional: bool = False
    n_labels: int = 0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "g_channels", tuple(int(c) for c in self.g_channels))
        object.__setattr__(self, "d_channels", tuple(int(c) for c in self.d_channels))
        if self.grid_side % 4:
            raise ValueError("grid_side must be divisible by 4 (two stride-2 stages)")
        if self.conditional and self.n_labels < 1:
            raise ValueError("a conditional net needs n_labels >= 1")
        if not self.conditional and self.n_labels:
            raise ValueError("n_labels is only meaningful for a conditional net")

    @property
    def base_side(self) -> int:
        return self.grid_side // 4

    @property
    def label_dim(self) -> int:
        return self.n_labels if self.conditional else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g_channels"] = list(self.g_channels)
        d["d_channels"] = list(self.d_channels)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetConfig":
        return cls(**dict(d))


@dataclass(frozen=True)
class ModelParams:
    """Ordered named tensors for one network.

    Entries ending in ``.running_mean``/``.running_var`` are batch-norm
    buffers: they travel with the parameters (and are averaged by the
    server) but are never touched by the optimizer.
    """

    role: str
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in (GENERATOR, DISCRIMINATOR):
            raise ValueError(f"unknown role {self.role!r}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return list(self.entries)

    @property
    def trainable_names(self) -> list[str]:
        return [n for n in self.entries if not n.endswith(BUFFER_SUFFIXES)]

    def schema(self) -> tuple:
        return (self.role,) + tuple((n, tuple(np.shape(a))) for n, a in self.entries.items())

    def check_same_schema(self, other: "ModelParams") -> None:
        if self.schema() != other.schema():
            raise SchemaError(f"parameter schema mismatch for role {self.role}")

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ModelParams":
        return ModelParams(self.role, {n: fn(a) for n, a in self.entries.items()})

    def copy(self) -> "ModelParams":
        return self.map(lambda a: np.array(a, dtype=np.float64, copy=True))

    def n_values(self) -> int:
        return sum(int(np.size(a)) for a in self.entries.values())

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality of every entry."""
        if self.schema() != other.schema():
            return False
        return all(np.array_equal(self[n], other[n]) for n in self.entries)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.entries.values())


def _bn_entries(prefix: str, channels: int) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.weight": np.ones(channels),
        f"{prefix}.bias": np.zeros(channels),
        f"{prefix}.running_mean": np.zeros(channels),
        f"{prefix}.running_var": np.ones(channels),
    }


def init_params(config: NetConfig, seed: int) -> tuple[ModelParams, ModelParams]:
    """Weights ~ N(0, 0.02^2), biases zero, batch-norm scale 1 and shift 0."""
    rng = np.random.default_rng(seed)

    def w(*shape):
        return rng.normal(0.0, INIT_STD, size=shape)

    c0, c1 = config.g_channels
    s = config.base_side
    g = {
        "g.fc.weight": w(c0 * s * s, config.noise_dim + config.label_dim),
        "g.fc.bias": np.zeros(c0 * s * s),
        **_bn_entries("g.bn0", c0),
        "g.tconv1.weight": w(c0, c1, 4, 4),
        "g.tconv1.bias": np.zeros(c1),
        **_bn_entries("g.bn1", c1),
        "g.tconv2.weight": w(c1, 1, 4, 4),
        "g.tconv2.bias": np.zeros(1),
    }
    d0, d1 = config.d_channels
    d = {
        "d.conv1.weight": w(d0, 1 + config.label_dim, 4, 4),
        "d.conv1.bias": np.zeros(d0),
        "d.conv2.weight": w(d1, d0, 4, 4),
        "d.conv2.bias": np.zeros(d1),
        **_bn_entries("d.bn2", d1),
        "d.fc.weight": w(1, d1 * s * s),
        "d.fc.bias": np.zeros(1),
    }
    return ModelParams(GENERATOR, g), ModelParams(DISCRIMINATOR, d)


def weight_names(params: ModelParams) -> list[str]:
    """Names of the randomly initialized weight tensors (not biases or BN)."""
    return [n for n in params if n.endswith(".weight") and ".bn" not in n]
