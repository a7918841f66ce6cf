"""Quality scores for sets of generated scenarios.

All functions take scenario sets as 2-D arrays, one flattened scenario per
row (576 columns for a 24x24 window), and operate on the raw normalized
values with no feature extractor.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

KMEANS_MAX_ITER = 300
REPORT_KEYS = ("fid", "mmd2", "one_nn_acc", "es", "crps", "mae", "rmse")


class ZeroVarianceError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: np.ndarray
    source: str = "real"
    site_id: str = ""

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.scenarios, dtype=float))
        if arr.ndim > 2:
            arr = arr.reshape(len(arr), -1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("scenario set has non-finite entries")
        object.__setattr__(self, "scenarios", arr)

    def __len__(self):
        return len(self.scenarios)


def _arr(x) -> np.ndarray:
    if isinstance(x, ScenarioSet):
        return x.scenarios
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    elif a.ndim > 2:
        a = a.reshape(len(a), -1)
    return a


def _need(n: int, k: int, what: str):
    if n < k:
        raise ValueError(f"{what} needs at least {k} scenarios, got {n}")


# -- distribution distances -------------------------------------------------------

def _psd_sqrt(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric square root with negative eigenvalues clipped; also the clipped mass."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    clipped = float(-vals[vals < 0].sum())
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T, clipped


def fid(real, gen, fid_mean_norm: str = "squared") -> float:
    """Frechet distance between Gaussian fits of the two sets.

    ``Tr((S_d S_g)^{1/2})`` is evaluated as the trace of the square root of
    the symmetric matrix ``sqrt(S_d) S_g sqrt(S_d)``, which has the same
    eigenvalues. ``fid_mean_norm='unsquared'`` uses ``|mu_d - mu_g|`` instead of
    its square.
    """
    x, y = _arr(real), _arr(gen)
    _need(len(x), 2, "fid")
    _need(len(y), 2, "fid")
    if x.shape[1] != y.shape[1]:
        raise ValueError("scenario widths differ")
    mu_d, mu_g = x.mean(0), y.mean(0)
    cov_d = np.atleast_2d(np.cov(x, rowvar=False))
    cov_g = np.atleast_2d(np.cov(y, rowvar=False))
    root_d, clip_d = _psd_sqrt(cov_d)
    vals = np.linalg.eigvalsh(root_d @ cov_g @ root_d)
    clip_m = float(-vals[vals < 0].sum())
    scale = max(np.trace(cov_d) + np.trace(cov_g), np.finfo(float).tiny)
    if max(clip_d, clip_m) > 1e-6 * scale:
        warnings.warn("fid: covariance product is indefinite beyond tolerance; eigenvalues clipped")
    tr_sqrt = float(np.sqrt(np.clip(vals, 0, None)).sum())
    diff = float(np.sum((mu_d - mu_g) ** 2))
    if fid_mean_norm == "unsquared":
        diff = math.sqrt(diff)
    elif fid_mean_norm != "squared":
        raise ValueError(f"fid_mean_norm must be 'squared' or 'unsquared', got {fid_mean_norm!r}")
    return max(diff + float(np.trace(cov_d) + np.trace(cov_g)) - 2.0 * tr_sqrt, 0.0)


def median_bandwidth(x, y) -> float:
    pooled = np.vstack([_arr(x), _arr(y)])
    bw = float(np.median(pdist(pooled)))
    return bw if bw > 0 else 1.0


def mmd2(real, gen, bandwidth: float | None = None) -> float:
    """Unbiased MMD^2 with kernel ``exp(-|x - y|^2 / (2 bw^2))``.

    The bandwidth defaults to the median pairwise distance of the pooled sample.
    """
    x, y = _arr(real), _arr(gen)
    _need(len(x), 2, "mmd2")
    _need(len(y), 2, "mmd2")
    bw = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    gamma = 1.0 / (2.0 * bw * bw)
    m, n = len(x), len(y)
    k_xx = np.exp(-gamma * pdist(x, "sqeuclidean")).sum() * 2.0 / (m * (m - 1))
    k_yy = np.exp(-gamma * pdist(y, "sqeuclidean")).sum() * 2.0 / (n * (n - 1))
    k_xy = np.exp(-gamma * cdist(x, y, "sqeuclidean")).mean()
    return float(k_xx + k_yy - 2.0 * k_xy)


def one_nn_accuracy(real, gen) -> float:
    """Leave-one-out accuracy of a 1-NN classifier separating real from generated.

    A nearest-neighbour tie is resolved in favour of the opposite label, so a
    set compared with an exact copy of itself scores 0.
    """
    x, y = _arr(real), _arr(gen)
    if len(x) != len(y):
        raise ValueError(f"1-NN needs equal set sizes, got {len(x)} and {len(y)}")
    _need(len(x), 2, "one_nn_accuracy")
    pooled = np.vstack([x, y])
    labels = np.r_[np.ones(len(x), bool), np.zeros(len(y), bool)]
    dist = cdist(pooled, pooled)
    np.fill_diagonal(dist, np.inf)
    nearest = dist.min(axis=1, keepdims=True)
    opposite = labels[:, None] != labels[None, :]
    fooled = np.any((dist == nearest) & opposite, axis=1)
    return float(np.mean(~fooled))


# -- scoring rules --------------------------------------------------------------

def energy_score(obs, gen) -> float:
    """``mean_i |obs - xi_i| - 1/(2 M^2) sum_ij |xi_i - xi_j|``."""
    xi = _arr(gen)
    obs = np.asarray(obs, dtype=float).reshape(-1)
    if xi.shape[1] != obs.size:
        xi = xi.reshape(len(xi), -1)
    _need(len(xi), 1, "energy_score")
    m = len(xi)
    first = np.linalg.norm(xi - obs, axis=1).mean()
    spread = pdist(xi).sum() * 2.0 / (2.0 * m * m) if m > 1 else 0.0
    return float(first - spread)


def mean_energy_score(observations, gen) -> float:
    return float(np.mean([energy_score(o, gen) for o in _arr(observations)]))


def _mean_abs_diff_sorted(v: np.ndarray) -> float:
    """``mean_{i,j} |v_i - v_j|`` over all n^2 ordered pairs."""
    s = np.sort(v)
    n = len(s)
    i = np.arange(1, n + 1)
    return float(2.0 * np.sum((2 * i - n - 1) * s) / (n * n))


def crps(observations, gen, leads) -> np.ndarray:
    """Per-lead sample CRPS, averaged over the observations.

    For lead ``l`` the forecast is the marginal of the generated values at
    index ``l``: ``mean_t [E|X_l - x_tl| - E|X_l - X'_l| / 2]``.
    """
    xs = _arr(gen)
    if len(xs) == 0:
        raise ValueError("crps needs a non-empty generated set")
    obs = _arr(observations)
    if obs.shape[1] == 1 and xs.shape[1] != 1:
        obs = obs.T
    leads = np.asarray(leads, dtype=int).reshape(-1)
    if leads.size and (leads.min() < 0 or leads.max() >= xs.shape[1]):
        raise IndexError(f"lead indices must lie in 0..{xs.shape[1] - 1}")
    out = np.empty(len(leads))
    for j, lead in enumerate(leads):
        col = xs[:, lead]
        s = np.sort(col)
        n = len(s)
        csum = np.concatenate([[0.0], np.cumsum(s)])
        total = csum[-1]
        o = obs[:, lead]
        # E|X - o| from sorted values and prefix sums
        k = np.searchsorted(s, o, side="right")
        abs_dev = (o * k - csum[k] + (total - csum[k]) - o * (n - k)) / n
        out[j] = float(np.mean(abs_dev) - 0.5 * _mean_abs_diff_sorted(col))
    return out


# -- clustering and centroid errors ---------------------------------------------------

def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers, dtype=float)


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = KMEANS_MAX_ITER):
    centers = centers.copy()
    assign = None
    for _ in range(max_iter):
        new = np.argmin(cdist(x, centers, "sqeuclidean"), axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(len(centers)):
            members = x[assign == j]
            if len(members):
                centers[j] = members.mean(0)
            else:
                # re-seed an empty cluster at the point worst served by its center
                far = np.argmax(np.min(cdist(x, centers, "sqeuclidean"), axis=1))
                centers[j] = x[far]
    return centers, assign


def kmeans(scenarios, k: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """k-means++ seeding then Lloyd iterations to a fixed assignment (at most 300)."""
    x = _arr(scenarios)
    if k < 1 or k > len(x):
        raise ValueError(f"k={k} must be in 1..{len(x)}")
    rng = np.random.default_rng(seed)
    return lloyd(x, kmeans_pp_init(x, k, rng))


def match_centroids(real_c: np.ndarray, gen_c: np.ndarray) -> np.ndarray:
    """Index of the nearest real centroid for each generated centroid."""
    return np.argmin(cdist(gen_c, real_c, "sqeuclidean"), axis=1)


def mae_rmse(real, gen, k: int = 9, seed: int = 0) -> tuple[float, float]:
    """Errors between generated cluster centroids and their nearest real centroids."""
    x, y = _arr(real), _arr(gen)
    _need(len(x), k, "mae_rmse")
    _need(len(y), k, "mae_rmse")
    real_c, _ = kmeans(x, k, seed)
    gen_c, _ = kmeans(y, k, seed)
    err = gen_c - real_c[match_centroids(real_c, gen_c)]
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2)))


# -- temporal and spatial correlation ---------------------------------------------------

def autocorrelation(series, max_lag: int) -> np.ndarray:
    """``R(tau) = sum_t (S_t - mu)(S_{t+tau} - mu) / ((n - tau) var)``, tau = 0..max_lag."""
    s = np.asarray(series, dtype=float).reshape(-1)
    n = len(s)
    if n <= max_lag:
        raise ValueError(f"series length {n} must exceed max_lag {max_lag}")
    c = s - s.mean()
    var = np.mean(c * c)
    if var <= 0:
        raise ZeroVarianceError("autocorrelation of a constant series")
    return np.array([np.dot(c[: n - tau], c[tau:]) / ((n - tau) * var) for tau in range(max_lag + 1)])


def mean_autocorrelation(scenarios, max_lag: int) -> np.ndarray:
    """Average autocorrelation curve over the non-constant scenarios of a set."""
    curves = []
    for row in _arr(scenarios):
        if np.var(row) > 0:
            curves.append(autocorrelation(row, max_lag))
    if not curves:
        raise ZeroVarianceError("every scenario in the set is constant")
    return np.mean(curves, axis=0)


def pearson_matrix(site_series) -> np.ndarray:
    s = np.asarray([np.asarray(v, dtype=float).reshape(-1) for v in site_series])
    if len(s) < 2:
        raise ValueError("need at least two series")
    c = s - s.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(c * c, axis=1))
    if np.any(norms == 0):
        raise ZeroVarianceError(f"zero-variance series at index {int(np.argmin(norms))}")
    rho = (c @ c.T) / np.outer(norms, norms)
    rho = np.clip((rho + rho.T) / 2, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


# -- report ------------------------------------------------------------------------------

@dataclass
class EvalSpec:
    n_generated: int = 200
    k: int = 9
    leads: tuple[int, ...] = tuple(range(0, 576, 12))
    max_lag: int = 48
    seed: int = 0


@dataclass
class MetricReport:
    fid: float
    mmd2: float
    one_nn_acc: float
    es: float
    crps: list[float]
    mae: float
    rmse: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        meta = d.pop("metadata")
        return {**d, **meta}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def evaluate(real, gen, spec: EvalSpec | None = None, observations=None, **metadata) -> MetricReport:
    """Full score battery for one generated set against one real (test) set.

    The energy score is averaged over ``observations`` (default: the real set).
    The 1-NN test uses equal-size subsets drawn with ``spec.seed``.
    """
    spec = spec or EvalSpec()
    x, y = _arr(real), _arr(gen)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"scenario widths differ: {x.shape[1]} vs {y.shape[1]}")
    obs = x if observations is None else _arr(observations)
    n = min(len(x), len(y))
    rng = np.random.default_rng(spec.seed)
    xs = x if len(x) == n else x[np.sort(rng.choice(len(x), n, replace=False))]
    ys = y if len(y) == n else y[np.sort(rng.choice(len(y), n, replace=False))]
    leads = [l for l in spec.leads if l < x.shape[1]]
    k = min(spec.k, len(x), len(y))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = fid(x, y)
    mae, rmse = mae_rmse(x, y, k, spec.seed)
    return MetricReport(
        fid=f,
        mmd2=mmd2(x, y),
        one_nn_acc=one_nn_accuracy(xs, ys),
        es=mean_energy_score(obs, y),
        crps=[float(v) for v in crps(obs, y, leads)],
        mae=mae,
        rmse=rmse,
        metadata={"n_real": len(x), "n_gen": len(y), "k": k, "seed": spec.seed, **metadata},
    )
