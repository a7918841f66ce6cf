"""End-to-end experiment pipeline behind the ``run``, ``sweep`` and ``synth`` commands.

Output layout of a run directory (``layout_version`` in ``report.json``)::

    config.json            resolved experiment config
    report.json            per-site MetricReport, cross-site summary, Pearson matrices
    history.csv            epoch, client_id, L_D, L_G, synced   (trained methods)
    checkpoints/*.flgc     parameters at every sync (or final, for centralized runs)
    scenarios/<site>.csv   generated scenarios, one per row, normalized
    plots/*.csv            autocorrelation, crps_by_lead, centroids, correlation_matrix
    plots/*.png            only with --render-plots
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines, data, metrics
from .config import ExperimentConfig
from .federation import (
    FederationState,
    checkpoint_writer,
    run_federated,
    write_history_csv,
    write_run_config,
)
from .genmodel import ModelParams, NetConfig, generate, save_checkpoint

logger = logging.getLogger(__name__)

LAYOUT_VERSION = 1
SUMMARY_METRICS = ("fid", "mmd2", "one_nn_acc", "es", "crps_mean", "mae", "rmse")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class RunResult:
    report: dict
    out_dir: Path
    clients: list[data.ClientDataset]
    generated: dict[str, np.ndarray] = field(default_factory=dict)
    params_G: ModelParams | None = None
    net: NetConfig | None = None
    state: FederationState | None = None


# -- data -----------------------------------------------------------------------------

def synth_fleet(cfg: ExperimentConfig) -> list[data.TimeSeries]:
    spec = cfg.data.synthetic
    seed = cfg.seed if spec.seed is None else spec.seed
    return [data.synth_site(seed, spec.n_days, s.to_params(i)) for i, s in enumerate(spec.sites)]


def load_series(cfg: ExperimentConfig) -> list[data.TimeSeries]:
    if cfg.data.csv_dir is not None:
        return data.load_fleet_dir(cfg.data.csv_dir)
    return synth_fleet(cfg)


def build_clients(series: Sequence[data.TimeSeries]) -> list[data.ClientDataset]:
    return [data.build_client(s, i, len(series)) for i, s in enumerate(series)]


def write_synthetic(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Write the configured synthetic fleet as ``<out>/<kind>/<site_id>.csv``."""
    out_dir = Path(out_dir)
    paths = []
    for spec, series in zip(cfg.data.synthetic.sites, synth_fleet(cfg)):
        path = out_dir / spec.kind / f"{series.site_id}.csv"
        data.write_site_csv(series, path)
        paths.append(path)
    return paths


# -- generation -------------------------------------------------------------------------

def generation_seed(seed: int, site_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 3, site_index])


def generate_for_sites(params_G: ModelParams, net: NetConfig, clients, n: int, seed: int) -> dict:
    """Scenarios per site. A conditional model reuses one noise draw for every label."""
    out = {}
    if net.conditional:
        noise = np.random.default_rng(generation_seed(seed, 0)).standard_normal((n, net.noise_dim))
        for c in clients:
            out[c.site_id] = generate(params_G, n, None, net=net, label=c.client_id, noise=noise)
    else:
        for c in clients:
            out[c.site_id] = generate(params_G, n, generation_seed(seed, c.client_id), net=net)
    return out


def copula_scenarios(clients, n: int, seed: int, profile_points: int | None) -> dict:
    out = {}
    for c in clients:
        train = c.train_array.reshape(len(c.train), -1)
        if profile_points:
            train = baselines.daily_profiles(train, profile_points)
        model = baselines.fit_copula(train)
        out[c.site_id] = baselines.sample_copula(model, n, generation_seed(seed, c.client_id))
    return out


# -- evaluation -------------------------------------------------------------------------

def _site_real(client: data.ClientDataset, width: int, profile_points: int | None) -> np.ndarray:
    real = client.test_array.reshape(len(client.test), -1)
    if profile_points and width != real.shape[1]:
        real = baselines.daily_profiles(real, profile_points)
    return real


def evaluate_sites(clients, generated: dict, spec: metrics.EvalSpec, method: str,
                   profile_points: int | None = None) -> tuple[dict, dict]:
    per_site, curves = {}, {}
    for c in clients:
        gen = generated[c.site_id]
        real = _site_real(c, gen.shape[1], profile_points)
        if len(real) < 2:
            raise ValueError(f"site {c.site_id}: need at least 2 test windows to evaluate")
        k = min(spec.k, len(real), len(gen))
        rep = metrics.evaluate(real, gen, replace(spec, k=k), site_id=c.site_id, method=method)
        per_site[c.site_id] = rep.to_dict()
        lag = min(spec.max_lag, real.shape[1] - 1)
        site_curves = {}
        for source, arr in (("real", real), ("generated", gen)):
            try:
                site_curves[source] = metrics.mean_autocorrelation(arr, lag).tolist()
            except metrics.ZeroVarianceError:
                site_curves[source] = None
        centroids = {
            "real": metrics.kmeans(real, k, spec.seed)[0],
            "generated": metrics.kmeans(gen, k, spec.seed)[0],
        }
        curves[c.site_id] = {"acf": site_curves, "centroids": centroids}
    return per_site, curves


def summarize(per_site: dict) -> dict:
    summary = {}
    for key in SUMMARY_METRICS:
        if key == "crps_mean":
            vals = [float(np.mean(r["crps"])) if r["crps"] else float("nan") for r in per_site.values()]
        else:
            vals = [r[key] for r in per_site.values()]
        summary[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    return summary


def _aligned_series(arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    n = min(len(a) for a in arrays)
    return [np.asarray(a[:n]).reshape(-1) for a in arrays]


def cross_site_pearson(clients, generated: dict, profile_points=None) -> dict:
    """Pearson matrices across sites for the real test windows and the generated sets."""
    if len(clients) < 2:
        return {"sites": [c.site_id for c in clients], "real": None, "generated": None}
    out = {"sites": [c.site_id for c in clients]}
    for source in ("real", "generated"):
        arrays = []
        for c in clients:
            gen = generated[c.site_id]
            arrays.append(_site_real(c, gen.shape[1], profile_points) if source == "real" else gen)
        try:
            out[source] = metrics.pearson_matrix(_aligned_series(arrays)).tolist()
        except metrics.ZeroVarianceError:
            out[source] = None
    return out


# -- output files ---------------------------------------------------------------------------

def write_scenarios(out_dir: Path, generated: dict) -> None:
    d = out_dir / "scenarios"
    d.mkdir(parents=True, exist_ok=True)
    for site, arr in generated.items():
        write_scenario_csv(d / f"{site}.csv", arr)


def write_scenario_csv(path, arr: np.ndarray) -> None:
    np.savetxt(path, np.asarray(arr).reshape(len(arr), -1), delimiter=",", fmt="%.17g")


def read_scenario_csv(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return arr


def write_plot_csvs(out_dir: Path, per_site: dict, curves: dict, pearson: dict, leads) -> None:
    d = out_dir / "plots"
    d.mkdir(parents=True, exist_ok=True)
    with (d / "autocorrelation.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "source", "lag", "R"])
        for site, c in curves.items():
            for source, curve in c["acf"].items():
                for lag, r in enumerate(curve or []):
                    w.writerow([site, source, lag, repr(r)])
    with (d / "crps_by_lead.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "lead", "crps"])
        for site, rep in per_site.items():
            for lead, v in zip(leads, rep["crps"]):
                w.writerow([site, lead, repr(v)])
    with (d / "centroids.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        width = next(iter(curves.values()))["centroids"]["real"].shape[1]
        w.writerow(["site_id", "source", "cluster"] + [f"v{i}" for i in range(width)])
        for site, c in curves.items():
            for source, cents in c["centroids"].items():
                for j, row in enumerate(cents):
                    w.writerow([site, source, j] + [repr(float(v)) for v in row])
    with (d / "correlation_matrix.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "site_i", "site_j", "rho"])
        sites = pearson["sites"]
        for source in ("real", "generated"):
            mat = pearson.get(source)
            if mat is None:
                continue
            for i, a in enumerate(sites):
                for j, b in enumerate(sites):
                    w.writerow([source, a, b, repr(mat[i][j])])


def render_plots(out_dir: Path, curves: dict, per_site: dict, pearson: dict,
                 state: FederationState | None, leads) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    d = out_dir / "plots"
    if state is not None and state.history:
        fig, ax = plt.subplots(figsize=(7, 4))
        cids = sorted({r.client_id for r in state.history})
        for cid in cids:
            rows = [(r.epoch, r.loss_d) for r in state.history if r.client_id == cid]
            ax.plot(*zip(*rows), label=f"client {cid}", lw=0.8)
        for w in state.sync_epochs:
            ax.axvline(w, color="grey", lw=0.5, ls=":")
        ax.set_xlabel("global epoch")
        ax.set_ylabel("discriminator loss")
        ax.legend(fontsize=7)
        fig.savefig(d / "loss.png", dpi=120, bbox_inches="tight")
        plt.close(fig)
    fig, ax = plt.subplots(figsize=(7, 4))
    for site, c in curves.items():
        for source, style in (("real", "-"), ("generated", "--")):
            if c["acf"][source] is not None:
                ax.plot(c["acf"][source], style, label=f"{site} {source}", lw=0.9)
    ax.set_xlabel("lag")
    ax.set_ylabel("R(lag)")
    ax.legend(fontsize=6)
    fig.savefig(d / "autocorrelation.png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    fig, ax = plt.subplots(figsize=(7, 4))
    for site, rep in per_site.items():
        ax.plot(list(leads)[: len(rep["crps"])], rep["crps"], label=site, lw=0.9)
    ax.set_xlabel("lead")
    ax.set_ylabel("CRPS")
    ax.legend(fontsize=7)
    fig.savefig(d / "crps.png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    for source in ("real", "generated"):
        if pearson.get(source) is None:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(np.asarray(pearson[source]), vmin=-1, vmax=1, cmap="coolwarm")
        fig.colorbar(im)
        ax.set_title(f"{source} cross-site correlation")
        fig.savefig(d / f"correlation_{source}.png", dpi=120, bbox_inches="tight")
        plt.close(fig)


# -- the pipeline -----------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, render: bool = False) -> RunResult:
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = cfg.eval_spec()
    with _Stage("data"):
        clients = build_clients(load_series(cfg))
    net = cfg.net_config(len(clients))
    fed = cfg.fed_config()
    state = None
    params_G = None
    profile_points = None
    (out_dir / "config.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n")

    with _Stage("train"):
        if cfg.method == "fed_lsgan":
            write_run_config(out_dir / "run_config.json", net, fed)
            params_G, _, state = run_federated(clients, net, fed,
                                               on_sync=checkpoint_writer(out_dir, net))
            write_history_csv(out_dir / "history.csv", state)
        elif cfg.method in ("central_lsgan", "central_gan"):
            if net.conditional:
                raise ValueError("centralized baselines are unconditional; set net.conditional: false")
            write_run_config(out_dir / "run_config.json", net, fed)
            pooled = [w for c in clients for w in c.train]
            hist: list = []
            loss = "lsgan" if cfg.method == "central_lsgan" else "gan"
            params_G, params_D = baselines.train_centralized(
                pooled, net, loss, fed.W, cfg.seed, m=fed.m, lr=fed.lr, beta1=fed.beta1,
                beta2=fed.beta2, history=hist,
            )
            save_checkpoint(out_dir / "checkpoints" / "final.flgc", params_G, params_D, net,
                            {"epoch": fed.W})
            _write_central_history(out_dir / "history.csv", hist)
        else:
            profile_points = cfg.copula.profile_points

    with _Stage("generate"):
        n = spec.n_generated
        if cfg.method == "copula":
            generated = copula_scenarios(clients, n, cfg.seed, profile_points)
        else:
            generated = generate_for_sites(params_G, net, clients, n, cfg.seed)
        write_scenarios(out_dir, generated)

    with _Stage("evaluate"):
        per_site, curves = evaluate_sites(clients, generated, spec, cfg.method, profile_points)
        pearson = cross_site_pearson(clients, generated, profile_points)
        report = {
            "layout_version": LAYOUT_VERSION,
            "created": datetime.now(timezone.utc).isoformat(),
            "method": cfg.method,
            "seed": cfg.seed,
            "sites": per_site,
            "summary": summarize(per_site),
            "pearson": pearson,
            "extra_paper_results": cfg.method == "copula",
        }
        (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        write_plot_csvs(out_dir, per_site, curves, pearson, spec.leads)

    if render:
        with _Stage("plots"):
            render_plots(out_dir, curves, per_site, pearson, state, spec.leads)
    return RunResult(report, out_dir, clients, generated, params_G, net, state)


def _write_central_history(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "client_id", "L_D", "L_G", "synced"])
        for epoch, ld, lg in rows:
            w.writerow([epoch, 0, repr(ld), repr(lg), 0])


def run_sweep(cfg: ExperimentConfig, K_list: Sequence[int], E_list: Sequence[float],
              out_dir=None) -> list[dict]:
    """Cross product of (K, E) with shared data and seed; one CSV row per setting per metric."""
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for K in K_list:
        for E in E_list:
            tag = f"K{K}_E{E:g}"
            status, summary, error = "ok", {}, ""
            try:
                fed = cfg.federation.model_copy(update={"K": int(K), "E": float(E)})
                setting = cfg.model_copy(update={"federation": fed, "method": "fed_lsgan"})
                setting.fed_config()
                result = run_experiment(setting, out_dir / tag)
                summary = result.report["summary"]
            except Exception as exc:  # isolate settings from each other
                logger.error("sweep setting %s failed: %s", tag, exc)
                status, error = "failed", str(exc)
            for metric in SUMMARY_METRICS:
                value = summary.get(metric, {}).get("mean", float("nan")) if summary else float("nan")
                rows.append({"K": int(K), "E": float(E), "metric": metric, "value": value,
                             "status": status, "error": error})
    with (out_dir / "sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, ["K", "E", "metric", "value", "status", "error"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": "" if math.isnan(r["value"]) else repr(r["value"])})
    return rows
