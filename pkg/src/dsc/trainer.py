"""Joint optimization of reconstruction and KL clustering losses with
momentum SGD, plus the run-directory writer and best-of-N protocol."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import (ClusterState, converged, hard_assign, init_centroids, kl_gradients,
                      kl_loss, soft_assign, target_distribution)
from .data import DatasetCube, flatten
from .errors import ConfigError, DataError, MetricError, NumericError
from .metrics import MetricsReport, evaluate
from .model import (ModelSpec, build_model, decode_backward, decode_with_cache, encode_backward,
                    encode_with_cache, reconstruction_grad, reconstruction_loss, save_checkpoint)

log = logging.getLogger(__name__)

SELECTION_METRICS = {"silhouette": max, "davies_bouldin": min}


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 5
    k: int = 7
    kmeans_restarts: int = 20
    seed: int = 0
    clus_weight: float = 1.0
    rec_weight: float = 1.0
    alpha: float = 1.0

    def validate(self, t: int) -> None:
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("learning_rate must be >= 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size and max_epochs must be >= 1, patience >= 0")
        if not 2 <= self.k < t:
            raise ConfigError(f"need 2 <= k < T, got k={self.k}, T={t}")
        if self.kmeans_restarts < 1:
            raise ConfigError("kmeans_restarts must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    rec: float
    clus: float
    total: float
    changed_labels: int


@dataclass
class TrainResult:
    model: ModelSpec
    state: ClusterState
    trace: list[EpochRecord]
    epochs: int
    stop_reason: str
    history: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def labels(self) -> np.ndarray:
        return self.state.labels


def sgd_momentum_step(params: dict, grads: dict, velocity: dict, lr: float, mu: float) -> None:
    """In place: v <- mu*v - lr*g; p <- p + v for every named tensor."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
        v = velocity[name]
        v *= mu
        v -= lr * g
        params[name] += v


def _values(data) -> np.ndarray:
    return data.values if isinstance(data, DatasetCube) else np.asarray(data)


def _full_pass(model: ModelSpec, x: np.ndarray, centroids: np.ndarray, alpha: float,
               batch_size: int = 64):
    """Encode (and reconstruct) every sample without touching parameters."""
    embs, sq_err = [], 0.0
    for i in range(0, len(x), batch_size):
        xb = x[i:i + batch_size]
        e, _ = encode_with_cache(model, xb)
        embs.append(e)
        if model.is_autoencoder:
            recon, _ = decode_with_cache(model, e)
            sq_err += reconstruction_loss(xb, recon) * len(xb)
    emb = np.concatenate(embs).astype(np.float64)
    q = soft_assign(emb, centroids, alpha)
    return sq_err / len(x), emb, q


def evaluate_epoch(model: ModelSpec, data, state: ClusterState):
    """Full-dataset losses and labels under the current parameters.

    ``L_clus`` uses the target distribution derived from the fresh soft
    assignments. Returns ``(L_rec, L_clus, labels)``.
    """
    rec, _, q = _full_pass(model, _values(data), state.centroids, state.alpha)
    p = target_distribution(q)
    return rec, kl_loss(p, q), hard_assign(q)


def epoch_batches(rng: np.random.Generator, t: int, batch_size: int) -> list[np.ndarray]:
    """Shuffled minibatch index arrays covering ``range(t)`` exactly once."""
    order = rng.permutation(t)
    return [order[s:s + batch_size] for s in range(0, t, batch_size)]


def batch_gradients(model: ModelSpec, xb: np.ndarray, p_b: np.ndarray, centroids: np.ndarray,
                    cfg: TrainConfig):
    """Combined minibatch loss and its gradients.

    ``p_b`` is the frozen target distribution for these rows. Returns
    ``(loss, grads)`` with grads keyed ``(layer, tensor)`` plus
    ``("clusters", "C")`` for the centroids.
    """
    dtype = xb.dtype
    emb_b, enc_cache = encode_with_cache(model, xb)
    emb64 = emb_b.astype(np.float64)
    q_b = soft_assign(emb64, centroids, cfg.alpha)
    g_emb, g_c = kl_gradients(p_b, q_b, emb64, centroids, cfg.alpha)
    loss = cfg.clus_weight * kl_loss(p_b, q_b)
    d_emb = cfg.clus_weight * g_emb
    grads = {}
    if model.is_autoencoder and cfg.rec_weight != 0:
        recon, dec_cache = decode_with_cache(model, emb_b)
        loss += cfg.rec_weight * reconstruction_loss(xb, recon)
        d_recon = cfg.rec_weight * reconstruction_grad(xb, recon)
        d_emb_rec, grads = decode_backward(model, dec_cache, d_recon.astype(dtype))
        d_emb = d_emb + d_emb_rec
    encode_backward(model, enc_cache, d_emb.astype(dtype), grads)
    flat = {(layer, key): g for layer, gs in grads.items() for key, g in gs.items()}
    flat[("clusters", "C")] = cfg.clus_weight * g_c
    return loss, flat


def train(model: ModelSpec, data, cfg: TrainConfig) -> TrainResult:
    """Train ``model`` in place on normalized ``data`` and return the result.

    Centroids come from k-means on the untrained encoder's latents. Each epoch
    freezes the target distribution from the full-dataset soft assignments,
    then runs shuffled minibatch momentum SGD on network weights and
    centroids together. Training stops once hard labels are unchanged for
    ``patience`` consecutive epochs, or at ``max_epochs``.
    """
    x = _values(data)
    dtype = next(iter(model.params.values()))["b"].dtype
    x = x.astype(dtype, copy=False)
    t = len(x)
    cfg.validate(t)
    batch_size = min(cfg.batch_size, t)
    rng = np.random.default_rng(cfg.seed)

    _, emb, _ = _full_pass(model, x, np.zeros((1, model.latent_dim)), cfg.alpha)
    centroids = init_centroids(emb, cfg.k, cfg.kmeans_restarts, cfg.seed)
    q = soft_assign(emb, centroids, cfg.alpha)
    labels = hard_assign(q)
    history = [labels]

    params = model.flat_params()
    params[("clusters", "C")] = centroids
    velocity = {name: np.zeros_like(p) for name, p in params.items()}
    trace: list[EpochRecord] = []
    stop_reason = "max_epochs"

    for epoch in range(1, cfg.max_epochs + 1):
        p_full = target_distribution(q)
        for b, idx in enumerate(epoch_batches(rng, t, batch_size)):
            try:
                _, flat = batch_gradients(model, x[idx], p_full[idx], centroids, cfg)
                sgd_momentum_step(params, flat, velocity, cfg.learning_rate, cfg.momentum)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from exc

        rec, emb, q = _full_pass(model, x, centroids, cfg.alpha)
        clus = kl_loss(target_distribution(q), q)
        labels = hard_assign(q)
        changed = int(np.count_nonzero(labels != history[-1]))
        history.append(labels)
        if not model.is_autoencoder:
            rec = 0.0
        total = cfg.clus_weight * clus + cfg.rec_weight * rec
        trace.append(EpochRecord(epoch, rec, clus, total, changed))
        log.debug("epoch %d rec=%.5f clus=%.5f changed=%d", epoch, rec, clus, changed)
        if converged(history, cfg.patience):
            stop_reason = "converged"
            break

    state = ClusterState(centroids=centroids, soft=q, target=target_distribution(q),
                         labels=labels, alpha=cfg.alpha)
    return TrainResult(model, state, trace, len(trace), stop_reason, history)


# --- best-of-N protocol and outputs -------------------------------------------

@dataclass
class RunOutcome:
    seed: int
    result: TrainResult
    report: MetricsReport | None
    latent_report: MetricsReport | None
    degenerate: str | None = None


def train_and_evaluate(cube: DatasetCube, variant: str, cfg: TrainConfig, truth=None,
                       model_kwargs: dict | None = None) -> RunOutcome:
    """One seeded training run plus its input-space (and latent) metrics.

    A run whose labels collapse to a single cluster has no defined
    silhouette or Davies-Bouldin score; it is returned with ``report=None``
    and the reason in ``degenerate``.
    """
    t, lon, lat, n = cube.shape
    model = build_model(variant, (lon, lat, n), seed=cfg.seed, **(model_kwargs or {}))
    result = train(model, cube, cfg)
    try:
        report = evaluate(flatten(cube), result.labels, truth, space="input")
    except MetricError as exc:
        log.warning("seed %d: %s", cfg.seed, exc)
        return RunOutcome(cfg.seed, result, None, None, degenerate=str(exc))
    emb = _full_pass(result.model, _values(cube), result.state.centroids, cfg.alpha)[1]
    try:
        latent = evaluate(emb, result.labels, truth, space="latent")
    except MetricError:
        # e.g. two latent centroids coincide; the input-space report still stands
        latent = None
    return RunOutcome(cfg.seed, result, report, latent)


def _run_one(args):
    cube, variant, cfg, truth, model_kwargs = args
    return train_and_evaluate(cube, variant, cfg, truth, model_kwargs)


def best_of_n(cube: DatasetCube, variant: str, cfg: TrainConfig, runs: int = 20,
              select: str = "silhouette", truth=None, jobs: int = 1,
              model_kwargs: dict | None = None):
    """Train ``runs`` models with seeds ``cfg.seed + i``; return ``(best_index, outcomes)``.

    Degenerate runs are never selected unless every run is degenerate, in
    which case the first run is returned.
    """
    if select not in SELECTION_METRICS:
        raise ConfigError(f"selection metric must be one of {sorted(SELECTION_METRICS)}")
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    tasks = []
    for i in range(runs):
        run_cfg = TrainConfig(**{**asdict(cfg), "seed": cfg.seed + i})
        tasks.append((cube, variant, run_cfg, truth, model_kwargs))
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    else:
        outcomes = [_run_one(task) for task in tasks]
    scored = [(getattr(o.report, select), i) for i, o in enumerate(outcomes) if o.report is not None]
    if not scored:
        log.warning("all %d runs collapsed to a single cluster", runs)
        return 0, outcomes
    pick = SELECTION_METRICS[select]
    # ties go to the earliest run
    best = pick(scored, key=lambda s: (s[0], -s[1]) if pick is max else (s[0], s[1]))[1]
    return best, outcomes


def write_assignments(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "cluster"])
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])


def read_assignments(path) -> np.ndarray:
    """Labels from an ``index,cluster`` CSV, ordered by index."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        pairs = sorted((int(r["index"]), int(r["cluster"])) for r in rows)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: expected an index,cluster table") from exc
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise DataError(f"{path}: indices must be 0..T-1 without gaps")
    return np.array([c for _, c in pairs], dtype=int)


def write_trace(path, trace: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "L_rec", "L_clus", "L", "changed_labels"])
        for r in trace:
            w.writerow([r.epoch, repr(r.rec), repr(r.clus), repr(r.total), r.changed_labels])


def write_report(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_payload(outcome: RunOutcome, config: dict) -> dict:
    res = outcome.result
    last = res.trace[-1] if res.trace else None
    return {
        "version": __version__,
        "config": config,
        "variant": res.model.variant,
        "seed": outcome.seed,
        "n_params": res.model.n_params,
        "epochs": res.epochs,
        "stop_reason": res.stop_reason,
        "losses": {
            "L_rec": (last.rec if last else None) if res.model.is_autoencoder else None,
            "L_clus": last.clus if last else None,
            "L": last.total if last else None,
        },
        "metrics": outcome.report.to_dict() if outcome.report else None,
        "degenerate": outcome.degenerate,
        "latent_metrics": outcome.latent_report.to_dict() if outcome.latent_report else None,
        "metric_space": "input (flattened normalized observations)",
    }


def write_run_dir(out, outcome: RunOutcome, config: dict, extra: dict | None = None) -> None:
    """Emit checkpoint.npz, assignments.csv, trace.csv and report.json."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(outcome.result.model, out / "checkpoint.npz")
    write_assignments(out / "assignments.csv", outcome.result.labels)
    write_trace(out / "trace.csv", outcome.result.trace)
    payload = run_payload(outcome, config)
    payload.update(extra or {})
    write_report(out / "report.json", payload)
