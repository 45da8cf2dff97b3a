"""Command-line front end: ``dsc generate | train | baseline | evaluate | project``.

Exit codes are 0 on success, 2 for usage or configuration problems and 1 for
data or runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import hierarchical_fit, kmeans_fit
from .data import SyntheticSpec, flatten, generate_synthetic, load_dataset, preprocess, save_dataset
from .errors import ConfigError, DataError, DSCError
from .metrics import evaluate, pca_2d
from .model import VARIANTS
from .trainer import (SELECTION_METRICS, TrainConfig, best_of_n, read_assignments,
                      write_assignments, write_report, write_run_dir)

@dataclass
class RunConfig:
    """Everything that determines a ``train`` invocation; echoed into reports."""
    data: str = ""
    out: str = "run"
    variant: str = "cnn-lstm-ae"
    runs: int = 20
    select: str = "silhouette"
    jobs: int = 1
    truth: str | None = None
    impute: str = "variable"
    learning_rate: float = TrainConfig.learning_rate
    momentum: float = TrainConfig.momentum
    batch_size: int = TrainConfig.batch_size
    max_epochs: int = TrainConfig.max_epochs
    patience: int = TrainConfig.patience
    k: int = TrainConfig.k
    kmeans_restarts: int = TrainConfig.kmeans_restarts
    seed: int = TrainConfig.seed
    clus_weight: float = TrainConfig.clus_weight
    rec_weight: float = TrainConfig.rec_weight

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def validate(self) -> None:
        if not self.data:
            raise ConfigError("a dataset directory is required (--data)")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.select not in SELECTION_METRICS:
            raise ConfigError(f"select must be one of {sorted(SELECTION_METRICS)}")
        if self.runs < 1 or self.jobs < 1:
            raise ConfigError("runs and jobs must be >= 1")
        if self.impute not in ("variable", "global"):
            raise ConfigError("impute must be 'variable' or 'global'")


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    """Defaults, then the JSON file, then explicit flags."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    if path:
        try:
            values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None and k in known})
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def _load_cube(path: str, impute: str = "variable"):
    return preprocess(load_dataset(path), impute)


def _load_truth(path: str | None, t: int):
    if path is None:
        return None
    truth = read_assignments(path)
    if len(truth) != t:
        raise DataError(f"{path} has {len(truth)} rows, dataset has {t}")
    return truth


def _load_labels(path: str, t: int) -> np.ndarray:
    labels = read_assignments(path)
    if len(labels) != t:
        raise DataError(f"{path} has {len(labels)} rows, dataset has {t}")
    return labels


# --- subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    spec = SyntheticSpec(k_regimes=args.clusters, T=args.timesteps, L=args.grid, W=args.grid,
                         n=args.vars, separation=args.separation, noise_sigma=args.noise,
                         seed=args.seed)
    cube, truth = generate_synthetic(spec)
    out = Path(args.out)
    save_dataset(cube, out)
    write_assignments(out / "truth_labels.csv", truth)
    print(f"wrote {spec.T}x{spec.L}x{spec.W}x{spec.n} dataset to {out}")
    return 0


def cmd_train(args) -> int:
    overrides = {k: getattr(args, k, None) for k in (f.name for f in fields(RunConfig))}
    cfg = load_run_config(args.config, overrides)
    cube = _load_cube(cfg.data, cfg.impute)
    truth = _load_truth(cfg.truth, cube.shape[0])
    best, outcomes = best_of_n(cube, cfg.variant, cfg.train_config(), runs=cfg.runs,
                               select=cfg.select, truth=truth, jobs=cfg.jobs)
    out = Path(cfg.out)
    config = asdict(cfg)
    write_run_dir(out, outcomes[best], config,
                  extra={"selected_run": best, "selection_metric": cfg.select, "runs": cfg.runs})
    _write_summary(out / "runs_summary.csv", outcomes, best)
    chosen = outcomes[best]
    if chosen.report is None:
        print(f"all {cfg.runs} runs collapsed to one cluster; wrote run {best} to {out}")
    else:
        print(f"selected run {best} (seed {chosen.seed}) silhouette="
              f"{chosen.report.silhouette:.4f}; outputs in {out}")
    return 0


def _write_summary(path, outcomes, best) -> None:
    cols = ["run", "seed", "epochs", "stop_reason", "L_rec", "L_clus", "silhouette",
            "davies_bouldin", "ari", "nmi", "selected"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, o in enumerate(outcomes):
            last = o.result.trace[-1]
            rep = o.report
            w.writerow([i, o.seed, o.result.epochs, o.result.stop_reason,
                        repr(last.rec) if o.result.model.is_autoencoder else "",
                        repr(last.clus),
                        "" if rep is None else repr(rep.silhouette),
                        "" if rep is None else repr(rep.davies_bouldin),
                        "" if rep is None or rep.ari is None else repr(rep.ari),
                        "" if rep is None or rep.nmi is None else repr(rep.nmi),
                        int(i == best)])


def cmd_baseline(args) -> int:
    cube = _load_cube(args.data, args.impute)
    x = flatten(cube)
    truth = _load_truth(args.truth, len(x))
    extra = {}
    if args.method == "kmeans":
        _, labels, sse = kmeans_fit(x, args.k, restarts=args.restarts, seed=args.seed)
        extra["sse"] = sse
    else:
        labels = hierarchical_fit(x, args.k)
    report = evaluate(x, labels, truth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_assignments(out / "assignments.csv", labels)
    config = {"data": args.data, "method": args.method, "k": args.k, "seed": args.seed,
              "restarts": args.restarts, "impute": args.impute, "truth": args.truth}
    write_report(out / "report.json", {"version": __version__, "config": config,
                                       "metrics": report.to_dict(), **extra})
    print(f"{args.method}: silhouette={report.silhouette:.4f}; outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cube = _load_cube(args.data, args.impute)
    x = flatten(cube)
    labels = _load_labels(args.assignments, len(x))
    truth = _load_truth(args.truth, len(x))
    payload = {"version": __version__,
               "config": {"data": args.data, "assignments": args.assignments,
                          "truth": args.truth, "impute": args.impute},
               "metrics": evaluate(x, labels, truth).to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_project(args) -> int:
    cube = _load_cube(args.data, args.impute)
    x = flatten(cube)
    labels = _load_labels(args.assignments, len(x))
    proj, _, ratios = pca_2d(x, seed=args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "pc1", "pc2", "cluster"])
        for i, (a, b) in enumerate(proj):
            w.writerow([i, repr(float(a)), repr(float(b)), int(labels[i])])
    print(f"explained variance {ratios[0]:.3f}, {ratios[1]:.3f}; wrote {args.out}")
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsc", description="Deep spatiotemporal clustering toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a labeled synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--timesteps", type=int, default=120)
    g.add_argument("--grid", type=int, default=16, help="grid side length (L = W)")
    g.add_argument("--vars", type=int, default=3)
    g.add_argument("--clusters", type=int, default=3, help="number of regimes")
    g.add_argument("--separation", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="best-of-N training of one architecture variant")
    t.add_argument("--config", help="JSON file of run settings; flags override it")
    t.add_argument("--data")
    t.add_argument("--out")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--runs", type=int)
    t.add_argument("--select", choices=sorted(SELECTION_METRICS))
    t.add_argument("--jobs", type=int)
    t.add_argument("--truth", help="truth_labels.csv for ARI/NMI")
    t.add_argument("--impute", choices=["variable", "global"])
    t.add_argument("--k", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--max-epochs", dest="max_epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--kmeans-restarts", dest="kmeans_restarts", type=int)
    t.add_argument("--clus-weight", dest="clus_weight", type=float)
    t.add_argument("--rec-weight", dest="rec_weight", type=float)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("baseline", help="k-means or Ward clustering on flattened data")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--method", choices=["kmeans", "hierarchical"], required=True)
    b.add_argument("--k", type=int, default=7)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--restarts", type=int, default=10)
    b.add_argument("--truth")
    b.add_argument("--impute", choices=["variable", "global"], default="variable")
    b.set_defaults(func=cmd_baseline)

    e = sub.add_parser("evaluate", help="metric report for an assignments.csv")
    e.add_argument("--data", required=True)
    e.add_argument("--assignments", required=True)
    e.add_argument("--truth")
    e.add_argument("--out", help="report path (default: stdout)")
    e.add_argument("--impute", choices=["variable", "global"], default="variable")
    e.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("project", help="2-D PCA coordinates for plotting")
    p.add_argument("--data", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--out", default="projection.csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--impute", choices=["variable", "global"], default="variable")
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"dsc {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DSCError, OSError, ValueError) as exc:
        print(f"dsc {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
