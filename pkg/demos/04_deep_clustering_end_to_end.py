"""Train the CNN-LSTM autoencoder with the clustering head on synthetic regimes.

Runs the best-of-3 protocol (about 30 s on one CPU core) and prints the
per-run outcome, the selected run's loss trace and its metrics.

Run: python3 demos/04_deep_clustering_end_to_end.py
"""
import time

from dsc.data import SyntheticSpec, generate_synthetic, preprocess
from dsc.trainer import TrainConfig, best_of_n

cube, truth = generate_synthetic(SyntheticSpec(k_regimes=3, T=120, L=16, W=16, n=3, seed=0))
cube = preprocess(cube)

start = time.perf_counter()
best, outcomes = best_of_n(cube, "cnn-lstm-ae", TrainConfig(k=3), runs=3, truth=truth)
print(f"3 runs in {time.perf_counter() - start:.0f}s")
for i, o in enumerate(outcomes):
    status = f"silhouette {o.report.silhouette:.3f}, ARI {o.report.ari:.3f}" if o.report else o.degenerate
    print(f"  run {i} seed {o.seed}: {o.result.epochs} epochs, {o.result.stop_reason}; {status}"
          + ("  <- selected" if i == best else ""))

chosen = outcomes[best]
trace = chosen.result.trace
print("epoch   L_rec    L_clus  changed")
for r in trace[:3] + trace[-3:]:
    print(f"{r.epoch:>5} {r.rec:8.4f} {r.clus:9.5f} {r.changed_labels:>8}")
print(f"L_rec fell to {trace[-1].rec / trace[0].rec:.1%} of its first-epoch value")
print("selected run metrics:", {k: round(v, 4) if isinstance(v, float) else v
                                for k, v in chosen.report.to_dict().items()})
