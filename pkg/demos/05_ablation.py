"""Compare the four model variants on one synthetic dataset.

Encoder-only variants train on the clustering loss alone and so report no
reconstruction loss. Takes a couple of minutes on one CPU core.

Run: python3 demos/05_ablation.py
"""
from dsc.data import SyntheticSpec, generate_synthetic, preprocess
from dsc.model import VARIANTS
from dsc.trainer import TrainConfig, best_of_n

cube, truth = generate_synthetic(SyntheticSpec(k_regimes=3, T=120, L=16, W=16, n=3, seed=0))
cube = preprocess(cube)

print(f"{'variant':<14}{'silhouette':>11}{'DB':>8}{'rmse':>8}{'ARI':>7}{'L_rec':>9}")
for variant in VARIANTS:
    best, outcomes = best_of_n(cube, variant, TrainConfig(k=3), runs=3, truth=truth)
    o = outcomes[best]
    rec = f"{o.result.trace[-1].rec:9.4f}" if o.result.model.is_autoencoder else f"{'-':>9}"
    if o.report is None:
        print(f"{variant:<14} all runs collapsed")
        continue
    r = o.report
    print(f"{variant:<14}{r.silhouette:>11.3f}{r.davies_bouldin:>8.3f}{r.rmse_mean:>8.3f}{r.ari:>7.2f}{rec}")
