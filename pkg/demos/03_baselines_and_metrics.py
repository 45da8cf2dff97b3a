"""Classical baselines (k-means, Ward) scored with the internal validity metrics.

Run: python3 demos/03_baselines_and_metrics.py
"""
from dsc.baselines import hierarchical_fit, kmeans_fit
from dsc.data import SyntheticSpec, flatten, generate_synthetic, preprocess
from dsc.metrics import evaluate, pca_2d

cube, truth = generate_synthetic(SyntheticSpec(k_regimes=4, T=80, L=12, W=12, n=2, seed=1))
x = flatten(preprocess(cube))
print(f"dataset: {cube.shape}, flattened to {x.shape}")

_, km_labels, sse = kmeans_fit(x, 4, restarts=10, seed=0)
ward_labels = hierarchical_fit(x, 4)
for name, labels in (("k-means", km_labels), ("ward", ward_labels)):
    rep = evaluate(x, labels, truth)
    print(f"{name:<8} silhouette {rep.silhouette:.3f}  DB {rep.davies_bouldin:.3f}  "
          f"rmse {rep.rmse_mean:.3f}  ARI {rep.ari:.3f}  NMI {rep.nmi:.3f}")
print(f"k-means SSE {sse:.3f}")

proj, _, ratio = pca_2d(x)
print(f"PCA: first two components explain {ratio.sum():.1%} of the variance")
for j in range(4):
    centre = proj[km_labels == j].mean(0)
    print(f"  cluster {j} centre in PC space ({centre[0]:+.2f}, {centre[1]:+.2f})")
