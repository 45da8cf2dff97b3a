"""The clustering head: Student-t soft assignment, the sharpened target and its KL loss.

Run: python3 demos/02_clustering_head.py
"""
import numpy as np

from dsc.cluster import hard_assign, init_centroids, kl_gradients, kl_loss, soft_assign, target_distribution

np.set_printoptions(precision=4, suppress=True)

# two small blobs in a 2-D embedding space
rng = np.random.default_rng(0)
emb = np.vstack([rng.normal(0, 0.3, (5, 2)), rng.normal(3, 0.3, (5, 2))])
cent = init_centroids(emb, k=2, seed=0)
print("k-means initial centroids\n", cent)

q = soft_assign(emb, cent)
p = target_distribution(q)
print("soft assignment Q (first 3 rows)\n", q[:3])
print("target P sharpens confident rows\n", p[:3])
print(f"KL(P||Q) = {kl_loss(p, q):.5f}, KL(Q||Q) = {kl_loss(q, q):.1e}")
print("hard labels", hard_assign(q))

# one gradient step on the embeddings pulls points toward their target cluster
g_emb, g_cent = kl_gradients(p, q, emb, cent)
stepped = emb - 0.5 * g_emb
print(f"KL after one embedding step: {kl_loss(p, soft_assign(stepped, cent)):.5f}")

# the hand fixture used by the test suite
print("target of [[0.9,0.1],[0.6,0.4]]\n", target_distribution(np.array([[0.9, 0.1], [0.6, 0.4]])))
