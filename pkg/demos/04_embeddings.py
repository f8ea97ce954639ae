"""Similarity and parameter-sample embeddings with cluster barycenters.

The similarity embedding places one point per run so that embedded distances
track the run-distance matrix; the parameter embedding does the same for the
normalized parameter vectors. Barycenters are averaged after projection, so
recoloring the clusters never moves the point cloud.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from enspart import (
    barycenters,
    compute_run_matrix,
    compute_timestep_matrix,
    generate_synthetic,
    height_for_count,
    hierarchical_cluster,
    normalize_fields,
    parameter_embedding,
    prune,
    similarity_embedding,
)
from enspart import assign_colors

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

ens = normalize_fields(generate_synthetic(1))
dt = compute_timestep_matrix(ens, seed_count=256, rng_seed=1)
dr = compute_run_matrix(dt)
tree = hierarchical_cluster(dr, "ward.D")
cut = prune(tree, height_for_count(tree, 4))
colors = assign_colors(tree, cut)

sim = similarity_embedding(dr)
par = parameter_embedding(ens)
print(f"similarity embedding stress {sim.stress:.4f} ({sim.n_iter} iterations)")
print(f"parameter embedding stress {par.stress:.4f} ({par.n_iter} iterations)")

fig, axes = plt.subplots(1, 2, figsize=(11, 5))
for ax, emb, title in ((axes[0], sim, "similarity embedding"),
                       (axes[1], par, "parameter-sample embedding")):
    for name, cid in zip(cut.keys, cut.labels):
        x, y = emb.points[name]
        ax.scatter(x, y, s=8, color=colors.colors[int(cid)], alpha=0.6)
    for cid, center in barycenters(emb, cut).items():
        ax.scatter(*center, s=160, color=colors.colors[cid], edgecolor="black",
                   zorder=5)
    ax.set_title(title)
    ax.set_aspect("equal")
fig.tight_layout()
fig.savefig(OUT / "04_embeddings.png", dpi=110)
print(f"figures saved to {OUT}")
