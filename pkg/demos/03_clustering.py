"""Hierarchical clustering of the run distances, drawn as a dendrogram.

Tries all six linkage rules, prunes the tree at the four-cluster level, and
checks the result against the generator's ground truth.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from enspart import (
    assign_colors,
    compute_run_matrix,
    compute_timestep_matrix,
    generate_synthetic,
    height_for_count,
    hierarchical_cluster,
    normalize_fields,
    prune,
)
from enspart.clustering import LINKAGES

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

ens = normalize_fields(generate_synthetic(1))
dt = compute_timestep_matrix(ens, seed_count=256, rng_seed=1)
dr = compute_run_matrix(dt)


def agreement(labels_a, labels_b):
    # fraction of pairs on which two labelings agree
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    iu = np.triu_indices(len(a), 1)
    return float((same_a[iu] == same_b[iu]).mean())


truth = [ens.ground_truth[r.name] for r in ens.runs]
for linkage in LINKAGES:
    tree = hierarchical_cluster(dr, linkage)
    cut = prune(tree, height_for_count(tree, 4))
    print(f"{linkage:9s}: 4-cluster pair agreement with ground truth "
          f"{agreement(cut.labels, truth):.3f}")

tree = hierarchical_cluster(dr, "ward.D")
cut = prune(tree, height_for_count(tree, 4))
colors = assign_colors(tree, cut)


def draw_dendrogram(ax, tree, pruning_height):
    n = tree.n_leaves
    # leaf order by walking the root's children
    order = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node < n:
            order.append(node)
        else:
            l, r, _ = tree.merges[node - n]
            stack.extend((r, l))
    xpos = {leaf: i for i, leaf in enumerate(order)}
    height = {leaf: 0.0 for leaf in range(n)}
    for k, (l, r, h) in enumerate(tree.merges):
        xl, xr = xpos[l], xpos[r]
        ax.plot([xl, xl, xr, xr], [height[l], h, h, height[r]], "k-", lw=0.5)
        xpos[n + k] = (xl + xr) / 2
        height[n + k] = h
    ax.axhline(pruning_height, color="red", ls="--", lw=1)
    ax.set_ylabel("merge height")
    ax.set_xticks([])


fig, ax = plt.subplots(figsize=(9, 4))
draw_dendrogram(ax, tree, cut.pruning_height)
ax.set_title(f"ward.D dendrogram, pruned to {cut.cluster_count} clusters")
fig.tight_layout()
fig.savefig(OUT / "03_dendrogram.png", dpi=110)
print("cluster colors:", {cid: colors.colors[cid] for cid in range(cut.cluster_count)})
print(f"figures saved to {OUT}")
