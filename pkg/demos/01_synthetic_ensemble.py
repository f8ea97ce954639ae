"""Generate the synthetic ground-truth ensemble and look at its structure.

Renders one example field per behavior class and the class layout over the
(b, c) plane. Output lands in demos/out/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from enspart import generate_synthetic, normalize_fields
from enspart.synthetic import AXIS_VALUES, CLASS_NAMES, behavior_class

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

ens = normalize_fields(generate_synthetic(1))
print(f"{len(ens.runs)} runs, parameters {ens.parameter_names}, grid {ens.dims}")
counts = {}
for r in ens.runs:
    counts[ens.ground_truth[r.name]] = counts.get(ens.ground_truth[r.name], 0) + 1
for cls, n in sorted(counts.items()):
    print(f"  class {cls} ({CLASS_NAMES[cls]}): {n} runs")

# one representative run per class
fig, axes = plt.subplots(1, 4, figsize=(14, 3.5))
seen = set()
for r in ens.runs:
    cls = ens.ground_truth[r.name]
    if cls in seen:
        continue
    seen.add(cls)
    ax = axes[cls]
    ax.imshow(r.timesteps[0][1].grid(), origin="lower", cmap="viridis")
    p = r.parameters
    ax.set_title(f"{CLASS_NAMES[cls]}: a={p['a']} b={p['b']} c={p['c']}", fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])
fig.suptitle("One example field per behavior class")
fig.tight_layout()
fig.savefig(OUT / "01_class_examples.png", dpi=110)

# class layout over the (b, c) plane; a and d do not matter for the class
fig, ax = plt.subplots(figsize=(4.5, 4.5))
palette = {0: "#e41a1c", 1: "#377eb8", 2: "#4daf4a", 3: "#984ea3"}
for b in AXIS_VALUES:
    for c in AXIS_VALUES:
        ax.scatter(b, c, s=400, marker="s", color=palette[behavior_class(b, c)])
bs = np.linspace(0, 1, 50)
ax.plot(bs, 0.25 + 0.5 * bs, "k--", lw=1, label="c = 0.25 + 0.5 b")
ax.set_xlabel("b")
ax.set_ylabel("c")
ax.set_title("Ground-truth classes in the (b, c) plane")
ax.legend(loc="lower right", fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "01_bc_layout.png", dpi=110)
print(f"figures saved to {OUT}")
