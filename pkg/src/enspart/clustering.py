"""Agglomerative clustering of the run-level distance matrix.

Bottom-up Lance-Williams agglomeration with six linkage rules, dendrogram
pruning at an adjustable height, sub-tree selection, and a stable top-down
color assignment over a qualitative palette.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .similarity import DistanceMatrix

LINKAGES = ("ward.D", "ward.D2", "single", "complete", "UPGMA", "WPGMA")

GREY_ID = -1
GREY = "#d9d9d9"

# ColorBrewer qualitative schemes; "Set1" with 8 classes is the default,
# "Paired" provides the 12-color ceiling.
PALETTES = {
    "set1_8": ["#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
               "#ff7f00", "#ffff33", "#a65628", "#f781bf"],
    "paired_12": ["#a6cee3", "#1f78b4", "#b2df8a", "#33a02c", "#fb9a99", "#e31a1c",
                  "#fdbf6f", "#ff7f00", "#cab2d6", "#6a3d9a", "#ffff99", "#b15928"],
}
DEFAULT_PALETTE = PALETTES["set1_8"]


@dataclass
class ClusterTree:
    """Dendrogram of agglomerative merges.

    Node ids: 0..n-1 are leaves (run indices); n+k is the cluster created by
    merge k. Each merge is (left child, right child, height).
    """

    n_leaves: int
    merges: list[tuple[int, int, float]]
    linkage: str
    keys: list = field(default_factory=list)

    @property
    def root(self) -> int:
        return self.n_leaves + len(self.merges) - 1 if self.merges else 0

    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])

    def children(self, node: int) -> tuple[int, int] | None:
        if node < self.n_leaves:
            return None
        l, r, _ = self.merges[node - self.n_leaves]
        return l, r

    def height_of(self, node: int) -> float:
        return 0.0 if node < self.n_leaves else self.merges[node - self.n_leaves][2]

    def leaves_under(self, node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            cur = stack.pop()
            if cur < self.n_leaves:
                out.append(cur)
            else:
                l, r, _ = self.merges[cur - self.n_leaves]
                stack.extend((r, l))
        return sorted(out)

    def to_json(self) -> str:
        return json.dumps(
            {"linkage": self.linkage,
             "merges": [[int(l), int(r), float(h)] for l, r, h in self.merges],
             "keys": list(self.keys)},
            sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ClusterTree":
        doc = json.loads(text)
        merges = [(int(l), int(r), float(h)) for l, r, h in doc["merges"]]
        return cls(n_leaves=len(merges) + 1, merges=merges,
                   linkage=doc["linkage"], keys=list(doc.get("keys", [])))


@dataclass
class ClusterAssignment:
    """A flat clustering obtained by cutting the tree at one height.

    Labels map leaf index to cluster id; GREY_ID marks leaves outside a
    sub-tree selection. Cluster ids are ordered by smallest contained leaf.
    """

    pruning_height: float
    labels: np.ndarray
    cluster_count: int
    roots: list[int]
    keys: list = field(default_factory=list)

    def label_of(self, key) -> int:
        return int(self.labels[self.keys.index(key)])


@dataclass
class ColorAssignment:
    colors: dict[int, str]            # cluster id -> color (GREY_ID -> grey)
    palette: list[str]
    leaf_sets: dict[int, frozenset]   # cluster id -> leaves, for stability matching
    grey: str = GREY


def _lw_update(linkage: str, dik, djk, dij: float, ni: int, nj: int, nk):
    """Lance-Williams distance update for the cluster (i u j) against others k."""
    if linkage == "single":
        return np.minimum(dik, djk)
    if linkage == "complete":
        return np.maximum(dik, djk)
    if linkage == "UPGMA":
        return (ni * dik + nj * djk) / (ni + nj)
    if linkage == "WPGMA":
        return (dik + djk) / 2.0
    if linkage in ("ward.D", "ward.D2"):
        return ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk)
    raise ValueError(f"unknown linkage {linkage!r}")


def hierarchical_cluster(dr: DistanceMatrix, linkage: str) -> ClusterTree:
    """Agglomerate the distance matrix bottom-up with the chosen linkage.

    ward.D consumes the distances as given; ward.D2 squares them first and
    reports merge heights back on the distance scale. Ties on the minimum
    distance are broken by the smallest (i, j) cluster-id pair, so trees are
    reproducible.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; choose one of {LINKAGES}")
    d0 = np.asarray(dr.entries, dtype=np.float64)
    if np.isnan(d0).any():
        raise ValueError("distance matrix contains NaN")
    n = d0.shape[0]
    if n < 2:
        raise ValueError("need at least 2 items to cluster")
    squared = linkage == "ward.D2"
    total = 2 * n - 1
    big = np.full((total, total), np.inf)
    big[:n, :n] = d0 * d0 if squared else d0
    np.fill_diagonal(big, np.inf)
    sizes = np.ones(total, dtype=np.int64)
    active = np.zeros(total, dtype=bool)
    active[:n] = True
    merges: list[tuple[int, int, float]] = []
    for step in range(n - 1):
        ids = np.flatnonzero(active)
        sub = big[np.ix_(ids, ids)]
        iu = np.triu_indices(ids.size, k=1)
        flat = int(np.argmin(sub[iu]))       # row-major first hit = smallest (i, j)
        a, b = int(ids[iu[0][flat]]), int(ids[iu[1][flat]])
        dij = float(big[a, b])
        height = float(np.sqrt(dij)) if squared else dij
        new = n + step
        merges.append((a, b, height))
        others = ids[(ids != a) & (ids != b)]
        if others.size:
            big[new, others] = _lw_update(linkage, big[a, others], big[b, others],
                                          dij, int(sizes[a]), int(sizes[b]), sizes[others])
            big[others, new] = big[new, others]
        sizes[new] = sizes[a] + sizes[b]
        active[a] = active[b] = False
        active[new] = True
    return ClusterTree(n_leaves=n, merges=merges, linkage=linkage, keys=list(dr.keys))


def prune(tree: ClusterTree, height: float) -> ClusterAssignment:
    """Cut the tree: clusters are the connected leaf sets below the height.

    Merges with height <= the cut are applied; above the root this yields one
    cluster, below the first merge all singletons.
    """
    n = tree.n_leaves
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, (l, r, h) in enumerate(tree.merges):
        if h <= height:
            node = n + k
            parent[find(l)] = node
            parent[find(r)] = node
    groups: dict[int, list[int]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(leaf)
    ordered = sorted(groups.items(), key=lambda kv: kv[1][0])
    labels = np.empty(n, dtype=np.int64)
    roots = []
    for cid, (root, leaves) in enumerate(ordered):
        labels[leaves] = cid
        roots.append(root)
    return ClusterAssignment(pruning_height=float(height), labels=labels,
                             cluster_count=len(roots), roots=roots, keys=list(tree.keys))


def height_for_count(tree: ClusterTree, count: int) -> float:
    """A pruning height that yields the requested cluster count.

    Midpoint between the two merge heights bracketing the cut; with tied
    heights the exact count may be unattainable.
    """
    n = tree.n_leaves
    if not 1 <= count <= n:
        raise ValueError(f"cluster count must be in [1, {n}]")
    hs = tree.heights()
    if count == 1:
        return float(hs[-1])
    if count == n:
        return float(hs[0]) / 2.0 if hs[0] > 0 else -1.0
    lo, hi = hs[n - count - 1], hs[n - count]
    return float((lo + hi) / 2.0)


# ---------------------------------------------------------------------------
# Colors.

class _SubtreeView:
    """The dendrogram restricted to one node's descendants."""

    def __init__(self, tree: ClusterTree, node: int):
        self._tree = tree
        self.root = node
        self.n_leaves = tree.n_leaves

    def children(self, node):
        return self._tree.children(node)

    def height_of(self, node):
        return self._tree.height_of(node)

    def leaves_under(self, node):
        return self._tree.leaves_under(node)


def _split_nodes(tree, cut_roots: set[int]) -> list[int]:
    """Inner nodes strictly above the cut, ordered parents before children."""
    splits = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node in cut_roots or node < tree.n_leaves:
            continue
        splits.append(node)
        l, r = tree.children(node)
        stack.extend((l, r))
    # A parent merge is created after its children, so among equal heights the
    # larger node id is the ancestor; sort (height, id) descending.
    splits.sort(key=lambda nd: (tree.height_of(nd), nd), reverse=True)
    return splits


def _top_down_colors(tree, roots: list[int], palette: list[str],
                     seed_color: str | None = None,
                     reserved: set[str] | None = None) -> dict[int, str]:
    """Color each cut root: largest child inherits, the other takes a new color.

    Ties on subtree size go to the left child; with the palette exhausted both
    children inherit the parent's color.
    """
    node_color: dict[int, str] = {}
    first = seed_color if seed_color is not None else palette[0]
    remaining = [c for c in palette if c != first and c not in (reserved or set())]
    node_color[tree.root] = first
    for node in _split_nodes(tree, set(roots)):
        if node not in node_color:      # outside the colored region
            continue
        l, r = tree.children(node)
        nl, nr = len(tree.leaves_under(l)), len(tree.leaves_under(r))
        keep, other = (l, r) if nl >= nr else (r, l)
        node_color[keep] = node_color[node]
        node_color[other] = remaining.pop(0) if remaining else node_color[node]
    return {root: node_color.get(root, first) for root in roots}


def assign_colors(tree: ClusterTree, assignment: ClusterAssignment,
                  palette: list[str] | None = None,
                  previous: ColorAssignment | None = None) -> ColorAssignment:
    """Color the pruned clusters by top-down traversal from the root.

    The root takes the first palette color; at every split the child with the
    larger subtree keeps its parent's color and the other child takes the next
    free color, or the parent's color once the palette is exhausted. With a
    previous assignment, clusters whose leaf sets are unchanged keep their
    previous color.
    """
    palette = list(palette or (previous.palette if previous else DEFAULT_PALETTE))
    by_root = _top_down_colors(tree, assignment.roots, palette)
    colors = {cid: by_root[root] for cid, root in enumerate(assignment.roots)}
    leaf_sets = {cid: frozenset(tree.leaves_under(r))
                 for cid, r in enumerate(assignment.roots)}
    if previous is not None:
        prev_by_set = {ls: previous.colors[cid]
                       for cid, ls in previous.leaf_sets.items()
                       if cid in previous.colors}
        kept = {cid: prev_by_set[ls] for cid, ls in leaf_sets.items()
                if ls in prev_by_set}
        used = set(kept.values())
        for cid in sorted(colors):
            if cid in kept:
                colors[cid] = kept[cid]
                continue
            if colors[cid] in used:
                free = [c for c in palette if c not in used]
                if free:
                    colors[cid] = free[0]
            used.add(colors[cid])
    colors[GREY_ID] = GREY
    return ColorAssignment(colors=colors, palette=palette, leaf_sets=leaf_sets)


def _prune_subtree(tree: ClusterTree, node: int, height: float) -> list[int]:
    """Cluster roots inside one subtree: maximal descendants at or below the cut."""
    roots = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if tree.height_of(cur) <= height:
            roots.append(cur)
        else:
            l, r = tree.children(cur)
            stack.extend((r, l))
    roots.sort(key=lambda r: tree.leaves_under(r)[0])
    return roots


def select_subtree(tree: ClusterTree, node: int, local_height: float,
                   palette: list[str] | None = None,
                   previous: ColorAssignment | None = None):
    """Re-cluster inside one subtree; leaves outside turn grey.

    The subtree seeds its traversal with the color it carried in the previous
    assignment (if any), so refining a cluster keeps its color on the largest
    sub-cluster, and previously assigned colors inside the selection are
    maintained.
    """
    if not 0 <= node <= tree.root:
        raise ValueError(f"invalid node id {node}")
    palette = list(palette or (previous.palette if previous else DEFAULT_PALETTE))
    roots = _prune_subtree(tree, node, local_height)
    n = tree.n_leaves
    labels = np.full(n, GREY_ID, dtype=np.int64)
    for cid, r in enumerate(roots):
        labels[tree.leaves_under(r)] = cid
    leaf_sets = {cid: frozenset(tree.leaves_under(r)) for cid, r in enumerate(roots)}
    inside = frozenset(tree.leaves_under(node))

    seed_color = None
    prev_by_set: dict[frozenset, str] = {}
    if previous is not None:
        prev_by_set = {ls: previous.colors[cid]
                       for cid, ls in previous.leaf_sets.items()
                       if cid in previous.colors}
        for ls, c in sorted(prev_by_set.items(), key=lambda kv: len(kv[0])):
            if inside <= ls:
                seed_color = c
                break

    kept = {cid: prev_by_set[ls] for cid, ls in leaf_sets.items() if ls in prev_by_set}
    by_root = _top_down_colors(_SubtreeView(tree, node), roots, palette,
                               seed_color=seed_color,
                               reserved=set(kept.values()) - {seed_color})
    colors = {cid: by_root[r] for cid, r in enumerate(roots)}
    used = set(kept.values())
    for cid in sorted(colors):
        if cid in kept:
            colors[cid] = kept[cid]
            continue
        if colors[cid] in used:
            free = [c for c in palette if c not in used]
            if free:
                colors[cid] = free[0]
        used.add(colors[cid])
    colors[GREY_ID] = GREY
    assignment = ClusterAssignment(pruning_height=float(local_height), labels=labels,
                                   cluster_count=len(roots), roots=roots,
                                   keys=list(tree.keys))
    return assignment, ColorAssignment(colors=colors, palette=palette, leaf_sets=leaf_sets)
