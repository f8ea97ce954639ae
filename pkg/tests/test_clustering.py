import math

import numpy as np
import pytest

from enspart import (
    GREY_ID,
    LINKAGES,
    DistanceMatrix,
    assign_colors,
    height_for_count,
    hierarchical_cluster,
    prune,
    select_subtree,
)
from enspart.clustering import PALETTES, ClusterTree


def naive_lance_williams(d, linkage):
    """Reference agglomeration: full pair scan each step, dict-of-pairs state.

    Written independently of the library implementation; shares only the
    published update coefficients and the smallest-(i, j) tie rule.
    """
    n = d.shape[0]
    dist = {}
    for i in range(n):
        for j in range(i + 1, n):
            v = float(d[i, j])
            dist[(i, j)] = v * v if linkage == "ward.D2" else v
    active = list(range(n))
    sizes = {i: 1 for i in range(n)}
    merges = []
    nxt = n
    for _ in range(n - 1):
        best = None
        for ai in range(len(active)):
            for bi in range(ai + 1, len(active)):
                i, j = active[ai], active[bi]
                v = dist[(i, j)]
                if best is None or v < best[0]:
                    best = (v, i, j)
        v, i, j = best
        height = math.sqrt(v) if linkage == "ward.D2" else v
        merges.append((i, j, height))
        for k in active:
            if k in (i, j):
                continue
            dik = dist[(min(i, k), max(i, k))]
            djk = dist[(min(j, k), max(j, k))]
            ni, nj, nk = sizes[i], sizes[j], sizes[k]
            if linkage == "single":
                nv = min(dik, djk)
            elif linkage == "complete":
                nv = max(dik, djk)
            elif linkage == "UPGMA":
                nv = (ni * dik + nj * djk) / (ni + nj)
            elif linkage == "WPGMA":
                nv = (dik + djk) / 2.0
            else:
                nv = ((ni + nk) * dik + (nj + nk) * djk - nk * v) / (ni + nj + nk)
            dist[(k, nxt)] = nv
        sizes[nxt] = sizes[i] + sizes[j]
        active.remove(i)
        active.remove(j)
        active.append(nxt)
        nxt += 1
    return merges


def random_matrix(rng, n):
    m = rng.uniform(0.05, 1.0, size=(n, n))
    m = (m + m.T) / 2
    np.fill_diagonal(m, 0.0)
    return DistanceMatrix(entries=m, keys=[f"r{i}" for i in range(n)])


def chain_matrix():
    # 1D points at 0, 1, 3, 7: unambiguous merge order
    pts = np.array([0.0, 1.0, 3.0, 7.0])
    m = np.abs(pts[:, None] - pts[None, :])
    return DistanceMatrix(entries=m, keys=list("abcd"))


class TestHierarchicalCluster:
    def test_two_points_single_merge(self):
        m = DistanceMatrix(entries=np.array([[0.0, 0.4], [0.4, 0.0]]), keys=["a", "b"])
        for linkage in LINKAGES:
            tree = hierarchical_cluster(m, linkage)
            assert len(tree.merges) == 1
            l, r, h = tree.merges[0]
            assert (l, r) == (0, 1)
            assert h == pytest.approx(0.4)

    def test_single_linkage_picks_minimum_first(self):
        m = np.array([[0.0, 0.1, 0.9], [0.1, 0.0, 0.8], [0.9, 0.8, 0.0]])
        tree = hierarchical_cluster(DistanceMatrix(entries=m, keys=list("abc")), "single")
        assert tree.merges[0][:2] == (0, 1)
        assert tree.merges[0][2] == pytest.approx(0.1)
        # single linkage: min(0.9, 0.8)
        assert tree.merges[1][2] == pytest.approx(0.8)

    @pytest.mark.parametrize("linkage", LINKAGES)
    def test_matches_naive_reference_on_six_points(self, linkage):
        rng = np.random.default_rng(100)
        dm = random_matrix(rng, 6)
        tree = hierarchical_cluster(dm, linkage)
        ref = naive_lance_williams(dm.entries, linkage)
        assert [(l, r) for l, r, _ in tree.merges] == [(l, r) for l, r, _ in ref]
        for (_, _, h1), (_, _, h2) in zip(tree.merges, ref):
            assert h1 == h2

    @pytest.mark.parametrize("linkage", LINKAGES)
    def test_heights_non_decreasing_random(self, linkage):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(3, 50))
            tree = hierarchical_cluster(random_matrix(rng, n), linkage)
            hs = tree.heights()
            assert np.all(np.diff(hs) >= -1e-12)

    def test_nan_rejected(self):
        m = np.zeros((3, 3))
        m[0, 1] = m[1, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            hierarchical_cluster(DistanceMatrix(entries=m, keys=list("abc")), "single")

    def test_unknown_linkage(self):
        with pytest.raises(ValueError, match="unknown linkage"):
            hierarchical_cluster(chain_matrix(), "median")

    def test_ward_variants_differ(self):
        rng = np.random.default_rng(12)
        dm = random_matrix(rng, 8)
        h1 = hierarchical_cluster(dm, "ward.D").heights()
        h2 = hierarchical_cluster(dm, "ward.D2").heights()
        assert not np.allclose(h1, h2)

    def test_leaf_permutation_invariance(self):
        rng = np.random.default_rng(13)
        dm = random_matrix(rng, 9)
        perm = rng.permutation(9)
        permuted = DistanceMatrix(entries=dm.entries[np.ix_(perm, perm)],
                                  keys=[dm.keys[p] for p in perm])
        for linkage in ("single", "UPGMA", "ward.D"):
            a = prune(hierarchical_cluster(dm, linkage), 0.5)
            b = prune(hierarchical_cluster(permuted, linkage), 0.5)
            sets_a = {frozenset(dm.keys[i] for i in np.flatnonzero(a.labels == c))
                      for c in range(a.cluster_count)}
            sets_b = {frozenset(permuted.keys[i] for i in np.flatnonzero(b.labels == c))
                      for c in range(b.cluster_count)}
            assert sets_a == sets_b

    def test_json_round_trip(self):
        tree = hierarchical_cluster(chain_matrix(), "complete")
        back = ClusterTree.from_json(tree.to_json())
        assert back.merges == tree.merges
        assert back.linkage == tree.linkage
        assert back.keys == tree.keys


class TestPrune:
    def setup_method(self):
        self.tree = hierarchical_cluster(chain_matrix(), "single")

    def test_above_root_one_cluster(self):
        a = prune(self.tree, self.tree.heights()[-1] + 1)
        assert a.cluster_count == 1
        assert set(a.labels) == {0}

    def test_below_first_merge_singletons(self):
        a = prune(self.tree, self.tree.heights()[0] / 2)
        assert a.cluster_count == 4
        assert sorted(a.labels) == [0, 1, 2, 3]

    def test_intermediate_cut(self):
        # single linkage on 0,1,3,7: merges at 1, 2, 4
        a = prune(self.tree, 2.5)
        assert a.cluster_count == 2
        assert a.labels[0] == a.labels[1] == a.labels[2]
        assert a.labels[3] != a.labels[0]

    def test_count_is_non_increasing_step_function(self):
        rng = np.random.default_rng(14)
        tree = hierarchical_cluster(random_matrix(rng, 12), "UPGMA")
        heights = np.linspace(0, tree.heights()[-1] * 1.05, 40)
        counts = [prune(tree, h).cluster_count for h in heights]
        assert all(c1 >= c2 for c1, c2 in zip(counts, counts[1:]))

    def test_height_for_count(self):
        rng = np.random.default_rng(15)
        tree = hierarchical_cluster(random_matrix(rng, 10), "complete")
        for k in (1, 2, 3, 5, 10):
            assert prune(tree, height_for_count(tree, k)).cluster_count == k


class TestColors:
    def setup_method(self):
        self.tree = hierarchical_cluster(chain_matrix(), "single")
        self.palette = PALETTES["set1_8"]

    def test_single_cluster_gets_first_color(self):
        a = prune(self.tree, 10.0)
        colors = assign_colors(self.tree, a)
        assert colors.colors[0] == self.palette[0]

    def test_split_keeps_parent_color_on_larger_child(self):
        two = prune(self.tree, 2.5)       # {a,b,c} and {d}
        c2 = assign_colors(self.tree, two)
        three = prune(self.tree, 1.5)     # {a,b}, {c}, {d}
        c3 = assign_colors(self.tree, three, previous=c2)
        # cluster of {a, b} is the larger child of the split {a,b,c}
        big_old = next(cid for cid in range(2) if len(c2.leaf_sets[cid]) == 3)
        big_new = next(cid for cid in range(3)
                       if c3.leaf_sets[cid] == frozenset({0, 1}))
        assert c3.colors[big_new] == c2.colors[big_old]
        # the untouched cluster {d} keeps its color
        d_old = next(cid for cid, ls in c2.leaf_sets.items() if ls == frozenset({3}))
        d_new = next(cid for cid, ls in c3.leaf_sets.items() if ls == frozenset({3}))
        assert c3.colors[d_new] == c2.colors[d_old]

    def test_distinct_while_palette_lasts(self):
        rng = np.random.default_rng(16)
        tree = hierarchical_cluster(random_matrix(rng, 8), "complete")
        a = prune(tree, height_for_count(tree, 6))
        colors = assign_colors(tree, a)
        visible = [colors.colors[c] for c in range(a.cluster_count)]
        assert len(set(visible)) == len(visible)

    def test_thirteen_clusters_share_with_palette_of_12(self):
        rng = np.random.default_rng(17)
        tree = hierarchical_cluster(random_matrix(rng, 14), "complete")
        a = prune(tree, height_for_count(tree, 13))
        colors = assign_colors(tree, a, palette=PALETTES["paired_12"])
        visible = [colors.colors[c] for c in range(13)]
        assert len(set(visible)) < 13

    def test_stability_under_refinement_random(self):
        rng = np.random.default_rng(18)
        for _ in range(5):
            tree = hierarchical_cluster(random_matrix(rng, 10), "UPGMA")
            prev_a = prune(tree, height_for_count(tree, 3))
            prev_c = assign_colors(tree, prev_a, palette=PALETTES["paired_12"])
            next_a = prune(tree, height_for_count(tree, 4))
            next_c = assign_colors(tree, next_a, previous=prev_c)
            unchanged = set(prev_c.leaf_sets.values()) & set(next_c.leaf_sets.values())
            assert len(unchanged) == 2       # exactly one cluster split
            for ls in unchanged:
                old = next(c for c, s in prev_c.leaf_sets.items() if s == ls)
                new = next(c for c, s in next_c.leaf_sets.items() if s == ls)
                assert prev_c.colors[old] == next_c.colors[new]


class TestSelectSubtree:
    def setup_method(self):
        self.tree = hierarchical_cluster(chain_matrix(), "single")

    def test_select_root_matches_plain_prune(self):
        h = 1.5
        plain = prune(self.tree, h)
        sub, colors = select_subtree(self.tree, self.tree.root, h)
        np.testing.assert_array_equal(sub.labels, plain.labels)
        assert sub.cluster_count == plain.cluster_count
        assert GREY_ID in colors.colors

    def test_select_leaf_greys_out_everything_else(self):
        sub, colors = select_subtree(self.tree, 2, 0.0)
        assert sub.cluster_count == 1
        assert sub.labels[2] == 0
        assert all(sub.labels[i] == GREY_ID for i in (0, 1, 3))
        assert colors.colors[0] in colors.palette

    def test_refining_selected_cluster_keeps_color_on_largest(self):
        # prune to 2 clusters, then refine the {a,b,c} cluster
        two = prune(self.tree, 2.5)
        c2 = assign_colors(self.tree, two)
        abc_cid = next(cid for cid, ls in c2.leaf_sets.items() if len(ls) == 3)
        abc_root = two.roots[abc_cid]
        old_color = c2.colors[abc_cid]
        sub, colors = select_subtree(self.tree, abc_root, 1.5, previous=c2)
        assert sub.labels[3] == GREY_ID
        assert sub.cluster_count == 2     # {a, b} and {c}
        big = next(cid for cid, ls in colors.leaf_sets.items() if ls == frozenset({0, 1}))
        small = next(cid for cid, ls in colors.leaf_sets.items() if ls == frozenset({2}))
        assert colors.colors[big] == old_color
        assert colors.colors[small] != old_color

    def test_invalid_node(self):
        with pytest.raises(ValueError, match="invalid node"):
            select_subtree(self.tree, 99, 0.5)
