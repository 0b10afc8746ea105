"""Ward agglomerative clustering with cannot-link constraints.

Clusters are merged greedily by the Ward increase of inertia computed from
explicit mass centers. Two clusters holding a cannot-link pair are at an
infinite distance, a property the merged cluster inherits. When no finite
merge remains the process stops, leaving a forest of dendrograms that are
cut independently with the silhouette criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

INF = math.inf
# mean silhouette below this means "no substantial structure": keep the tree whole
NO_STRUCTURE = 0.25


@dataclass(frozen=True)
class Merge:
    node_id: int
    left: int
    right: int
    height: float
    mass: float
    center: np.ndarray = field(repr=False, compare=False)


@dataclass
class DendrogramForest:
    """Binary merge trees over ``n_leaves`` instances.

    Leaves are numbered ``0..n-1``; the k-th merge creates node ``n + k``.
    """

    n_leaves: int
    merges: list[Merge]
    leaf_ids: list = field(default_factory=list)

    def __post_init__(self):
        if not self.leaf_ids:
            self.leaf_ids = list(range(self.n_leaves))
        self._children = {m.node_id: (m.left, m.right) for m in self.merges}

    def children(self, node: int) -> Optional[tuple[int, int]]:
        return self._children.get(node)

    def leaves(self, node: int) -> list[int]:
        stack, out = [node], []
        while stack:
            cur = stack.pop()
            kids = self._children.get(cur)
            if kids is None:
                out.append(cur)
            else:
                stack.extend(kids)
        return sorted(out)

    @property
    def roots(self) -> list[int]:
        used = {c for m in self.merges for c in (m.left, m.right)}
        nodes = list(range(self.n_leaves)) + [m.node_id for m in self.merges]
        roots = [n for n in nodes if n not in used]
        return sorted(roots, key=lambda r: self.leaves(r)[0])

    @property
    def n_trees(self) -> int:
        return self.n_leaves - len(self.merges)

    def trees(self) -> list[list[int]]:
        """Leaf indices of each tree, ordered by smallest leaf."""
        return [self.leaves(r) for r in self.roots]

    def tree_merges(self, root: int) -> list[Merge]:
        members = set()
        stack = [root]
        while stack:
            cur = stack.pop()
            kids = self._children.get(cur)
            if kids is not None:
                members.add(cur)
                stack.extend(kids)
        return [m for m in self.merges if m.node_id in members]

    def to_records(self) -> list[dict]:
        """Node records (leaves first) for export and plotting."""
        records = [
            {"node_id": i, "children": [], "height": 0.0, "member_ids": [self.leaf_ids[i]]}
            for i in range(self.n_leaves)
        ]
        for m in self.merges:
            records.append(
                {
                    "node_id": m.node_id,
                    "children": [m.left, m.right],
                    "height": m.height,
                    "member_ids": [self.leaf_ids[i] for i in self.leaves(m.node_id)],
                }
            )
        return records


def normalize_constraints(pairs: Iterable, n: Optional[int] = None) -> set[tuple[int, int]]:
    out = set()
    for a, b in pairs:
        if a == b:
            raise ValueError(f"cannot-link constraint on a single instance {a}")
        if n is not None and not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"constraint ({a}, {b}) refers to an unknown instance")
        out.add((min(a, b), max(a, b)))
    return out


def ward_delta(mass_a: float, center_a: np.ndarray, mass_b: float, center_b: np.ndarray) -> float:
    diff = np.asarray(center_a, dtype=float) - np.asarray(center_b, dtype=float)
    return mass_a * mass_b / (mass_a + mass_b) * float(diff @ diff)


def cluster_delta(
    members_a: Sequence[int],
    members_b: Sequence[int],
    vectors: np.ndarray,
    masses: Optional[np.ndarray] = None,
    constraints: Iterable = (),
) -> float:
    """Ward merge cost of two clusters given by member indices; inf if any pair is cannot-linked."""
    cons = normalize_constraints(constraints)
    for a in members_a:
        for b in members_b:
            if (min(a, b), max(a, b)) in cons:
                return INF
    vectors = np.asarray(vectors, dtype=float)
    masses = np.ones(len(vectors)) if masses is None else np.asarray(masses, dtype=float)
    ma = masses[list(members_a)].sum()
    mb = masses[list(members_b)].sum()
    ga = (masses[list(members_a), None] * vectors[list(members_a)]).sum(axis=0) / ma
    gb = (masses[list(members_b), None] * vectors[list(members_b)]).sum(axis=0) / mb
    return ward_delta(ma, ga, mb, gb)


def agglomerate(
    vectors: np.ndarray,
    constraints: Iterable = (),
    masses: Optional[np.ndarray] = None,
    leaf_ids: Optional[Sequence] = None,
    on_merge=None,
) -> DendrogramForest:
    """Greedy Ward agglomeration honoring cannot-link constraints.

    ``constraints`` are pairs of row indices. Equal costs are resolved in
    favour of the lexicographically smallest (id, id) pair, where merged
    clusters receive ids ``n, n+1, ...``. ``on_merge(state)`` is called after
    each merge with the active cluster ids and the cost table, for
    inspection in tests.
    """
    x = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise ValueError("nothing to cluster")
    m = np.ones(n) if masses is None else np.asarray(masses, dtype=float).copy()
    if m.shape != (n,) or np.any(m <= 0):
        raise ValueError("masses must be positive, one per instance")
    cons = normalize_constraints(constraints, n)

    size = 2 * n - 1
    centers = np.zeros((size, x.shape[1]))
    centers[:n] = x
    mass = np.zeros(size)
    mass[:n] = m
    active = np.zeros(size, dtype=bool)
    active[:n] = True
    blocked = np.zeros((size, size), dtype=bool)
    for a, b in cons:
        blocked[a, b] = blocked[b, a] = True

    cost = np.full((size, size), INF)
    diff = x[:, None, :] - x[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    pair_mass = m[:, None] * m[None, :] / (m[:, None] + m[None, :])
    cost[:n, :n] = pair_mass * sq
    cost[blocked] = INF
    cost[np.tril_indices(size)] = INF

    merges: list[Merge] = []
    next_id = n
    while True:
        flat = int(np.argmin(cost))
        i, j = divmod(flat, size)
        height = cost[i, j]
        if not np.isfinite(height):
            break
        new = next_id
        next_id += 1
        mass[new] = mass[i] + mass[j]
        centers[new] = (mass[i] * centers[i] + mass[j] * centers[j]) / mass[new]
        merges.append(Merge(new, i, j, float(height), float(mass[new]), centers[new].copy()))
        active[i] = active[j] = False
        cost[i, :] = cost[:, i] = INF
        cost[j, :] = cost[:, j] = INF
        # constraint inheritance
        blocked[new] = blocked[i] | blocked[j]
        blocked[:, new] = blocked[new]
        others = np.flatnonzero(active)
        if others.size:
            d = centers[others] - centers[new]
            c = mass[others] * mass[new] / (mass[others] + mass[new]) * np.einsum("ij,ij->i", d, d)
            c[blocked[new, others]] = INF
            cost[others, new] = c
        active[new] = True
        if on_merge is not None:
            on_merge(_MergeState(merges[-1], np.flatnonzero(active), blocked, cost))
    return DendrogramForest(n, merges, list(leaf_ids) if leaf_ids is not None else [])


@dataclass
class _MergeState:
    merge: Merge
    active: np.ndarray
    blocked: np.ndarray
    cost: np.ndarray

    def delta(self, a: int, b: int) -> float:
        lo, hi = min(a, b), max(a, b)
        return float(self.cost[lo, hi])


def silhouette_samples(labels: Sequence, distances: np.ndarray) -> np.ndarray:
    """Per-instance silhouette widths; 0 for singletons and for a single cluster."""
    labels = np.asarray(labels)
    d = np.asarray(distances, dtype=float)
    n = labels.shape[0]
    if n < 2:
        raise ValueError("silhouette needs at least 2 instances")
    if d.shape != (n, n):
        raise ValueError("distance matrix does not match the partition")
    uniq, inv = np.unique(labels, return_inverse=True)
    k = uniq.shape[0]
    if k == 1:
        return np.zeros(n)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sums = d @ onehot  # n x k: total distance from i to each cluster
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes
    mean_other[np.arange(n), inv] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    return np.where(own > 1, s, 0.0)


def silhouette_score(labels: Sequence, distances: np.ndarray) -> float:
    """Mean silhouette width of a partition.

    Instances alone in their cluster score 0, and so does a partition with a
    single cluster.
    """
    return float(silhouette_samples(labels, distances).mean())


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < 2:
        return np.zeros((x.shape[0], x.shape[0]))
    return squareform(pdist(x))


@dataclass
class TreeCut:
    leaves: list[int]
    n_clusters: int
    score: float
    labels: list[int]  # local cluster index per leaf, same order as ``leaves``


def _tree_partitions(forest: DendrogramForest, root: int) -> tuple[list[int], list[np.ndarray]]:
    """Leaves of a tree and its nested partitions, from all-singletons to one cluster."""
    leaves = forest.leaves(root)
    pos = {leaf: k for k, leaf in enumerate(leaves)}
    groups = {leaf: [leaf] for leaf in leaves}

    def snapshot():
        lab = np.empty(len(leaves), dtype=int)
        for g, mem in enumerate(sorted(groups.values(), key=min)):
            for leaf in mem:
                lab[pos[leaf]] = g
        return lab

    out = [snapshot()]
    for m in forest.tree_merges(root):
        groups[m.node_id] = groups.pop(m.left) + groups.pop(m.right)
        out.append(snapshot())
    out.reverse()  # k = 1, 2, ...
    return leaves, out


def cut_tree(
    forest: DendrogramForest,
    root: int,
    distances: np.ndarray,
    context: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    null_score: float = 0.0,
) -> TreeCut:
    """Best horizontal cut of one tree by silhouette; ties go to fewer clusters.

    Without ``context`` the silhouette only sees the tree's own instances. With
    ``context`` (a cluster label per leaf of the whole forest, negative for the
    tree being cut) the instances of the other trees take part as fixed
    clusters and the score is averaged over the tree's instances only.
    The one-cluster cut scores at least ``null_score``, so a split has to beat
    that level to be kept.
    """
    leaves, candidates = _tree_partitions(forest, root)
    if len(leaves) == 1 and context is None:
        return TreeCut(leaves, 1, 0.0, [0])
    if context is None:
        sub = distances[np.ix_(leaves, leaves)]
    best = None
    for lab in candidates:
        k = int(lab.max()) + 1
        if context is None:
            score = silhouette_score(lab, sub)
        else:
            full = np.asarray(context).copy()
            offset = full.max() + 1
            full[leaves] = offset + lab
            score = float(silhouette_samples(full, distances)[leaves].mean())
        if k == 1:
            score = max(score, null_score)
        if best is None or score > best.score + tol:
            best = TreeCut(leaves, k, score, lab.tolist())
    return best


@dataclass
class Partition:
    """Cluster id per instance (row index), ids contiguous from 0."""

    labels: list[int]
    tree_cuts: list[TreeCut] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels))

    def clusters(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i, c in enumerate(self.labels):
            out.setdefault(c, []).append(i)
        return [out[c] for c in sorted(out)]

    def violates(self, constraints: Iterable) -> list[tuple[int, int]]:
        return [(a, b) for a, b in constraints if self.labels[a] == self.labels[b]]


def cut_forest(
    forest: DendrogramForest, distances: np.ndarray, context: str = "tree", null_score: float = NO_STRUCTURE
) -> Partition:
    """Cut every tree and take the union of the partitions.

    A tree is split only when its best silhouette exceeds ``null_score``;
    the default treats scores up to 0.25 as no substantial structure. With
    ``context="tree"`` a tree's cuts are scored on its own instances; with
    ``context="forest"`` every other tree is present as one whole cluster.
    """
    if context not in ("forest", "tree"):
        raise ValueError("context must be 'forest' or 'tree'")
    distances = np.asarray(distances, dtype=float)
    roots = forest.roots
    whole = np.empty(forest.n_leaves, dtype=int)
    for t, root in enumerate(roots):
        whole[forest.leaves(root)] = t
    labels = [-1] * forest.n_leaves
    cuts = []
    offset = 0
    for t, root in enumerate(roots):
        ctx = None
        if context == "forest" and len(roots) > 1:
            ctx = whole.copy()
            ctx[whole == t] = -1
        cut = cut_tree(forest, root, distances, ctx, null_score=null_score)
        for leaf, lab in zip(cut.leaves, cut.labels):
            labels[leaf] = offset + lab
        offset += cut.n_clusters
        cuts.append(cut)
    return Partition(labels, cuts)


def cluster(vectors: np.ndarray, constraints: Iterable = (), masses=None) -> tuple[DendrogramForest, Partition]:
    """Agglomerate then cut; distances are Euclidean on ``vectors``."""
    forest = agglomerate(vectors, constraints, masses)
    return forest, cut_forest(forest, pairwise_distances(vectors))
