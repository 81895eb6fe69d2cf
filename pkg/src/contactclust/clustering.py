"""Pairwise distances, agglomerative clustering, dendrogram cuts and seriation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InputError

LINKAGES = ("complete", "single", "average", "ward")


@dataclass(frozen=True)
class DistanceMatrix:
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "labels", tuple(self.labels))
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] != len(self.labels):
            raise InputError("distance matrix must be square and match its labels")
        if len(set(self.labels)) != len(self.labels):
            raise InputError("duplicate labels in distance matrix")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputError("distances must be finite and nonnegative")
        if np.any(np.diag(v) != 0):
            raise InputError("distance matrix diagonal must be zero")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12):
            raise InputError("distance matrix is not symmetric")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.labels)


def pairwise_euclidean(features: np.ndarray, labels: Sequence[str] | None = None) -> DistanceMatrix:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise InputError("features must form a 2-D array (one row per item)")
    if X.shape[0] < 2:
        raise InputError("need at least two feature vectors")
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(X.shape[0]))
    return DistanceMatrix(labels, squareform(pdist(X, "euclidean")))


class Merge(NamedTuple):
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree. Leaves are nodes ``0..n-1``; merge ``k`` creates node ``n + k``."""

    labels: tuple[str, ...]
    merges: tuple[Merge, ...]
    linkage: str = "complete"

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    def children(self, node: int) -> tuple[int, int] | None:
        if node < self.n_leaves:
            return None
        m = self.merges[node - self.n_leaves]
        return m.left, m.right

    def height(self, node: int) -> float:
        return 0.0 if node < self.n_leaves else self.merges[node - self.n_leaves].height

    @property
    def root(self) -> int:
        return self.n_leaves + len(self.merges) - 1

    def linkage_matrix(self) -> np.ndarray:
        """scipy-style (n-1) x 4 linkage matrix."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)

    def leaf_nodes(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            kids = self.children(node)
            if kids is None:
                out.append(node)
            else:
                stack.extend((kids[1], kids[0]))
        return out

    def to_dict(self, node: int | None = None) -> dict:
        node = self.root if node is None else node
        kids = self.children(node)
        if kids is None:
            return {"label": self.labels[node], "height": 0.0}
        return {"height": self.height(node), "size": self.merges[node - self.n_leaves].size,
                "children": [self.to_dict(kids[0]), self.to_dict(kids[1])]}

    def to_newick(self) -> str:
        def rec(node: int, parent_h: float) -> str:
            kids = self.children(node)
            h = self.height(node)
            body = _newick_label(self.labels[node]) if kids is None else f"({rec(kids[0], h)},{rec(kids[1], h)})"
            return f"{body}:{parent_h - h!r}"

        kids = self.children(self.root)
        h = self.height(self.root)
        return f"({rec(kids[0], h)},{rec(kids[1], h)});"


def _newick_label(label: str) -> str:
    if any(c in label for c in " ():;,[]'"):
        return "'" + label.replace("'", "''") + "'"
    return label


def _lance_williams(method: str, d_ki: float, d_kj: float, d_ij: float, n_i: int, n_j: int, n_k: int) -> float:
    if method == "complete":
        return max(d_ki, d_kj)
    if method == "single":
        return min(d_ki, d_kj)
    if method == "average":
        return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)
    # ward, on unsquared distances
    t = n_i + n_j + n_k
    val = ((n_i + n_k) * d_ki**2 + (n_j + n_k) * d_kj**2 - n_k * d_ij**2) / t
    return float(np.sqrt(max(val, 0.0)))


def agglomerate(d: DistanceMatrix, linkage: str = "complete") -> Dendrogram:
    """Agglomerative clustering with Lance-Williams updates.

    Among equally close candidate pairs, the pair whose (smaller, larger)
    minimum original leaf indices sort first is merged.
    """
    if linkage not in LINKAGES:
        raise InputError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    n = len(d)
    if n < 2:
        raise InputError("need at least two items to cluster")
    D = d.values.copy()
    active = list(range(n))            # row index into D
    node_of = list(range(n))           # row -> dendrogram node id
    min_leaf = list(range(n))          # row -> smallest leaf index in cluster
    size = [1] * n
    merges: list[Merge] = []
    for step in range(n - 1):
        best = None
        for a_pos, a in enumerate(active):
            for b in active[a_pos + 1:]:
                key = (D[a, b],) + tuple(sorted((min_leaf[a], min_leaf[b])))
                if best is None or key < best[0]:
                    best = (key, a, b)
        (h, *_), a, b = best
        na, nb = node_of[a], node_of[b]
        left, right = sorted((na, nb))
        merges.append(Merge(left, right, float(h), size[a] + size[b]))
        for k in active:
            if k in (a, b):
                continue
            D[a, k] = D[k, a] = _lance_williams(linkage, D[k, a], D[k, b], D[a, b], size[a], size[b], size[k])
        active.remove(b)
        node_of[a] = n + step
        min_leaf[a] = min(min_leaf[a], min_leaf[b])
        size[a] += size[b]
    heights = [m.height for m in merges]
    if linkage in ("complete", "single") and any(y < x for x, y in zip(heights, heights[1:])):
        raise AssertionError("merge heights decreased; linkage is not monotone")
    return Dendrogram(d.labels, tuple(merges), linkage)


def agglomerate_complete(d: DistanceMatrix) -> Dendrogram:
    return agglomerate(d, "complete")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[str, ...]
    cluster_ids: tuple[int, ...]
    height: float

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.labels, self.cluster_ids))

    @property
    def n_clusters(self) -> int:
        return len(set(self.cluster_ids))

    def groups(self) -> list[list[str]]:
        out: dict[int, list[str]] = {}
        for lab, cid in zip(self.labels, self.cluster_ids):
            out.setdefault(cid, []).append(lab)
        return [out[k] for k in sorted(out)]

    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups()]


def cut(dend: Dendrogram, height: float) -> ClusterAssignment:
    """Flat clusters formed by every merge at or below ``height``.

    Cluster ids start at 1 and follow the first appearance of each cluster
    in the dendrogram's leaf order.
    """
    if height < 0:
        raise InputError("cut height must be nonnegative")
    n = dend.n_leaves
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    rep = list(range(n))  # node id -> some leaf below it
    for k, m in enumerate(dend.merges):
        rep.append(rep[m.left])
        if m.height <= height:
            parent[find(rep[m.right])] = find(rep[m.left])
    ids: dict[int, int] = {}
    for leaf in dend.leaf_nodes():
        ids.setdefault(find(leaf), len(ids) + 1)
    return ClusterAssignment(dend.labels, tuple(ids[find(i)] for i in range(n)), float(height))


def leaf_order(dend: Dendrogram) -> list[str]:
    """Leaf labels in left-to-right order."""
    return [dend.labels[i] for i in dend.leaf_nodes()]


def seriate(d: DistanceMatrix, order: Sequence[str]) -> DistanceMatrix:
    order = list(order)
    if sorted(order) != sorted(d.labels) or len(set(order)) != len(order):
        raise InputError("order must be a permutation of the distance-matrix labels")
    pos = {lab: i for i, lab in enumerate(d.labels)}
    idx = [pos[lab] for lab in order]
    return DistanceMatrix(tuple(order), d.values[np.ix_(idx, idx)])


def dendrogram_segments(dend: Dendrogram) -> list[dict]:
    """Line segments for drawing the dendrogram: leaves at x = 0..n-1, heights on y."""
    x = {node: float(i) for i, node in enumerate(dend.leaf_nodes())}
    segs = []
    for k, m in enumerate(dend.merges):
        node = dend.n_leaves + k
        xl, xr = x[m.left], x[m.right]
        hl, hr = dend.height(m.left), dend.height(m.right)
        x[node] = (xl + xr) / 2
        segs += [
            {"node": node, "x0": xl, "y0": hl, "x1": xl, "y1": m.height},
            {"node": node, "x0": xl, "y0": m.height, "x1": xr, "y1": m.height},
            {"node": node, "x0": xr, "y0": hr, "x1": xr, "y1": m.height},
        ]
    return segs
