"""Action hierarchy construction and representative-frame selection.

Actions are compared through their alignments: the similarity of two
actions is the mean similarity of their aligned frame pairs, and
1 - similarity is the distance fed to a divisive K-medoids procedure.
Each node is split by the k (grid-searched over 2..max_children) that
maximizes mean silhouette width; recursion stops when a node is small or
no split scores above the threshold.

Representative frames per cluster solve a facility-location objective:
    min_U  sum_j min_{i in U} d_ij + gamma * |U|,   gamma = max d / M
via greedy additions followed by pairwise-swap local search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import AlignmentResult, align_pair
from .bundle import DatasetBundle, cosine_similarity_matrix
from .errors import KTooLargeError, SingleClusterError


def action_similarity(alignment: AlignmentResult) -> float:
    """Mean similarity over aligned pairs; 0 when nothing aligned."""
    if not alignment.pairs:
        return 0.0
    return alignment.objective / len(alignment.pairs)


def pairwise_action_distances(bundle: DatasetBundle, actions: list,
                              constraints_by_pair: dict | None = None) -> tuple:
    """Distance matrix 1 - action_similarity over all unordered pairs, plus
    the alignments it was computed from (keyed (id_a, id_b), id_a < id_b)."""
    constraints_by_pair = constraints_by_pair or {}
    n = len(actions)
    D = np.zeros((n, n), dtype=np.float64)
    alignments = {}
    for a in range(n):
        for b in range(a + 1, n):
            p, q = actions[a], actions[b]
            key = (min(p.action_id, q.action_id), max(p.action_id, q.action_id))
            res = align_pair(bundle, p, q, constraints_by_pair.get(key))
            alignments[key] = res
            D[a, b] = D[b, a] = 1.0 - action_similarity(res)
    return D, alignments


# -- K-medoids ----------------------------------------------------------------

def _pam_build(D: np.ndarray, k: int) -> list:
    """Deterministic BUILD initialization: start from the point with minimum
    total distance, then greedily add the point that most reduces the total
    nearest-medoid cost (ties to the smaller index)."""
    n = D.shape[0]
    totals = D.sum(axis=1)
    medoids = [int(np.argmin(totals))]
    nearest = D[medoids[0]].copy()
    while len(medoids) < k:
        best, best_gain = -1, -np.inf
        for c in range(n):
            if c in medoids:
                continue
            gain = np.maximum(nearest - D[c], 0.0).sum()
            if gain > best_gain:
                best, best_gain = c, gain
        medoids.append(best)
        nearest = np.minimum(nearest, D[best])
    return sorted(medoids)


def k_medoids(D: np.ndarray, k: int, max_iter: int = 100) -> tuple:
    """PAM alternation (assign, update) from the BUILD start; returns
    (labels over 0..k-1 in medoid order, medoid indices sorted)."""
    n = D.shape[0]
    if k < 1 or k > n:
        raise KTooLargeError(f"k={k} outside [1, {n}]")
    medoids = _pam_build(D, k)
    for _ in range(max_iter):
        # ties go to the medoid that comes first in the sorted medoid list
        labels = np.argmin(D[:, medoids], axis=1)
        new_medoids = []
        for c in range(k):
            members = np.where(labels == c)[0]
            if members.size == 0:
                new_medoids.append(medoids[c])
                continue
            within = D[np.ix_(members, members)].sum(axis=1)
            new_medoids.append(int(members[int(np.argmin(within))]))
        new_medoids = sorted(new_medoids)
        if new_medoids == medoids:
            break
        medoids = new_medoids
    labels = np.argmin(D[:, medoids], axis=1)
    return labels, medoids


def silhouette_width(labels: np.ndarray, D: np.ndarray) -> float:
    """Mean silhouette (b - a) / max(a, b); singleton clusters contribute 0."""
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise SingleClusterError("silhouette needs at least two clusters")
    scores = np.zeros(len(labels), dtype=np.float64)
    members = {c: np.where(labels == c)[0] for c in clusters}
    for i in range(len(labels)):
        own = members[labels[i]]
        if own.size == 1:
            continue
        a = D[i, own].sum() / (own.size - 1)
        b = min(D[i, members[c]].mean() for c in clusters if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


# -- divisive hierarchy ---------------------------------------------------------

@dataclass
class ClusterNode:
    node_id: int
    members: list                  # action ids, ascending
    medoid: int                    # action id
    children: list = field(default_factory=list)
    length_histogram: dict = field(default_factory=dict)
    silhouette: float = 0.0        # score of the split below this node

    def walk(self):
        yield self
        for ch in self.children:
            yield from ch.walk()

    def to_json(self) -> dict:
        return {
            "id": self.node_id,
            "members": [int(m) for m in self.members],
            "medoid": int(self.medoid),
            "histogram": self.length_histogram,
            "children": [ch.to_json() for ch in self.children],
        }


@dataclass
class ActionHierarchy:
    category: int
    root: ClusterNode

    def nodes(self):
        yield from self.root.walk()

    def find(self, node_id: int) -> ClusterNode | None:
        for node in self.nodes():
            if node.node_id == node_id:
                return node
        return None

    def to_json(self) -> dict:
        return {"category": int(self.category), "root": self.root.to_json()}


def length_histogram(lengths, bins: int = 10) -> dict:
    counts, edges = np.histogram(np.asarray(list(lengths), dtype=np.float64), bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


class _Counter:
    def __init__(self, start=0):
        self.value = start

    def take(self) -> int:
        v = self.value
        self.value += 1
        return v


def build_hierarchy(action_ids: list, lengths: dict, D: np.ndarray,
                    max_children: int = 8, min_cluster_size: int = 4,
                    silhouette_threshold: float = 0.25,
                    category: int = -1, counter: _Counter | None = None) -> ActionHierarchy:
    """Top-down divisive clustering.  action_ids index the rows of D (same
    order); lengths maps action id -> frame length for the histograms."""
    counter = counter or _Counter()
    action_ids = [int(a) for a in action_ids]

    def medoid_of(rows):
        sub = D[np.ix_(rows, rows)]
        return rows[int(np.argmin(sub.sum(axis=1)))]

    def make_node(rows) -> ClusterNode:
        ids = [action_ids[r] for r in rows]
        node = ClusterNode(
            node_id=counter.take(),
            members=sorted(ids),
            medoid=action_ids[medoid_of(rows)],
            length_histogram=length_histogram([lengths[i] for i in ids]),
        )
        n = len(rows)
        if n < min_cluster_size:
            return node
        sub = D[np.ix_(rows, rows)]
        best_k, best_labels, best_score = None, None, -np.inf
        for k in range(2, min(max_children, n - 1) + 1):
            labels, _ = k_medoids(sub, k)
            if np.unique(labels).size < 2:
                continue
            score = silhouette_width(labels, sub)
            if score > best_score:
                best_k, best_labels, best_score = k, labels, score
        if best_k is None or best_score < silhouette_threshold:
            return node
        node.silhouette = best_score
        for c in sorted(np.unique(best_labels)):
            child_rows = [rows[t] for t in np.where(best_labels == c)[0]]
            node.children.append(make_node(child_rows))
        return node

    root = make_node(list(range(len(action_ids))))
    return ActionHierarchy(category=category, root=root)


# -- representative frames -------------------------------------------------------

@dataclass
class RepresentativeSet:
    cluster_id: int
    selected: list   # global frame indices
    gamma: float
    objective: float


def _facility_objective(D: np.ndarray, chosen: list, gamma: float) -> float:
    return float(D[chosen].min(axis=0).sum() + gamma * len(chosen))


def select_representatives(features: np.ndarray, frame_ids,
                           M: int = 10, gamma: float | None = None,
                           cluster_id: int = -1) -> RepresentativeSet:
    """Greedy facility-location: add frames while each addition pays for its
    gamma cost, then swap selected/unselected pairs to a local optimum."""
    frame_ids = [int(f) for f in frame_ids]
    n = len(frame_ids)
    D = 1.0 - cosine_similarity_matrix(features, features)
    np.fill_diagonal(D, 0.0)
    D = np.maximum(D, 0.0)
    D[D < 1e-12] = 0.0  # cosine of equal rows leaves float dust
    if gamma is None:
        gamma = float(D.max()) / M

    # best single start: the 1-medoid (ties to the earlier frame)
    chosen = [int(np.argmin(D.sum(axis=1)))]
    nearest = D[chosen[0]].copy()
    while len(chosen) < n:
        gains = np.maximum(nearest[None, :] - D, 0.0).sum(axis=1)
        gains[chosen] = -np.inf
        c = int(np.argmax(gains))
        if gains[c] <= gamma:
            break
        chosen.append(c)
        nearest = np.minimum(nearest, D[c])

    improved = True
    while improved:
        improved = False
        current = _facility_objective(D, chosen, gamma)
        best_move, best_obj = None, current
        for oi, out in enumerate(chosen):
            rest = chosen[:oi] + chosen[oi + 1:]
            for inn in range(n):
                if inn in chosen:
                    continue
                obj = _facility_objective(D, rest + [inn], gamma)
                if obj < best_obj - 1e-12:
                    best_move, best_obj = (oi, inn), obj
        if best_move is not None:
            oi, inn = best_move
            chosen[oi] = inn
            improved = True

    chosen = sorted(chosen)
    return RepresentativeSet(
        cluster_id=cluster_id,
        selected=[frame_ids[c] for c in chosen],
        gamma=float(gamma),
        objective=_facility_objective(D, chosen, gamma),
    )


# -- estimator wrappers -----------------------------------------------------------

try:
    from sklearn.base import BaseEstimator
except ImportError:  # pragma: no cover
    BaseEstimator = object


class KMedoids(BaseEstimator):
    """fit(D) on a precomputed distance matrix; exposes labels_ and
    medoid_indices_ like the common sklearn-style implementations."""

    def __init__(self, n_clusters=2, max_iter=100):
        self.n_clusters = n_clusters
        self.max_iter = max_iter

    def fit(self, D, y=None):
        D = np.asarray(D, dtype=np.float64)
        self.labels_, self.medoid_indices_ = k_medoids(D, self.n_clusters, self.max_iter)
        self.inertia_ = float(D[np.arange(len(D)),
                                [self.medoid_indices_[c] for c in self.labels_]].sum())
        return self

    def fit_predict(self, D, y=None):
        return self.fit(D).labels_


class DivisiveHierarchy(BaseEstimator):
    def __init__(self, max_children=8, min_cluster_size=4, silhouette_threshold=0.25):
        self.max_children = max_children
        self.min_cluster_size = min_cluster_size
        self.silhouette_threshold = silhouette_threshold

    def fit(self, D, action_ids=None, lengths=None, category=-1, counter=None):
        D = np.asarray(D, dtype=np.float64)
        if action_ids is None:
            action_ids = list(range(len(D)))
        if lengths is None:
            lengths = {int(a): 1 for a in action_ids}
        self.hierarchy_ = build_hierarchy(
            action_ids, lengths, D,
            max_children=self.max_children,
            min_cluster_size=self.min_cluster_size,
            silhouette_threshold=self.silhouette_threshold,
            category=category, counter=counter)
        return self


class RepresentativeSelector(BaseEstimator):
    def __init__(self, M=10, gamma=None):
        self.M = M
        self.gamma = gamma

    def select(self, features, frame_ids, cluster_id=-1) -> RepresentativeSet:
        return select_representatives(np.asarray(features, dtype=np.float64),
                                      frame_ids, M=self.M, gamma=self.gamma,
                                      cluster_id=cluster_id)
