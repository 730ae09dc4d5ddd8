"""Constrained pairwise action alignment.

Two actions are aligned by picking a set of frame pairs that is strictly
monotone in both actions (a chain) and maximizes total pair similarity.
Candidate pairs come from an adaptive kNN test plus user must-links, minus
user cannot-links; must-link pairs are mandatory nodes of the chain.

The search is a heaviest-path problem on the implicit DAG whose nodes are
candidate pairs and whose edges connect (i, j) -> (r, t) iff i < r and
j < t.  Background frames may simply stay unaligned; the empty chain with
objective 0 is a feasible solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import Action, DatasetBundle, cosine_similarity_matrix
from .errors import (
    ConflictingConstraintError,
    EmptyCandidatesError,
    FrameOutsideActionError,
    InfeasibleConstraintsError,
)


@dataclass(frozen=True)
class KParams:
    """Adaptive-kNN parameters.

    k grows from k_min until the mean predicted-category confidence of the
    k nearest candidates reaches confidence_threshold; if no k in
    [k_min, k_max] qualifies, k_max is used.  With mutual=True a pair is a
    candidate only when each frame is in the other's kNN set; with
    mutual=False one direction suffices.
    """

    confidence_threshold: float = 0.5
    k_min: int = 1
    k_max: int = 5
    mutual: bool = True


@dataclass
class AlignmentConstraints:
    must_link: set = field(default_factory=set)    # {(p_frame, q_frame)}
    cannot_link: set = field(default_factory=set)
    k_params: KParams = field(default_factory=KParams)

    def validate(self) -> None:
        overlap = set(self.must_link) & set(self.cannot_link)
        if overlap:
            raise ConflictingConstraintError(
                f"pairs both must-linked and cannot-linked: {sorted(overlap)}")
        pairs = sorted(self.must_link)
        for (p, q), (p2, q2) in zip(pairs, pairs[1:]):
            if p < p2 and q2 < q:
                raise InfeasibleConstraintsError(
                    f"must-link pairs ({p},{q}) and ({p2},{q2}) cross in time")


@dataclass
class AlignmentResult:
    pair: tuple    # (action id of P, action id of Q)
    pairs: list    # [(i, j)] global frame indices, ordered along the chain
    objective: float

    @property
    def z(self) -> frozenset:
        """Sparse view of the binary assignment: membership == z_ij = 1."""
        return frozenset(self.pairs)

    def to_json(self) -> dict:
        return {
            "pair": [int(self.pair[0]), int(self.pair[1])],
            "pairs": [[int(i), int(j)] for i, j in self.pairs],
            "objective": float(self.objective),
        }


@dataclass
class AlignmentDag:
    """Candidate pair graph.  Edges are implicit (strict precedence in both
    actions) and only materialized on request."""

    nodes: list          # [(i, j)] sorted lexicographically
    weights: np.ndarray  # s_ij per node
    required: set = field(default_factory=set)

    @property
    def edges(self) -> list:
        out = []
        for a, (i, j) in enumerate(self.nodes):
            for b, (r, t) in enumerate(self.nodes):
                if i < r and j < t:
                    out.append((a, b))
        return out


def adaptive_k(similarities, confidences, k_params: KParams) -> int:
    """Smallest k in [k_min, k_max] whose k nearest candidates have mean
    confidence >= the threshold; k_max when none qualifies.

    similarities: nearness of each candidate to the query frame.
    confidences: predicted-category confidence of each candidate.
    """
    similarities = np.asarray(similarities, dtype=np.float64)
    confidences = np.asarray(confidences, dtype=np.float64)
    n = similarities.size
    if n == 0:
        raise EmptyCandidatesError("adaptive_k needs at least one candidate")
    # nearest first; equal similarities resolve to the earlier candidate
    order = np.lexsort((np.arange(n), -similarities))
    k_max = min(k_params.k_max, n)
    k_min = min(k_params.k_min, k_max)
    running = np.cumsum(confidences[order])
    for k in range(k_min, k_max + 1):
        if running[k - 1] / k >= k_params.confidence_threshold:
            return k
    return k_max


def _knn_sets(S: np.ndarray, confidences: np.ndarray, k_params: KParams) -> list:
    """Per row of S: the set of column indices forming the row's adaptive kNN."""
    n_rows, n_cols = S.shape
    out = []
    cols = np.arange(n_cols)
    for r in range(n_rows):
        k = adaptive_k(S[r], confidences, k_params)
        order = np.lexsort((cols, -S[r]))
        out.append(set(order[:k].tolist()))
    return out


def build_dag(bundle: DatasetBundle, p: Action, q: Action,
              constraints: AlignmentConstraints | None = None) -> AlignmentDag:
    """Construct the candidate-pair graph for aligning P with Q.

    Nodes use global frame indices.  must_link pairs are added regardless of
    the kNN test (user overrides the model); cannot_link pairs are removed.
    """
    if constraints is None:
        constraints = AlignmentConstraints()
    constraints.validate()

    p_frames = np.arange(p.start, p.end + 1)
    q_frames = np.arange(q.start, q.end + 1)
    S = cosine_similarity_matrix(bundle.features[p_frames], bundle.features[q_frames])
    conf_p = bundle.predictions[p_frames, p.category]
    conf_q = bundle.predictions[q_frames, q.category]

    knn_p = _knn_sets(S, conf_q, constraints.k_params)        # per P frame: Q candidates
    knn_q = _knn_sets(S.T, conf_p, constraints.k_params)      # per Q frame: P candidates

    candidate = set()
    for pi in range(len(p_frames)):
        for qj in range(len(q_frames)):
            forward = qj in knn_p[pi]
            backward = pi in knn_q[qj]
            if (forward and backward) if constraints.k_params.mutual else (forward or backward):
                candidate.add((int(p_frames[pi]), int(q_frames[qj])))

    for i, j in constraints.must_link:
        if not (p.start <= i <= p.end):
            raise FrameOutsideActionError(f"must-link frame {i} outside action {p.action_id}")
        if not (q.start <= j <= q.end):
            raise FrameOutsideActionError(f"must-link frame {j} outside action {q.action_id}")
        candidate.add((i, j))
    for i, j in constraints.cannot_link:
        candidate.discard((i, j))

    nodes = sorted(candidate)
    weights = np.array(
        [S[i - p.start, j - q.start] for i, j in nodes], dtype=np.float64)
    return AlignmentDag(nodes=nodes, weights=weights,
                        required=set(constraints.must_link))


def heaviest_path(dag: AlignmentDag, pair: tuple = (-1, -1)) -> AlignmentResult:
    """Maximum-total-weight strict chain through the node set that visits
    every required node; ties resolve to the lexicographically smallest pair
    sequence (the empty chain counts as smallest at objective 0).
    """
    nodes = dag.nodes
    w = dag.weights
    required = sorted(dag.required)
    for a, b in zip(required, required[1:]):
        if not (a[0] < b[0] and a[1] < b[1]):
            raise InfeasibleConstraintsError(
                f"required pairs {a} and {b} cannot lie on one monotone path")
    node_index = {v: t for t, v in enumerate(nodes)}
    for r in required:
        if r not in node_index:
            raise InfeasibleConstraintsError(f"required pair {r} is not a node")

    m = len(required)

    def slot_of(v):
        # slot k: strictly after required[k-1] and strictly before required[k]
        k = 0
        while k < m and required[k][0] < v[0] and required[k][1] < v[1]:
            k += 1
        for r in required[k:]:
            if not (v[0] < r[0] and v[1] < r[1]):
                return None
        return k

    required_set = set(required)
    slots = [[] for _ in range(m + 1)]
    for t, v in enumerate(nodes):
        if v in required_set:
            continue
        k = slot_of(v)
        if k is not None:
            slots[k].append(t)

    G = {}     # node index -> best suffix weight starting there
    SUCC = {}  # node index -> next node index on that suffix, or None

    def solve_slot(k, tail_value, tail_succ, tail_is_stop):
        """Suffix DP inside one slot.  tail_* describe what follows the slot:
        either the next required node or the permission to stop."""
        idx = slots[k]
        I = np.array([nodes[t][0] for t in idx], dtype=np.int64)
        J = np.array([nodes[t][1] for t in idx], dtype=np.int64)
        g = np.empty(len(idx), dtype=np.float64)
        for pos in range(len(idx) - 1, -1, -1):
            t = idx[pos]
            best, succ = tail_value, tail_succ
            mask = (I > I[pos]) & (J > J[pos])
            if mask.any():
                cand = np.where(mask, g, -np.inf)
                best_pos = int(np.argmax(cand))  # first max = lex-smallest node
                if (cand[best_pos] > best) or (cand[best_pos] == best and not tail_is_stop):
                    best, succ = cand[best_pos], idx[best_pos]
            g[pos] = w[t] + best
            G[t], SUCC[t] = g[pos], succ

    # walk backwards over ... slot k, required[k], slot k+1 ...
    solve_slot(m, 0.0, None, tail_is_stop=True)
    for k in range(m - 1, -1, -1):
        rt = node_index[required[k]]
        # displaceable_on_tie: the required tail is lex-largest so any slot
        # node ties past it; stopping, and slot nodes already chosen, do not.
        best, succ, displaceable = 0.0, None, False
        if k + 1 < m:
            nxt = node_index[required[k + 1]]
            best, succ, displaceable = G[nxt], nxt, True
        for t in slots[k + 1]:
            if (G[t] > best) or (G[t] == best and displaceable):
                best, succ, displaceable = G[t], t, False
        G[rt] = w[rt] + best
        SUCC[rt] = succ
        solve_slot(k, G[rt], rt, tail_is_stop=False)

    # pick the first node of the chain
    first, opt = None, 0.0
    head = list(slots[0])
    if m > 0:
        head.append(node_index[required[0]])
        opt = -np.inf
    for t in head:
        if G[t] > opt:
            first, opt = t, G[t]
    if m == 0 and (first is None or opt <= 0.0):
        return AlignmentResult(pair=pair, pairs=[], objective=0.0)

    chain = []
    t = first
    while t is not None:
        chain.append(nodes[t])
        t = SUCC[t]
    objective = float(np.sum(w[[node_index[v] for v in chain]]))
    return AlignmentResult(pair=pair, pairs=chain, objective=objective)


def align_pair(bundle: DatasetBundle, p: Action, q: Action,
               constraints: AlignmentConstraints | None = None) -> AlignmentResult:
    dag = build_dag(bundle, p, q, constraints)
    return heaviest_path(dag, pair=(p.action_id, q.action_id))


def align_neighborhood(bundle: DatasetBundle, center: Action, neighbors: list,
                       constraints_by_pair: dict | None = None) -> dict:
    """Pairwise alignments between a center action and each neighbor, keyed
    by (center id, neighbor id) in ascending neighbor-id order."""
    constraints_by_pair = constraints_by_pair or {}
    out = {}
    for nb in sorted(neighbors, key=lambda a: a.action_id):
        key = (center.action_id, nb.action_id)
        out[key] = align_pair(bundle, center, nb, constraints_by_pair.get(key))
    return out


try:
    from sklearn.base import BaseEstimator
except ImportError:  # pragma: no cover
    BaseEstimator = object


class PairwiseAligner(BaseEstimator):
    """Estimator-style wrapper around align_pair with kNN parameters as
    constructor arguments (get_params/set_params compatible)."""

    def __init__(self, confidence_threshold=0.5, k_min=1, k_max=5, mutual=True):
        self.confidence_threshold = confidence_threshold
        self.k_min = k_min
        self.k_max = k_max
        self.mutual = mutual

    def _k_params(self) -> KParams:
        return KParams(self.confidence_threshold, self.k_min, self.k_max, self.mutual)

    def align(self, bundle: DatasetBundle, p: Action, q: Action,
              must_link=None, cannot_link=None) -> AlignmentResult:
        constraints = AlignmentConstraints(
            must_link=set(must_link or ()),
            cannot_link=set(cannot_link or ()),
            k_params=self._k_params(),
        )
        return align_pair(bundle, p, q, constraints)
