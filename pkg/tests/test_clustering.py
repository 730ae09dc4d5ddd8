from itertools import combinations

import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from actionloom.clustering import (
    ActionHierarchy,
    DivisiveHierarchy,
    KMedoids,
    _facility_objective,
    action_similarity,
    build_hierarchy,
    k_medoids,
    length_histogram,
    pairwise_action_distances,
    select_representatives,
    silhouette_width,
)
from actionloom.bundle import cosine_similarity_matrix
from actionloom.errors import KTooLargeError, SingleClusterError
from conftest import two_action_bundle


def random_metric(rng, n):
    """Symmetric nonnegative distance matrix with zero diagonal."""
    D = rng.uniform(0.1, 1.0, size=(n, n))
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D


def blob_distances(sizes, within=0.1, between=1.0):
    n = sum(sizes)
    D = np.full((n, n), between)
    start = 0
    for s in sizes:
        D[start:start + s, start:start + s] = within
        start += s
    np.fill_diagonal(D, 0.0)
    return D


# -- k-medoids ----------------------------------------------------------------

def test_k_medoids_recovers_planted_blobs():
    D = blob_distances([4, 5, 3])
    labels, medoids = k_medoids(D, 3)
    groups = [set(np.where(labels == c)[0]) for c in range(3)]
    assert {frozenset(g) for g in groups} == {
        frozenset(range(0, 4)), frozenset(range(4, 9)),
        frozenset(range(9, 12))}
    assert medoids == sorted(medoids)
    for m in medoids:
        assert labels[m] == labels[m]  # medoid belongs to its own cluster
        c = labels[m]
        members = np.where(labels == c)[0]
        assert m in members


def test_k_medoids_medoid_minimizes_within_cluster_distance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(4, 12))
        k = int(rng.integers(1, n))
        D = random_metric(rng, n)
        labels, medoids = k_medoids(D, k)
        for c, m in enumerate(medoids):
            members = np.where(labels == c)[0]
            if members.size == 0:
                continue
            within = D[np.ix_(members, members)].sum(axis=1)
            best = within.min()
            assert D[np.ix_([m], members)].sum() <= best + 1e-12


def test_k_medoids_labels_are_nearest_medoid():
    rng = np.random.default_rng(4)
    D = random_metric(rng, 10)
    labels, medoids = k_medoids(D, 3)
    for i in range(10):
        dists = [D[i, m] for m in medoids]
        assert dists[labels[i]] == min(dists)


def test_k_medoids_is_deterministic():
    rng = np.random.default_rng(5)
    D = random_metric(rng, 12)
    out1 = k_medoids(D, 4)
    out2 = k_medoids(D, 4)
    assert np.array_equal(out1[0], out2[0])
    assert out1[1] == out2[1]


def test_k_medoids_extremes():
    rng = np.random.default_rng(6)
    D = random_metric(rng, 6)
    labels, medoids = k_medoids(D, 1)
    assert len(medoids) == 1
    assert medoids[0] == int(np.argmin(D.sum(axis=1)))
    labels, medoids = k_medoids(D, 6)
    assert sorted(medoids) == list(range(6))
    with pytest.raises(KTooLargeError):
        k_medoids(D, 0)
    with pytest.raises(KTooLargeError):
        k_medoids(D, 7)


# -- silhouette ----------------------------------------------------------------

def test_silhouette_matches_sklearn_without_singletons():
    rng = np.random.default_rng(7)
    for _ in range(15):
        n = int(rng.integers(6, 16))
        D = random_metric(rng, n)
        while True:
            labels = rng.integers(0, 3, size=n)
            counts = np.bincount(labels, minlength=3)
            if np.all(counts >= 2):
                break
        ours = silhouette_width(labels, D)
        ref = silhouette_score(D, labels, metric="precomputed")
        assert ours == pytest.approx(float(ref), abs=1e-12)


def test_silhouette_singletons_score_zero():
    # point 0 alone in its cluster contributes 0 to the mean
    D = blob_distances([1, 3])
    labels = np.array([0, 1, 1, 1])
    ours = silhouette_width(labels, D)
    per_point = []
    for i in (1, 2, 3):
        a = np.mean([D[i, j] for j in (1, 2, 3) if j != i])
        b = D[i, 0]
        per_point.append((b - a) / max(a, b))
    assert ours == pytest.approx((0.0 + sum(per_point)) / 4.0)


def test_silhouette_needs_two_clusters():
    D = blob_distances([4])
    with pytest.raises(SingleClusterError):
        silhouette_width(np.zeros(4, dtype=int), D)


# -- divisive hierarchy -----------------------------------------------------------

def hierarchy_fixture(rng, n=24, planted=3):
    sizes = [n // planted] * planted
    D = blob_distances(sizes, within=0.05, between=1.0)
    noise = rng.uniform(0.0, 0.02, size=D.shape)
    D = D + (noise + noise.T) / 2.0
    np.fill_diagonal(D, 0.0)
    ids = [100 + i for i in range(n)]
    lengths = {a: int(rng.integers(5, 40)) for a in ids}
    return ids, lengths, D


def test_hierarchy_partitions_and_preorder_ids():
    rng = np.random.default_rng(8)
    ids, lengths, D = hierarchy_fixture(rng)
    tree = build_hierarchy(ids, lengths, D, category=2)
    assert isinstance(tree, ActionHierarchy)
    assert tree.root.members == sorted(ids)
    walk = list(tree.nodes())
    assert [n.node_id for n in walk] == list(range(len(walk)))
    for node in walk:
        assert node.medoid in node.members
        assert node.members == sorted(node.members)
        assert sum(node.length_histogram["counts"]) == len(node.members)
        if node.children:
            assert len(node.children) >= 2
            child_members = [m for ch in node.children for m in ch.members]
            assert sorted(child_members) == node.members
            assert node.silhouette >= 0.25


def test_hierarchy_recovers_planted_split():
    rng = np.random.default_rng(9)
    ids, lengths, D = hierarchy_fixture(rng, n=18, planted=3)
    tree = build_hierarchy(ids, lengths, D)
    first_split = {frozenset(ch.members) for ch in tree.root.children}
    expected = {frozenset(ids[0:6]), frozenset(ids[6:12]),
                frozenset(ids[12:18])}
    assert first_split == expected


def test_hierarchy_small_node_stays_leaf():
    rng = np.random.default_rng(10)
    ids, lengths, D = hierarchy_fixture(rng, n=3, planted=1)
    tree = build_hierarchy(ids, lengths, D, min_cluster_size=4)
    assert tree.root.children == []


def test_hierarchy_uniform_points_stay_leaf():
    # no split clears the silhouette bar when every distance is equal
    n = 12
    D = np.full((n, n), 0.7)
    np.fill_diagonal(D, 0.0)
    ids = list(range(n))
    lengths = {a: 10 for a in ids}
    tree = build_hierarchy(ids, lengths, D, silhouette_threshold=0.25)
    assert tree.root.children == []


def test_hierarchy_json_and_find():
    rng = np.random.default_rng(11)
    ids, lengths, D = hierarchy_fixture(rng, n=12, planted=2)
    tree = build_hierarchy(ids, lengths, D, category=1)
    payload = tree.to_json()
    assert payload["category"] == 1
    assert payload["root"]["members"] == sorted(ids)
    assert set(payload["root"].keys()) == {
        "id", "members", "medoid", "histogram", "children"}
    some_child = tree.root.children[0]
    assert tree.find(some_child.node_id) is some_child
    assert tree.find(99999) is None


def test_length_histogram_counts():
    hist = length_histogram([3, 7, 7, 20], bins=4)
    assert sum(hist["counts"]) == 4
    assert len(hist["edges"]) == 5
    assert hist["edges"][0] == pytest.approx(3.0)
    assert hist["edges"][-1] == pytest.approx(20.0)


# -- action distances --------------------------------------------------------------

def test_pairwise_action_distances_symmetric_zero_diagonal():
    rng = np.random.default_rng(12)
    bundle = two_action_bundle(rng, len_p=6, len_q=5)
    D, alignments = pairwise_action_distances(bundle, bundle.actions)
    assert D.shape == (2, 2)
    assert D[0, 0] == 0.0 and D[1, 1] == 0.0
    assert D[0, 1] == D[1, 0]
    assert (0, 1) in alignments
    res = alignments[(0, 1)]
    assert D[0, 1] == pytest.approx(1.0 - action_similarity(res))


def test_action_similarity_unaligned_pair_is_zero():
    class Empty:
        pairs = []
        objective = 0.0

    assert action_similarity(Empty()) == 0.0


# -- representative frames -----------------------------------------------------------

def exhaustive_best(D, gamma, max_n=12):
    n = D.shape[0]
    best = None
    for k in range(1, n + 1):
        for subset in combinations(range(n), k):
            obj = _facility_objective(D, list(subset), gamma)
            if best is None or obj < best:
                best = obj
    return best


def test_representatives_within_five_percent_of_optimum():
    rng = np.random.default_rng(13)
    for trial in range(12):
        n = int(rng.integers(5, 13))
        features = rng.normal(size=(n, 4))
        frame_ids = list(range(1000, 1000 + n))
        rep = select_representatives(features, frame_ids, M=10)
        D = 1.0 - cosine_similarity_matrix(features, features)
        np.fill_diagonal(D, 0.0)
        D = np.maximum(D, 0.0)
        opt = exhaustive_best(D, rep.gamma)
        assert rep.objective <= 1.05 * opt + 1e-12, trial
        assert rep.selected == sorted(rep.selected)
        assert set(rep.selected) <= set(frame_ids)


def test_identical_frames_collapse_to_single_representative():
    features = np.ones((9, 5))
    rep = select_representatives(features, list(range(9)))
    assert len(rep.selected) == 1
    assert rep.objective == pytest.approx(0.0)


def test_representative_gamma_override():
    rng = np.random.default_rng(14)
    features = rng.normal(size=(8, 4))
    rep = select_representatives(features, list(range(8)), gamma=100.0)
    # a huge per-frame price forces the single best medoid
    assert len(rep.selected) == 1


# -- estimator wrappers ------------------------------------------------------------

def test_kmedoids_estimator_matches_function():
    rng = np.random.default_rng(15)
    D = random_metric(rng, 9)
    est = KMedoids(n_clusters=3).fit(D)
    labels, medoids = k_medoids(D, 3)
    assert np.array_equal(est.labels_, labels)
    assert est.medoid_indices_ == medoids
    assert est.get_params()["n_clusters"] == 3


def test_divisive_hierarchy_estimator():
    rng = np.random.default_rng(16)
    ids, lengths, D = hierarchy_fixture(rng, n=12, planted=2)
    est = DivisiveHierarchy(min_cluster_size=4).fit(
        D, action_ids=ids, lengths=lengths)
    assert est.hierarchy_.root.members == sorted(ids)
