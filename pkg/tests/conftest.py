import numpy as np
import pytest

from actionloom.bundle import (
    Action,
    CategoryMeta,
    DatasetBundle,
    GroundTruthSegment,
    VideoMeta,
)


def build_bundle(frame_counts, actions_spec, n_categories, feature_dim=6,
                 seed=0, features=None, predictions=None, ground_truth=None,
                 anchors=None, boundaries=None):
    """Assemble a bundle from compact specs.

    frame_counts: frames per video, video ids are 0..len-1.
    actions_spec: (action_id, video_id, start, end, anchor, category) with
    global frame indices.
    """
    rng = np.random.default_rng(seed)
    videos = []
    offset = 0
    for vid, count in enumerate(frame_counts):
        videos.append(VideoMeta(vid, f"video-{vid}", count, offset))
        offset += count
    total = offset
    if features is None:
        features = rng.normal(size=(total, feature_dim)).astype(np.float32)
    if predictions is None:
        predictions = rng.uniform(0.05, 0.95, size=(total, n_categories + 1))
        predictions = predictions.astype(np.float32)
    actions = [Action(*spec) for spec in actions_spec]
    categories = [CategoryMeta(c, f"cat-{c}") for c in range(n_categories)]
    gt = None
    if ground_truth is not None:
        gt = [GroundTruthSegment(*g) for g in ground_truth]
    bundle = DatasetBundle(
        videos=videos,
        features=np.asarray(features, dtype=np.float32),
        predictions=np.asarray(predictions, dtype=np.float32),
        actions=actions,
        categories=categories,
        anchors=list(anchors or []),
        boundaries=list(boundaries or []),
        ground_truth=gt,
    )
    bundle.validate()
    return bundle


def two_action_bundle(rng, len_p=5, len_q=5, feature_dim=4, gap=3):
    """One video holding two same-category actions separated by a gap."""
    total = len_p + len_q + 3 * gap
    start_p = gap
    start_q = gap + len_p + gap
    spec = [
        (0, 0, start_p, start_p + len_p - 1, start_p + len_p // 2, 0),
        (1, 0, start_q, start_q + len_q - 1, start_q + len_q // 2, 0),
    ]
    features = rng.normal(size=(total, feature_dim)).astype(np.float32)
    predictions = rng.uniform(0.05, 0.95, size=(total, 2)).astype(np.float32)
    return build_bundle([total], spec, 1, features=features,
                        predictions=predictions)


@pytest.fixture
def tiny_bundle():
    """Two videos, two categories, four actions, no randomness in spans."""
    spec = [
        (0, 0, 4, 11, 7, 0),
        (1, 0, 18, 27, 22, 0),
        (2, 1, 37, 46, 42, 1),
        (3, 1, 54, 63, 58, 1),
    ]
    gt = [
        (0, 3, 12, 0),
        (0, 17, 28, 0),
        (1, 36, 47, 1),
        (1, 53, 64, 1),
    ]
    return build_bundle([34, 36], spec, 2, feature_dim=5, seed=11,
                        ground_truth=gt)


@pytest.fixture
def review_bundle():
    """Small generated bundle shared by session, service and CLI tests."""
    from actionloom.evaluation import make_synthetic_bundle

    return make_synthetic_bundle(n_categories=2, actions_per_category=6,
                                 videos_per_category=1, seed=3)
