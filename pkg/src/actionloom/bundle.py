"""On-disk dataset bundles and the derived per-frame quantities.

A bundle directory contains:

* ``manifest.json``   -- ``{T, D, C, videos, actions, categories}``
* ``features.bin``    -- T x D float32, little-endian, row-major
* ``predictions.bin`` -- T x (C+1) float32, little-endian, row-major
                         (last column is the background score)
* ``annotations.json``-- ``{anchors: [...], boundaries: [...]}``
* ``ground_truth.json`` (optional, evaluation only)

Frames are addressed by a single global index; the videos partition the
``[0, T)`` range in manifest order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyCategoryError,
    InvalidSpanError,
    MissingFileError,
    NonFiniteValueError,
    ShapeMismatchError,
)

BACKGROUND = -1  # category id used for "no action" in frame-label vectors


@dataclass(frozen=True)
class VideoMeta:
    video_id: int
    name: str
    frame_count: int
    offset: int  # global index of the video's first frame
    media: str | None = None  # optional clip URL/path served to the UI


@dataclass(frozen=True)
class Action:
    """A detected or corrected action instance (frame indices are global, inclusive)."""

    action_id: int
    video_id: int
    start: int
    end: int
    anchor: int
    category: int
    source: str = "detected"  # "detected" | "corrected"

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def frames(self) -> range:
        return range(self.start, self.end + 1)

    def with_span(self, start: int, end: int, source: str = "corrected") -> "Action":
        return replace(self, start=start, end=end, source=source)


@dataclass
class CategoryMeta:
    category_id: int
    name: str
    uncertainty: float = 0.0


@dataclass(frozen=True)
class GroundTruthSegment:
    video_id: int
    start: int
    end: int
    category: int


@dataclass(frozen=True)
class FrameRecord:
    """View of a single frame; materialized on demand from the bundle arrays."""

    global_index: int
    video_id: int
    time_index: int
    feature: np.ndarray
    prediction: np.ndarray


@dataclass
class DatasetBundle:
    videos: list[VideoMeta]
    features: np.ndarray     # (T, D) float32
    predictions: np.ndarray  # (T, C+1) float32
    actions: list[Action]
    categories: list[CategoryMeta]
    anchors: list[dict] = field(default_factory=list)      # [{action, frame, category}]
    boundaries: list[dict] = field(default_factory=list)   # [{action, side, frame}]
    ground_truth: list[GroundTruthSegment] | None = None

    def __post_init__(self):
        self.video_by_id = {v.video_id: v for v in self.videos}
        self.action_by_id = {a.action_id: a for a in self.actions}
        # map global frame index -> video id
        self._video_of_frame = np.empty(self.n_frames, dtype=np.int64)
        for v in self.videos:
            self._video_of_frame[v.offset:v.offset + v.frame_count] = v.video_id

    # -- shape helpers -------------------------------------------------

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def n_categories(self) -> int:
        return self.predictions.shape[1] - 1

    @property
    def background_column(self) -> int:
        return self.n_categories

    def video_of_frame(self, frame: int) -> int:
        return int(self._video_of_frame[frame])

    def video_range(self, video_id: int) -> tuple[int, int]:
        """Inclusive global frame range of a video."""
        v = self.video_by_id[video_id]
        return v.offset, v.offset + v.frame_count - 1

    def frame(self, global_index: int) -> FrameRecord:
        vid = self.video_of_frame(global_index)
        return FrameRecord(
            global_index=global_index,
            video_id=vid,
            time_index=global_index - self.video_by_id[vid].offset,
            feature=self.features[global_index],
            prediction=self.predictions[global_index],
        )

    def actions_of_category(self, category: int) -> list[Action]:
        return [a for a in self.actions if a.category == category]

    def replace_actions(self, actions: list[Action]) -> "DatasetBundle":
        """New bundle sharing the arrays but with an updated action list."""
        return DatasetBundle(
            videos=self.videos,
            features=self.features,
            predictions=self.predictions,
            actions=list(actions),
            categories=[replace(c) for c in self.categories],
            anchors=list(self.anchors),
            boundaries=list(self.boundaries),
            ground_truth=self.ground_truth,
        )

    def validate(self) -> None:
        if not np.all(np.isfinite(self.features)):
            raise NonFiniteValueError("features contain NaN or Inf")
        if not np.all(np.isfinite(self.predictions)):
            raise NonFiniteValueError("predictions contain NaN or Inf")
        total = sum(v.frame_count for v in self.videos)
        if total != self.n_frames:
            raise ShapeMismatchError(
                f"videos declare {total} frames, feature matrix holds {self.n_frames}")
        for a in self.actions:
            if not (a.start <= a.anchor <= a.end):
                raise InvalidSpanError(f"action {a.action_id}: start<=anchor<=end violated")
            lo, hi = self.video_range(a.video_id)
            if a.start < lo or a.end > hi:
                raise InvalidSpanError(
                    f"action {a.action_id} span [{a.start},{a.end}] outside video {a.video_id}")
        if self.ground_truth:
            for g in self.ground_truth:
                if g.start > g.end:
                    raise InvalidSpanError("ground truth segment with start > end")


# -- similarity ----------------------------------------------------------

def cosine_similarity(a, b) -> float:
    """Cosine of two vectors; 0.0 if either has zero norm (degenerate frames
    are treated as unrelated rather than erroring)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"vector shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_similarity_matrix(A, B) -> np.ndarray:
    """Pairwise cosine similarities between rows of A and rows of B."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(f"feature dims differ: {A.shape[1]} vs {B.shape[1]}")
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        S = (A @ B.T) / denom
    S[denom == 0.0] = 0.0
    return S


def frame_dissimilarity(bundle: DatasetBundle, i: int, j: int) -> float:
    """1 - cosine similarity of two frames' features; lies in [0, 2]."""
    return 1.0 - cosine_similarity(bundle.features[i], bundle.features[j])


def frame_label_vector(n_frames: int, spans) -> np.ndarray:
    """Per-frame category labels from (start, end, category) spans; frames
    covered by no span get BACKGROUND.  Later spans overwrite earlier ones."""
    labels = np.full(n_frames, BACKGROUND, dtype=np.int64)
    for start, end, category in spans:
        labels[start:end + 1] = category
    return labels


# -- category uncertainty -------------------------------------------------

def compute_category_uncertainty(bundle: DatasetBundle, category: int) -> float:
    """1 - mean prediction confidence over the category's detected action frames."""
    frames = []
    for a in bundle.actions:
        if a.category == category:
            frames.extend(range(a.start, a.end + 1))
    if not frames:
        raise EmptyCategoryError(f"category {category} has no detected action frames")
    scores = bundle.predictions[np.asarray(frames, dtype=np.int64), category]
    return float(1.0 - scores.mean())


def categories_by_uncertainty(bundle: DatasetBundle) -> list[CategoryMeta]:
    """Categories with uncertainties filled in, sorted descending (ties by id)."""
    out = []
    for c in bundle.categories:
        try:
            u = compute_category_uncertainty(bundle, c.category_id)
        except EmptyCategoryError:
            u = 0.0
        out.append(CategoryMeta(c.category_id, c.name, u))
    out.sort(key=lambda c: (-c.uncertainty, c.category_id))
    return out


# -- I/O -------------------------------------------------------------------

_REQUIRED = ("manifest.json", "features.bin", "predictions.bin", "annotations.json")


def _read_matrix(path: str, rows: int, cols: int, what: str) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != rows * cols:
        raise ShapeMismatchError(
            f"{what}: expected {rows}x{cols}={rows * cols} float32 values, found {data.size}")
    return data.reshape(rows, cols)


def load_bundle(path: str) -> DatasetBundle:
    """Load and fully validate a bundle directory."""
    for name in _REQUIRED:
        if not os.path.exists(os.path.join(path, name)):
            raise MissingFileError(f"bundle is missing {name}")

    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    T, D, C = int(manifest["T"]), int(manifest["D"]), int(manifest["C"])

    videos = []
    offset = 0
    for v in manifest["videos"]:
        videos.append(VideoMeta(int(v["id"]), v.get("name", str(v["id"])),
                                int(v["frame_count"]), offset, v.get("media")))
        offset += int(v["frame_count"])
    if offset != T:
        raise ShapeMismatchError(f"manifest declares T={T} but videos sum to {offset} frames")

    features = _read_matrix(os.path.join(path, "features.bin"), T, D, "features.bin")
    predictions = _read_matrix(os.path.join(path, "predictions.bin"), T, C + 1, "predictions.bin")

    actions = [
        Action(int(a["id"]), int(a["video"]), int(a["start"]), int(a["end"]),
               int(a["anchor"]), int(a["category"]))
        for a in manifest["actions"]
    ]
    categories = [CategoryMeta(int(c["id"]), c.get("name", str(c["id"]))) for c in manifest["categories"]]

    with open(os.path.join(path, "annotations.json")) as f:
        ann = json.load(f)

    gt = None
    gt_path = os.path.join(path, "ground_truth.json")
    if os.path.exists(gt_path):
        with open(gt_path) as f:
            gt = [GroundTruthSegment(int(g["video"]), int(g["start"]), int(g["end"]),
                                     int(g["category"])) for g in json.load(f)]

    bundle = DatasetBundle(
        videos=videos,
        features=features,
        predictions=predictions,
        actions=actions,
        categories=categories,
        anchors=ann.get("anchors", []),
        boundaries=ann.get("boundaries", []),
        ground_truth=gt,
    )
    bundle.validate()
    return bundle


def save_bundle(bundle: DatasetBundle, path: str) -> None:
    """Write a bundle directory; inverse of :func:`load_bundle` (bit-exact payloads)."""
    os.makedirs(path, exist_ok=True)
    manifest = {
        "T": bundle.n_frames,
        "D": bundle.features.shape[1],
        "C": bundle.n_categories,
        "videos": [
            {"id": v.video_id, "name": v.name, "frame_count": v.frame_count,
             **({"media": v.media} if v.media else {})}
            for v in bundle.videos
        ],
        "actions": [
            {"id": a.action_id, "video": a.video_id, "start": a.start, "end": a.end,
             "anchor": a.anchor, "category": a.category}
            for a in bundle.actions
        ],
        "categories": [{"id": c.category_id, "name": c.name} for c in bundle.categories],
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    bundle.features.astype("<f4").tofile(os.path.join(path, "features.bin"))
    bundle.predictions.astype("<f4").tofile(os.path.join(path, "predictions.bin"))
    with open(os.path.join(path, "annotations.json"), "w") as f:
        json.dump({"anchors": bundle.anchors, "boundaries": bundle.boundaries},
                  f, indent=1, sort_keys=True)
    if bundle.ground_truth is not None:
        with open(os.path.join(path, "ground_truth.json"), "w") as f:
            json.dump([{"video": g.video_id, "start": g.start, "end": g.end,
                        "category": g.category} for g in bundle.ground_truth],
                      f, indent=1, sort_keys=True)
