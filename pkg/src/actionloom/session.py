"""Interactive correction sessions.

A session wraps one loaded bundle and holds all mutable review state: the
current action set, accumulated constraints and boundary corrections, the
running label matrix, and lazily built per-category cluster hierarchies.
Correction batches are atomic: every entry is validated and applied against
a staged copy, and the session is only mutated (and the revision bumped)
when the whole batch succeeds.

Scaling note: nothing quadratic in the bundle happens at creation time.
Pairwise alignment is confined to (a) the category hierarchies, built on
first use, and (b) a correction's neighborhood, which is bounded by the
cached partners plus a fixed number of feature-space neighbors.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import replace

import numpy as np

from .alignment import AlignmentConstraints, align_pair
from .bundle import Action, DatasetBundle, cosine_similarity
from .clustering import (
    _Counter,
    build_hierarchy,
    pairwise_action_distances,
    select_representatives,
)
from .errors import (
    ConflictingConstraintError,
    FrameOutsideActionError,
    UnknownActionError,
    UnknownClusterError,
)
from .layout import LayoutConfig, compute_layout, contour_bands, layout_to_json
from .propagation import (
    PropagationConfig,
    extract_segments,
    propagate_over_actions,
    recommend_boundary,
)

# node ids of a category's hierarchy live in [c * STRIDE, (c+1) * STRIDE)
CLUSTER_ID_STRIDE = 1_000_000

SESSION_PROPAGATION = PropagationConfig(alpha=10.0, beta=1.0, tau=0.2,
                                        max_iters=200, tol=1e-9)


class Session:
    """Single-writer review session over one bundle."""

    def __init__(self, bundle: DatasetBundle, session_id: str | None = None,
                 log_path: str | None = None,
                 propagation_config: PropagationConfig = SESSION_PROPAGATION,
                 layout_config: LayoutConfig = LayoutConfig(),
                 neighbor_count: int = 8, margin: int = 16):
        self.bundle = bundle
        self.session_id = session_id or uuid.uuid4().hex
        self.propagation_config = propagation_config
        self.layout_config = layout_config
        self.neighbor_count = neighbor_count
        self.margin = margin

        self.actions: dict = {a.action_id: a for a in bundle.actions}
        self.initial_spans: dict = {a.action_id: (a.start, a.end)
                                    for a in bundle.actions}
        self.must_link: dict = {}      # (lo, hi) -> {(frame_lo, frame_hi)}
        self.cannot_link: dict = {}
        self.boundary_log: list = [dict(b) for b in bundle.boundaries]
        self.background_marks: set = set()
        self.removed: set = set()
        self.F = bundle.predictions.astype(np.float64)
        self.revision = 0
        self.batch_log: list = []

        self.alignment_cache: dict = {}
        self._hierarchies: dict = {}
        self._layout_cache: dict = {}
        self._centroids = {a.action_id: bundle.features[a.start:a.end + 1]
                           .mean(axis=0).astype(np.float64)
                           for a in bundle.actions}
        self._lock = threading.RLock()

        self._log_file = None
        if log_path is not None:
            self._log_file = open(log_path, "a", encoding="utf-8")

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    # -- identity -----------------------------------------------------------

    def snapshot_hash(self) -> str:
        """Digest of all primary state; derived caches (hierarchies, layouts)
        are functions of this state and excluded."""
        with self._lock:
            state = {
                "actions": [[a.action_id, a.video_id, a.start, a.end,
                             a.anchor, a.category, a.source]
                            for a in self._current_actions()],
                "must": sorted([p, q, fa, fb]
                               for (p, q), fs in self.must_link.items()
                               for fa, fb in fs),
                "cannot": sorted([p, q, fa, fb]
                                 for (p, q), fs in self.cannot_link.items()
                                 for fa, fb in fs),
                "background": sorted(int(g) for g in self.background_marks),
                "boundaries": [[b["action"], b["side"], int(b["frame"])]
                               for b in self.boundary_log],
                "removed": sorted(self.removed),
            }
            payload = json.dumps(state, sort_keys=True).encode() + self.F.tobytes()
            return hashlib.sha256(payload).hexdigest()

    def _current_actions(self) -> list:
        return [self.actions[i] for i in sorted(self.actions)
                if i not in self.removed]

    def _get_action(self, action_id: int, staged: dict = None,
                    removed: set = None) -> Action:
        actions = self.actions if staged is None else staged
        gone = self.removed if removed is None else removed
        a = actions.get(int(action_id))
        if a is None or int(action_id) in gone:
            raise UnknownActionError(f"no action {action_id} in session")
        return a

    # -- neighborhoods --------------------------------------------------------

    def _neighbor_ids(self, action_id: int, actions: dict = None,
                      removed: set = None, n: int = None) -> list:
        """Same-category actions ranked by feature-centroid cosine."""
        a = self._get_action(action_id, actions, removed)
        actions = self.actions if actions is None else actions
        gone = self.removed if removed is None else removed
        n = self.neighbor_count if n is None else n
        scored = []
        for other_id, other in actions.items():
            if other_id == a.action_id or other_id in gone:
                continue
            if other.category != a.category:
                continue
            sim = cosine_similarity(self._centroids[a.action_id],
                                    self._centroids[other_id])
            scored.append((-sim, other_id))
        scored.sort()
        return [oid for _, oid in scored[:n]]

    def _pair_key(self, p: int, q: int) -> tuple:
        return (min(int(p), int(q)), max(int(p), int(q)))

    def _constraints_for(self, pair: tuple, must: dict = None,
                         cannot: dict = None) -> AlignmentConstraints:
        must = self.must_link if must is None else must
        cannot = self.cannot_link if cannot is None else cannot
        return AlignmentConstraints(must_link=set(must.get(pair, ())),
                                    cannot_link=set(cannot.get(pair, ())))

    def _ensure_alignment(self, p: int, q: int):
        pair = self._pair_key(p, q)
        res = self.alignment_cache.get(pair)
        if res is None:
            res = align_pair(self.bundle, self.actions[pair[0]],
                             self.actions[pair[1]], self._constraints_for(pair))
            self.alignment_cache[pair] = res
        return res

    # -- clustering ------------------------------------------------------------

    def hierarchy(self, category: int):
        with self._lock:
            if category in self._hierarchies:
                return self._hierarchies[category]
            members = sorted(
                (a for a in self._current_actions() if a.category == category),
                key=lambda a: a.action_id)
            if not members:
                raise UnknownClusterError(f"category {category} has no actions")
            constraints = {}
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    pair = self._pair_key(members[i].action_id,
                                          members[j].action_id)
                    if pair in self.must_link or pair in self.cannot_link:
                        constraints[pair] = self._constraints_for(pair)
            D, alignments = pairwise_action_distances(self.bundle, members,
                                                      constraints)
            self.alignment_cache.update(alignments)
            lengths = {a.action_id: a.length for a in members}
            hier = build_hierarchy(
                [a.action_id for a in members], lengths, D,
                category=category,
                counter=_Counter(category * CLUSTER_ID_STRIDE))
            self._hierarchies[category] = hier
            return hier

    def root_cluster_id(self, category: int) -> int:
        return category * CLUSTER_ID_STRIDE

    def overview(self) -> dict:
        """Categories ranked uncertain-first so review starts where the
        detector is least sure."""
        with self._lock:
            rows = []
            for cat in self.bundle.categories:
                members = [a for a in self._current_actions()
                           if a.category == cat.category_id]
                uncertainty = None
                if members:
                    frames = np.concatenate([np.arange(a.start, a.end + 1)
                                             for a in members])
                    conf = float(self.bundle.predictions[frames,
                                                         cat.category_id].mean())
                    uncertainty = 1.0 - conf
                rows.append({
                    "id": int(cat.category_id),
                    "name": cat.name,
                    "actions": len(members),
                    "uncertainty": uncertainty,
                    "root_cluster": (self.root_cluster_id(cat.category_id)
                                     if members else None),
                })
            rows.sort(key=lambda r: (r["uncertainty"] is None,
                                     -(r["uncertainty"] or 0.0), r["id"]))
            return {"revision": self.revision, "categories": rows}

    # -- layouts -------------------------------------------------------------

    def _display_units(self, node, depth: int) -> list:
        if not node.children:
            return [("leaf", node)]
        if depth <= 0:
            return [("collapsed", node)]
        out = []
        for ch in node.children:
            out.extend(self._display_units(ch, depth - 1))
        return out

    def _annotated_frames(self, action_ids) -> set:
        ids = set(action_ids)
        marked = {self.actions[i].anchor for i in ids}
        for b in self.boundary_log:
            if b["action"] in ids:
                marked.add(int(b["frame"]))
        return marked

    def cluster_layout(self, cluster_id: int, depth: int = 1) -> dict:
        with self._lock:
            key = ("cluster", int(cluster_id), int(depth))
            if key in self._layout_cache:
                return self._layout_cache[key]
            category = int(cluster_id) // CLUSTER_ID_STRIDE
            if not any(c.category_id == category for c in self.bundle.categories):
                raise UnknownClusterError(f"no cluster {cluster_id}")
            hier = self.hierarchy(category)
            node = hier.find(int(cluster_id))
            if node is None:
                raise UnknownClusterError(f"no cluster {cluster_id}")

            units = self._display_units(node, depth)
            line_units, line_ids = {}, []
            for kind, nd in units:
                if kind == "leaf":
                    for aid in nd.members:
                        line_units[aid] = {"unit": nd.node_id, "thick": False,
                                           "members": 1}
                        line_ids.append(aid)
                else:
                    line_units[nd.medoid] = {"unit": nd.node_id, "thick": True,
                                             "members": len(nd.members)}
                    line_ids.append(nd.medoid)
            line_ids = sorted(set(line_ids))
            layout_actions = [self.actions[i] for i in line_ids]
            pairs = {}
            for i in range(len(line_ids)):
                for j in range(i + 1, len(line_ids)):
                    pair = (line_ids[i], line_ids[j])
                    res = self.alignment_cache.get(pair)
                    if res is not None:
                        pairs[pair] = res
            first = node.medoid if node.medoid in set(line_ids) else None
            layout = compute_layout(self.bundle, layout_actions, pairs,
                                    self.layout_config, first_action=first)

            if node.children:
                groups = {ch.node_id: set(ch.members) & set(line_ids)
                          for ch in node.children}
            else:
                groups = {node.node_id: set(line_ids)}
            medoid_action = self.actions[node.medoid]
            reps = select_representatives(
                self.bundle.features[medoid_action.start:medoid_action.end + 1],
                medoid_action.frames(), cluster_id=node.node_id)
            payload = layout_to_json(
                layout,
                annotated_frames=self._annotated_frames(line_ids),
                line_units=line_units,
                contours=contour_bands(layout, groups),
                representatives=reps.selected,
                histogram=node.length_histogram)
            payload.update({
                "revision": self.revision,
                "cluster": int(node.node_id),
                "category": category,
                "depth": int(depth),
                "medoid": int(node.medoid),
                "children": [int(ch.node_id) for ch in node.children],
                "silhouette": float(node.silhouette),
            })
            self._layout_cache[key] = payload
            return payload

    def neighborhood_layout(self, action_id: int, n: int = 4) -> dict:
        with self._lock:
            key = ("action", int(action_id), int(n))
            if key in self._layout_cache:
                return self._layout_cache[key]
            center = self._get_action(action_id)
            others = self._neighbor_ids(action_id, n=n)
            for oid in others:
                self._ensure_alignment(action_id, oid)
            ids = sorted([center.action_id] + others)
            pairs = {}
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    pair = (ids[i], ids[j])
                    res = self.alignment_cache.get(pair)
                    if res is not None:
                        pairs[pair] = res
            layout = compute_layout(self.bundle, [self.actions[i] for i in ids],
                                    pairs, self.layout_config,
                                    first_action=center.action_id)
            video = self.bundle.video_by_id[center.video_id]
            payload = layout_to_json(
                layout, annotated_frames=self._annotated_frames(ids))
            payload.update({
                "revision": self.revision,
                "action": int(center.action_id),
                "neighbors": [int(o) for o in others],
                "frames": [int(f) for f in center.frames()],
                "clip": video.media,
            })
            self._layout_cache[key] = payload
            return payload

    # -- corrections -----------------------------------------------------------

    def _stage_constraint(self, corr, actions, removed, must, cannot, affected):
        p, q = (int(v) for v in corr["pair"])
        ap = self._get_action(p, actions, removed)
        aq = self._get_action(q, actions, removed)
        fa, fb = (int(v) for v in corr["frames"])
        if p > q:
            ap, aq, fa, fb = aq, ap, fb, fa
        pair = self._pair_key(p, q)
        for action, frame in ((ap, fa), (aq, fb)):
            if not (action.start <= frame <= action.end):
                raise FrameOutsideActionError(
                    f"frame {frame} outside action {action.action_id} "
                    f"[{action.start}, {action.end}]")
        target = must if corr["kind"] == "must_link" else cannot
        other = cannot if corr["kind"] == "must_link" else must
        if (fa, fb) in other.get(pair, ()):
            raise ConflictingConstraintError(
                f"({fa}, {fb}) for pair {pair} is already "
                f"{'cannot' if corr['kind'] == 'must_link' else 'must'}-linked")
        target.setdefault(pair, set()).add((fa, fb))
        affected.update(pair)

    def apply_corrections(self, corrections: list) -> dict:
        """Validate and apply one batch; returns the new revision and a diff.

        Raises without side effects when any entry is invalid or makes the
        constraint set infeasible.
        """
        if not corrections:
            raise ValueError("empty correction batch")
        with self._lock:
            actions = dict(self.actions)
            must = {k: set(v) for k, v in self.must_link.items()}
            cannot = {k: set(v) for k, v in self.cannot_link.items()}
            blog = list(self.boundary_log)
            marks = set(self.background_marks)
            removed = set(self.removed)
            cache = dict(self.alignment_cache)

            affected: set = set()
            stale_categories: set = set()
            relabeled, dropped = [], []

            for corr in corrections:
                kind = corr.get("kind")
                if kind in ("must_link", "cannot_link"):
                    self._stage_constraint(corr, actions, removed, must,
                                           cannot, affected)
                elif kind == "boundary":
                    aid = int(corr["action"])
                    a = self._get_action(aid, actions, removed)
                    side, frame = corr["side"], int(corr["frame"])
                    if side == "left" and frame > a.anchor:
                        raise FrameOutsideActionError(
                            f"left boundary {frame} passes anchor {a.anchor}")
                    if side == "right" and frame < a.anchor:
                        raise FrameOutsideActionError(
                            f"right boundary {frame} passes anchor {a.anchor}")
                    if side not in ("left", "right"):
                        raise FrameOutsideActionError(f"unknown side {side!r}")
                    vlo, vhi = self.bundle.video_range(a.video_id)
                    if not (vlo <= frame <= vhi):
                        raise FrameOutsideActionError(
                            f"boundary {frame} outside video {a.video_id}")
                    blog.append({"action": aid, "side": side, "frame": frame})
                    # widen the staged span so the local problem covers the
                    # whole corrected region, as recommend_boundary does
                    probe = (min(a.start, frame), max(a.end, frame))
                    if probe != (a.start, a.end):
                        actions[aid] = a.with_span(*probe)
                    affected.add(aid)
                elif kind == "relabel":
                    aid = int(corr["action"])
                    a = self._get_action(aid, actions, removed)
                    cat = int(corr["category"])
                    if not (0 <= cat < self.bundle.n_categories):
                        raise ValueError(f"unknown category {cat}")
                    if cat != a.category:
                        stale_categories.update((a.category, cat))
                        actions[aid] = replace(a, category=cat, source="corrected")
                        cache = {k: v for k, v in cache.items() if aid not in k}
                        relabeled.append({"action": aid,
                                          "category": [a.category, cat]})
                    affected.add(aid)
                elif kind == "mark_background":
                    aid = int(corr["action"])
                    a = self._get_action(aid, actions, removed)
                    removed.add(aid)
                    marks.update(range(a.start, a.end + 1))
                    stale_categories.add(a.category)
                    dropped.append(aid)
                    affected.add(aid)
                else:
                    raise ValueError(f"unknown correction kind {kind!r}")

            # neighborhood realignment around every touched action
            scope: set = set(affected) - removed
            realign: set = set()
            for aid in affected:
                if aid in removed:
                    continue
                partners = {other for pair in list(cache) if aid in pair
                            for other in pair if other != aid}
                for book in (must, cannot):
                    for pair in book:
                        if aid in pair:
                            partners.add(pair[0] if pair[1] == aid else pair[1])
                partners.update(self._neighbor_ids(aid, actions, removed))
                partners -= removed | {aid}
                scope.update(partners)
                realign.update(self._pair_key(aid, o) for o in partners)

            align_diffs = []
            for pair in sorted(realign):
                res = align_pair(self.bundle, actions[pair[0]], actions[pair[1]],
                                 self._constraints_for(pair, must, cannot))
                old = cache.get(pair)
                old_z = old.z if old is not None else frozenset()
                added = len(res.z - old_z)
                gone = len(old_z - res.z)
                if added or gone:
                    align_diffs.append({"pair": [pair[0], pair[1]],
                                        "added": added, "removed": gone})
                cache[pair] = res
            cache = {k: v for k, v in cache.items()
                     if k[0] not in removed and k[1] not in removed}

            # local relabeling pass
            scope_ids = sorted(scope)
            scope_actions = [actions[i] for i in scope_ids]
            scope_videos = {a.video_id for a in scope_actions}
            scope_videos.update(self.actions[i].video_id for i in affected
                                if i in removed)
            local_marks = sorted(g for g in marks
                                 if self.bundle.video_of_frame(int(g)) in scope_videos)
            F = self.F.copy()
            anomalies: list = []
            span_changes: list = []
            if scope_actions or local_marks:
                in_scope = set(scope_ids)
                results = [v for k, v in cache.items()
                           if k[0] in in_scope and k[1] in in_scope]
                local_boundaries = [b for b in blog if b["action"] in in_scope]
                lm = propagate_over_actions(
                    self.bundle, scope_actions, results, local_boundaries,
                    background_frames=local_marks,
                    config=self.propagation_config, margin=self.margin,
                    F_source=F)
                F[lm.frames] = lm.F
                decoded, odd = extract_segments(lm, self.bundle, scope_actions)
                anomalies = [int(e.action_id) for e in odd]
                pinned = {}
                for b in blog:
                    pinned[(b["action"], b["side"])] = int(b["frame"])
                for act in decoded:
                    aid = act.action_id
                    start = pinned.get((aid, "left"), act.start)
                    end = pinned.get((aid, "right"), act.end)
                    before = self.actions[aid]
                    if (start, end) != (act.start, act.end):
                        act = act.with_span(start, end)
                    actions[aid] = act
                    if (act.start, act.end) != (before.start, before.end):
                        span_changes.append({
                            "action": aid,
                            "old": [before.start, before.end],
                            "new": [act.start, act.end],
                        })

            # commit
            self.actions = actions
            self.must_link = must
            self.cannot_link = cannot
            self.boundary_log = blog
            self.background_marks = marks
            self.removed = removed
            self.alignment_cache = cache
            self.F = F
            for cat in stale_categories:
                self._hierarchies.pop(cat, None)
            self._layout_cache.clear()
            self.revision += 1
            entry = {"revision": self.revision, "corrections": corrections}
            self.batch_log.append(entry)
            if self._log_file is not None:
                self._log_file.write(json.dumps(entry, sort_keys=True) + "\n")
                self._log_file.flush()
                os.fsync(self._log_file.fileno())
            diff = {
                "spans": span_changes,
                "alignments": align_diffs,
                "relabeled": relabeled,
                "removed": [int(i) for i in dropped],
                "anomalies": anomalies,
            }
            return {"revision": self.revision, "diff": diff}

    def recommend(self, action_id: int, side: str, rough_frame: int) -> int:
        with self._lock:
            a = self._get_action(action_id)
            others = self._neighbor_ids(action_id)
            results = [self._ensure_alignment(action_id, o) for o in others]
            return recommend_boundary(self.bundle, a, side, int(rough_frame),
                                      results, config=self.propagation_config,
                                      margin=self.margin, F_source=self.F)

    # -- persistence -----------------------------------------------------------

    def export(self) -> dict:
        """Current annotation state in the on-disk annotations format, plus
        the correction log.  A fresh session exports exactly what was loaded."""
        with self._lock:
            current = self._current_actions()
            anchors = [{"action": a.action_id, "frame": a.anchor,
                        "category": a.category} for a in current]
            entries = {}
            for b in self.boundary_log:
                entries[(int(b["action"]), b["side"])] = int(b["frame"])
            for a in current:
                s0, e0 = self.initial_spans[a.action_id]
                if a.start != s0:
                    entries[(a.action_id, "left")] = a.start
                if a.end != e0:
                    entries[(a.action_id, "right")] = a.end
            boundaries = [{"action": aid, "side": side, "frame": frame}
                          for (aid, side), frame in sorted(entries.items())]
            return {
                "revision": self.revision,
                "annotations": {
                    "anchors": anchors,
                    "boundaries": boundaries,
                    "background": sorted(int(g) for g in self.background_marks),
                },
                "log": list(self.batch_log),
                "hash": self.snapshot_hash(),
            }


def replay(bundle: DatasetBundle, batches: list, **session_kwargs) -> tuple:
    """Re-apply a correction log to a fresh session; returns the session and
    the snapshot hash after revision 0 and after every batch."""
    session = Session(bundle, **session_kwargs)
    hashes = [session.snapshot_hash()]
    for batch in batches:
        session.apply_corrections(batch["corrections"])
        hashes.append(session.snapshot_hash())
    return session, hashes
