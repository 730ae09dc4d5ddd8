"""Storyline layout for a set of aligned actions.

Pipeline (all deterministic):

1. horizontal placement: actions are placed one at a time (medoid first,
   then by alignment degree to the already-placed set).  Within an action,
   frames map to existing columns by a maximum-weight monotone matching
   where a frame scores (z_ij + lambda * s_ij) against every frozen frame
   sharing the column; unmatched frames get fresh columns spliced in next
   to their matched neighbors.
2. ordering: per-column vertical permutation minimizing
   (aligned-but-nonadjacent pairs) + mu * (crossings with the previous
   column), frozen column by column.  Exact subset-state DP up to
   exact_order_limit lines per column, barycenter sweep beyond.
3. straightening: vertical coordinates on a slot grid (0.25 units)
   minimizing wiggles + mu * sum [( |dY| - target )^2] over vertically
   adjacent pairs, target = max(1 - z_ij, g_min).  Exact chain DP when
   every line covers a contiguous column range and the instance is small;
   per-line coordinate-descent sweep otherwise.
4. compaction: removes horizontal slack strips so each adjacent gap drops
   toward its target; never increases the wiggle count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .bundle import DatasetBundle, cosine_similarity_matrix


@dataclass(frozen=True)
class LayoutConfig:
    lam: float = 0.1              # similarity weight in horizontal placement
    mu_order: float = 3.0         # crossing weight in ordering
    mu_straight: float = 1.0      # distance-target weight in straightening
    g_min: float = 0.1            # minimum rendered vertical gap
    exact_order_limit: int = 12   # max lines/column for exact ordering DP
    slot: float = 0.25            # Y discretization step
    exact_straight_lines: int = 3
    exact_straight_columns: int = 6
    max_sweeps: int = 50


# a column is a list of (action_id, global_frame) entries; list order = top
# to bottom once ordering has run


def _pair_z(z_set, f1: int, f2: int) -> int:
    return 1 if (f1, f2) in z_set or (f2, f1) in z_set else 0


def make_z_set(alignments) -> set:
    """Symmetric membership set of aligned global-frame pairs."""
    z = set()
    for res in alignments.values() if isinstance(alignments, dict) else alignments:
        for i, j in res.pairs:
            z.add((int(i), int(j)))
            z.add((int(j), int(i)))
    return z


# -- horizontal placement -----------------------------------------------------

def _match_action_to_columns(frames, columns, score_fn):
    """Maximum-weight strictly-monotone matching of an action's frames onto
    the existing column sequence (unmatched frames cost nothing and later
    get fresh columns).  Returns {frame_pos: column_pos}."""
    L, C = len(frames), len(columns)
    f = np.zeros((L + 1, C + 1), dtype=np.float64)
    score = np.zeros((L, C), dtype=np.float64)
    for i in range(L):
        for c in range(C):
            score[i, c] = score_fn(frames[i], c)
    for i in range(1, L + 1):
        for c in range(1, C + 1):
            f[i, c] = max(f[i][c - 1], f[i - 1][c], f[i - 1][c - 1] + score[i - 1, c - 1])
    match = {}
    i, c = L, C
    while i > 0 and c > 0:
        if f[i][c] == f[i][c - 1]:
            c -= 1
        elif f[i][c] == f[i - 1][c]:
            i -= 1
        else:
            match[i - 1] = c - 1
            i, c = i - 1, c - 1
    return match


def horizontal_placement(bundle: DatasetBundle, actions: list, alignments: dict,
                         lam: float = 0.1, first_action: int | None = None) -> list:
    """Greedy action-at-a-time placement; returns the column list."""
    if not actions:
        return []
    by_id = {a.action_id: a for a in actions}
    z_set = make_z_set(alignments)

    degree = {a.action_id: 0 for a in actions}

    def alignment_degree(aid, placed_ids):
        total = 0
        for pid in placed_ids:
            key = (min(aid, pid), max(aid, pid))
            res = alignments.get(key)
            if res is not None:
                total += len(res.pairs)
        return total

    if first_action is None or first_action not in by_id:
        first_action = min(by_id)
    order = [first_action]
    remaining = sorted(set(by_id) - {first_action})
    while remaining:
        best = max(remaining,
                   key=lambda aid: (alignment_degree(aid, order), -aid))
        order.append(best)
        remaining.remove(best)

    columns: list = []
    sim_cache: dict = {}

    def similarity(frame_a, action_a, frame_b, action_b):
        key = (min(action_a, action_b), max(action_a, action_b))
        if key not in sim_cache:
            pa, pb = by_id[key[0]], by_id[key[1]]
            sim_cache[key] = cosine_similarity_matrix(
                bundle.features[pa.start:pa.end + 1],
                bundle.features[pb.start:pb.end + 1])
        S = sim_cache[key]
        fa, fb = (frame_a, frame_b) if action_a == key[0] else (frame_b, frame_a)
        return float(S[fa - by_id[key[0]].start, fb - by_id[key[1]].start])

    for aid in order:
        act = by_id[aid]
        frames = list(act.frames())
        if not columns:
            for fr in frames:
                columns.append([(aid, fr)])
            continue

        def score_fn(fr, col_pos):
            total = 0.0
            for other_aid, other_fr in columns[col_pos]:
                total += _pair_z(z_set, fr, other_fr)
                total += lam * similarity(fr, aid, other_fr, other_aid)
            return total

        match = _match_action_to_columns(frames, columns, score_fn)
        # splice fresh columns for unmatched frames next to their matched
        # neighbors; a fully fresh line is appended on the right
        new_columns = []
        matched_positions = sorted(match.items())
        if not matched_positions:
            for col in columns:
                new_columns.append(col)
            for fr in frames:
                new_columns.append([(aid, fr)])
            columns = new_columns
            continue
        next_col = 0
        for fi, fr in enumerate(frames):
            if fi in match:
                while next_col <= match[fi]:
                    new_columns.append(columns[next_col])
                    next_col += 1
                new_columns[-1].append((aid, fr))
            else:
                later = [cp for fp, cp in matched_positions if fp > fi]
                if later:  # fresh column right before the next matched one
                    while next_col < min(later):
                        new_columns.append(columns[next_col])
                        next_col += 1
                    new_columns.append([(aid, fr)])
                else:      # trailing fresh frames go after everything
                    while next_col < len(columns):
                        new_columns.append(columns[next_col])
                        next_col += 1
                    new_columns.append([(aid, fr)])
        while next_col < len(columns):
            new_columns.append(columns[next_col])
            next_col += 1
        columns = new_columns
    return columns


# -- ordering -----------------------------------------------------------------

def ordering_objective(columns: list, z_set: set, mu: float) -> float:
    """Aligned-pair non-adjacency penalties plus mu * crossings, evaluated on
    ordered columns."""
    penalty = 0
    for col in columns:
        for (r1, (a1, f1)), (r2, (a2, f2)) in combinations(enumerate(col), 2):
            if _pair_z(z_set, f1, f2) and abs(r1 - r2) > 1:
                penalty += 1
    return penalty + mu * count_crossings(columns)


def count_crossings(columns: list) -> int:
    total = 0
    for prev, cur in zip(columns, columns[1:]):
        prev_rank = {aid: r for r, (aid, _) in enumerate(prev)}
        shared = [(r, prev_rank[aid]) for r, (aid, _) in enumerate(cur)
                  if aid in prev_rank]
        for (r1, p1), (r2, p2) in combinations(shared, 2):
            if (r1 - r2) * (p1 - p2) < 0:
                total += 1
    return total


def _order_column_exact(entries, demands, prev_rank, mu):
    """Optimal permutation of one column given the frozen previous column:
    subset-state DP with exact cost-to-go, then a greedy front-to-back walk
    that picks the lexicographically smallest (by action id) optimal order."""
    m = len(entries)
    aids = [aid for aid, _ in entries]
    demand_mask = [0] * m
    for u, v in demands:
        demand_mask[u] |= 1 << v
        demand_mask[v] |= 1 << u
    prevgt_mask = [0] * m
    for w in range(m):
        if aids[w] in prev_rank:
            for u in range(m):
                if u != w and aids[u] in prev_rank and prev_rank[aids[u]] > prev_rank[aids[w]]:
                    prevgt_mask[w] |= 1 << u

    def pay(w, S, last):
        adjacency = (demand_mask[w] & S).bit_count()
        if last is not None and demand_mask[w] >> last & 1:
            adjacency -= 1
        return adjacency + mu * (prevgt_mask[w] & S).bit_count()

    full = (1 << m) - 1
    # cost-to-go over (placed subset, last placed); iterate subsets densest first
    g = [[0.0] * (m + 1) for _ in range(1 << m)]
    for S in range(full - 1, -1, -1):
        for last in list(_bits(S)) + [None]:
            li = m if last is None else last
            best = np.inf
            for w in _bits(full & ~S):
                cand = pay(w, S, last) + g[S | (1 << w)][w]
                if cand < best:
                    best = cand
            g[S][li] = best if best != np.inf else 0.0

    # greedy reconstruction: smallest action id among optimal next lines
    S, last, seq = 0, None, []
    while S != full:
        li = m if last is None else last
        target = g[S][li]
        pick = None
        for w in sorted(_bits(full & ~S), key=lambda w: aids[w]):
            if pay(w, S, last) + g[S | (1 << w)][w] == target:
                pick = w
                break
        seq.append(pick)
        S |= 1 << pick
        last = pick
    return [entries[w] for w in seq]


def _bits(mask):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _order_column_barycenter(entries, demands, prev_rank):
    """Heuristic: lines keep their previous rank; entering lines take the
    mean previous rank of their aligned partners, else sink to the bottom."""
    m = len(entries)
    partners = {w: [] for w in range(m)}
    for u, v in demands:
        partners[u].append(v)
        partners[v].append(u)

    def key(w):
        aid = entries[w][0]
        if aid in prev_rank:
            return (0, prev_rank[aid], aid)
        anchored = [prev_rank[entries[p][0]] for p in partners[w]
                    if entries[p][0] in prev_rank]
        if anchored:
            return (0, sum(anchored) / len(anchored), aid)
        return (1, 0.0, aid)

    return [entries[w] for w in sorted(range(m), key=key)]


def ordering(columns: list, z_set: set, mu: float = 3.0,
             exact_limit: int = 12) -> list:
    """Sequential per-column ordering, previous column frozen."""
    ordered: list = []
    prev_rank: dict = {}
    cache: dict = {}
    for col in columns:
        entries = sorted(col)  # canonical input order: by action id
        demands = []
        for (u, (a1, f1)), (v, (a2, f2)) in combinations(enumerate(entries), 2):
            if _pair_z(z_set, f1, f2):
                demands.append((u, v))
        sig = (tuple(entries), tuple(demands),
               tuple(sorted((aid, r) for aid, r in prev_rank.items())))
        if sig in cache:
            new_col = cache[sig]
        elif len(entries) <= exact_limit:
            new_col = _order_column_exact(entries, demands, prev_rank, mu)
            cache[sig] = new_col
        else:
            new_col = _order_column_barycenter(entries, demands, prev_rank)
            cache[sig] = new_col
        ordered.append(list(new_col))
        prev_rank = {aid: r for r, (aid, _) in enumerate(new_col)}
    return ordered


# -- straightening ---------------------------------------------------------------

def collect_lines(columns: list) -> dict:
    """action id -> [(column index, frame)] in column order."""
    lines: dict = {}
    for c, col in enumerate(columns):
        for aid, fr in col:
            lines.setdefault(aid, []).append((c, fr))
    return lines


def straightening_objective(columns: list, y: dict, z_set: set,
                            mu: float, g_min: float) -> float:
    lines = collect_lines(columns)
    wiggles = 0
    for pts in lines.values():
        for (_, f1), (_, f2) in zip(pts, pts[1:]):
            if y[f1] != y[f2]:
                wiggles += 1
    dist = 0.0
    for col in columns:
        for (a1, f1), (a2, f2) in zip(col, col[1:]):
            target = max(1.0 - _pair_z(z_set, f1, f2), g_min)
            dist += (abs(y[f1] - y[f2]) - target) ** 2
    return wiggles + mu * dist


def _column_states(m: int, n_slots: int):
    return list(combinations(range(n_slots), m))


def straighten_exact(columns: list, z_set: set, config: LayoutConfig,
                     n_slots: int) -> dict:
    """Chain DP over per-column slot tuples; requires every line to occupy a
    contiguous range of columns (transition costs are then Markov)."""
    lines = collect_lines(columns)
    for pts in lines.values():
        cols = [c for c, _ in pts]
        assert cols == list(range(cols[0], cols[-1] + 1)), \
            "exact straightening needs column-contiguous lines"
    slot = config.slot
    mu = config.mu_straight

    def column_cost(col, slots):
        total = 0.0
        for k in range(len(col) - 1):
            target = max(1.0 - _pair_z(z_set, col[k][1], col[k + 1][1]), config.g_min)
            total += mu * ((slots[k + 1] - slots[k]) * slot - target) ** 2
        return total

    W = len(columns)
    states = [_column_states(len(col), n_slots) for col in columns]
    dp = [dict() for _ in range(W)]
    for s in states[0]:
        dp[0][s] = (column_cost(columns[0], s), None)
    for c in range(1, W):
        prev_col, cur_col = columns[c - 1], columns[c]
        prev_pos = {aid: r for r, (aid, _) in enumerate(prev_col)}
        links = [(r, prev_pos[aid]) for r, (aid, _) in enumerate(cur_col)
                 if aid in prev_pos]
        for s in states[c]:
            base = column_cost(cur_col, s)
            best = None
            for ps, (pcost, _) in dp[c - 1].items():
                wig = sum(1 for r, pr in links if s[r] != ps[pr])
                cand = pcost + base + wig
                if best is None or cand < best[0]:
                    best = (cand, ps)
            dp[c][s] = best
    end = min(dp[W - 1], key=lambda s: (dp[W - 1][s][0], s))
    chosen = [end]
    for c in range(W - 1, 0, -1):
        chosen.append(dp[c][chosen[-1]][1])
    chosen.reverse()
    y = {}
    for col, s in zip(columns, chosen):
        for (aid, fr), sl in zip(col, s):
            y[fr] = sl * slot
    return y


def straighten_sweep(columns: list, z_set: set, config: LayoutConfig,
                     n_slots: int) -> dict:
    """Coordinate descent: one line at a time is re-solved by a 1D DP over
    its slot trajectory, neighbors held fixed; repeats until stable."""
    slot, mu = config.slot, config.mu_straight
    lines = collect_lines(columns)
    rank = [{aid: r for r, (aid, _) in enumerate(col)} for col in columns]
    slots = {}
    for c, col in enumerate(columns):
        for r, (aid, fr) in enumerate(col):
            slots[fr] = r * 4  # initial Y = order position * 1.0

    def neighbor_terms(c, aid, fr, s):
        col, rk = columns[c], rank[c][aid]
        total = 0.0
        for nb in (rk - 1, rk + 1):
            if 0 <= nb < len(col):
                nf = col[nb][1]
                target = max(1.0 - _pair_z(z_set, fr, nf), config.g_min)
                total += mu * ((abs(s - slots[nf])) * slot - target) ** 2
        return total

    def allowed(c, aid):
        col, rk = columns[c], rank[c][aid]
        lo = slots[col[rk - 1][1]] + 1 if rk > 0 else 0
        hi = slots[col[rk + 1][1]] - 1 if rk + 1 < len(col) else n_slots - 1
        return range(lo, hi + 1)

    def solve_line(aid, pts):
        """1D DP over the line's slot trajectory; smaller slots win ties."""
        choices = [list(allowed(c, aid)) for c, _ in pts]
        best = {s: (neighbor_terms(pts[0][0], aid, pts[0][1], s), [s])
                for s in choices[0]}
        for k in range(1, len(pts)):
            c, fr = pts[k]
            nxt = {}
            for s in choices[k]:
                local = neighbor_terms(c, aid, fr, s)
                cand_best = None
                for ps in choices[k - 1]:
                    pcost, ptrail = best[ps]
                    cand = pcost + local + (1.0 if ps != s else 0.0)
                    if cand_best is None or cand < cand_best[0]:
                        cand_best = (cand, ptrail + [s])
                nxt[s] = cand_best
            best = nxt
        end = min(best, key=lambda s: (best[s][0], s))
        return best[end]

    for _ in range(config.max_sweeps):
        improved = False
        for aid in sorted(lines):
            pts = lines[aid]
            cur_cost = sum(neighbor_terms(c, aid, fr, slots[fr]) for c, fr in pts)
            cur_cost += sum(1.0 for (_, f1), (_, f2) in zip(pts, pts[1:])
                            if slots[f1] != slots[f2])
            new_cost, traj = solve_line(aid, pts)
            if new_cost < cur_cost - 1e-12:
                for (c, fr), s in zip(pts, traj):
                    slots[fr] = s
                improved = True
        if not improved:
            break
    return {fr: s * slot for fr, s in slots.items()}


def straighten(columns: list, z_set: set, config: LayoutConfig = LayoutConfig(),
               mode: str = "auto") -> dict:
    if not columns:
        return {}
    max_lines = max(len(col) for col in columns)
    n_slots = max_lines * 4 + 1
    lines = collect_lines(columns)
    contiguous = all(
        [c for c, _ in pts] == list(range(pts[0][0], pts[-1][0] + 1))
        for pts in lines.values())
    if mode == "exact" or (
            mode == "auto" and contiguous
            and max_lines <= config.exact_straight_lines
            and len(columns) <= config.exact_straight_columns):
        return straighten_exact(columns, z_set, config, n_slots)
    return straighten_sweep(columns, z_set, config, n_slots)


# -- compaction --------------------------------------------------------------------

def compaction(columns: list, y: dict, z_set: set,
               g_min: float = 0.1) -> dict:
    """Shift everything at or above each slack strip downward until every
    adjacent gap is at its target; never increases the wiggle count because
    points move together unless a strip boundary separates them (which can
    only merge previously unequal Y values)."""
    y = dict(y)
    if not y:
        return y

    def targets():
        out = []
        for col in columns:
            ordered = sorted(col, key=lambda e: y[e[1]])
            for (a1, f1), (a2, f2) in zip(ordered, ordered[1:]):
                out.append((f1, f2, max(1.0 - _pair_z(z_set, f1, f2), g_min)))
        return out

    for _ in range(len(y) * max(len(columns), 2) + 10):
        values = sorted(set(y.values()))
        shifted = False
        for y_star in values[1:]:
            slack = None
            for f1, f2, target in targets():
                lo, hi = min(y[f1], y[f2]), max(y[f1], y[f2])
                if lo < y_star <= hi:
                    s = (hi - lo) - target
                    slack = s if slack is None else min(slack, s)
            if slack is not None and slack > 1e-12:
                for fr in y:
                    if y[fr] >= y_star:
                        y[fr] -= slack
                shifted = True
                break
        if not shifted:
            break
    base = min(y.values())
    return {fr: v - base for fr, v in y.items()}


# -- metrics and assembly --------------------------------------------------------------

def count_wiggles(columns: list, y: dict) -> int:
    total = 0
    for pts in collect_lines(columns).values():
        for (_, f1), (_, f2) in zip(pts, pts[1:]):
            if y[f1] != y[f2]:
                total += 1
    return total


def layout_metrics(columns: list, y: dict) -> dict:
    height = 0.0
    if y:
        height = float(max(y.values()) - min(y.values()))
    return {
        "crossings": count_crossings(columns),
        "wiggles": count_wiggles(columns, y),
        "width": len(columns),
        "height": height,
    }


@dataclass
class StorylineLayout:
    columns: list
    y: dict
    z_set: set = field(default_factory=set, repr=False)
    metrics: dict = field(default_factory=dict)

    @property
    def x(self) -> dict:
        return {fr: c for c, col in enumerate(self.columns) for _, fr in col}

    @property
    def order(self) -> list:
        return [[aid for aid, _ in col] for col in self.columns]


def compute_layout(bundle: DatasetBundle, actions: list, alignments: dict,
                   config: LayoutConfig = LayoutConfig(),
                   first_action: int | None = None,
                   straighten_mode: str = "auto") -> StorylineLayout:
    columns = horizontal_placement(bundle, actions, alignments, config.lam,
                                   first_action=first_action)
    z_set = make_z_set(alignments)
    columns = ordering(columns, z_set, config.mu_order, config.exact_order_limit)
    y = straighten(columns, z_set, config, mode=straighten_mode)
    y = compaction(columns, y, z_set, config.g_min)
    layout = StorylineLayout(columns=columns, y=y, z_set=z_set)
    layout.metrics = layout_metrics(columns, y)
    layout.metrics["ordering_objective"] = ordering_objective(
        columns, z_set, config.mu_order)
    layout.metrics["straightening_objective"] = straightening_objective(
        columns, y, z_set, config.mu_straight, config.g_min)
    return layout


def layout_to_json(layout: StorylineLayout, *, annotated_frames=frozenset(),
                   line_units: dict | None = None, contours: list | None = None,
                   representatives: list | None = None,
                   histogram: dict | None = None) -> dict:
    """UI payload: {columns, lines, contours, representatives, histogram,
    metrics}.  line_units maps action id -> {unit, thick, members} for lines
    standing in for collapsed sub-clusters."""
    line_units = line_units or {}
    lines = []
    for aid, pts in sorted(collect_lines(layout.columns).items()):
        meta = line_units.get(aid, {})
        lines.append({
            "action": int(aid),
            "thick": bool(meta.get("thick", False)),
            "unit": meta.get("unit"),
            "points": [
                {"col": int(c), "y": float(layout.y[fr]), "frame": int(fr),
                 "annotated": bool(fr in annotated_frames)}
                for c, fr in pts
            ],
        })
    return {
        "columns": len(layout.columns),
        "lines": lines,
        "contours": contours or [],
        "representatives": [int(f) for f in (representatives or [])],
        "histogram": histogram or {},
        "metrics": layout.metrics,
    }


def contour_bands(layout: StorylineLayout, groups: dict, pad: float = 0.35) -> list:
    """One cosmetic band per group: per column covered by the group's lines,
    the min/max Y padded outward; groups maps group id -> set of action ids."""
    lines = collect_lines(layout.columns)
    bands = []
    for gid in sorted(groups):
        cols: dict = {}
        for aid in groups[gid]:
            for c, fr in lines.get(aid, []):
                lo, hi = cols.get(c, (np.inf, -np.inf))
                cols[c] = (min(lo, layout.y[fr]), max(hi, layout.y[fr]))
        if not cols:
            continue
        top = [[c, float(cols[c][0] - pad)] for c in sorted(cols)]
        bottom = [[c, float(cols[c][1] + pad)] for c in sorted(cols, reverse=True)]
        bands.append({"cluster": gid, "top": top, "bottom": bottom})
    return bands


try:
    from sklearn.base import BaseEstimator
except ImportError:  # pragma: no cover
    BaseEstimator = object


class StorylineLayouter(BaseEstimator):
    def __init__(self, lam=0.1, mu_order=3.0, mu_straight=1.0, g_min=0.1,
                 exact_order_limit=12, slot=0.25):
        self.lam = lam
        self.mu_order = mu_order
        self.mu_straight = mu_straight
        self.g_min = g_min
        self.exact_order_limit = exact_order_limit
        self.slot = slot

    def _config(self) -> LayoutConfig:
        return LayoutConfig(lam=self.lam, mu_order=self.mu_order,
                            mu_straight=self.mu_straight, g_min=self.g_min,
                            exact_order_limit=self.exact_order_limit,
                            slot=self.slot)

    def layout(self, bundle, actions, alignments, first_action=None) -> StorylineLayout:
        return compute_layout(bundle, actions, alignments, self._config(),
                              first_action=first_action)
