"""Toy rate-distortion partition search: exhaustive baseline and the
prediction-guided pruned search.

Leaf cost is D + lambda*R with D the SSE of the better of the two
motion-compensated candidates (L0/L1 full-search vectors at CU granularity)
and R a header + MV-magnitude + residual-energy bit proxy.  Both searches
minimize the same recursive objective; they differ only in the per-CU
candidate split sets.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import GeometryError
from .maps import MT_LABEL_OF_SPLIT, NUM_MT_LEVELS
from .motion import Frame, RefPair, block_me, clamped_window, scan_motion
from .partition import (
    MT_SPLITS,
    Constraints,
    CuGeom,
    PartitionTree,
    SplitType,
    apply_split,
    legal_splits,
    root_geom,
)
from .predictor import Prediction, mean_mt_probs, mean_qt_depth

DEFAULT_SPLIT_BITS = {
    SplitType.QT: 2.0,
    SplitType.HBT: 3.0,
    SplitType.VBT: 3.0,
    SplitType.HTT: 4.0,
    SplitType.VTT: 4.0,
}


@dataclass(frozen=True)
class CostModel:
    """QP-driven lambda plus the bit weights of the rate proxy."""

    qp: int
    header_bits: float = 8.0
    split_bits: Mapping = field(default_factory=lambda: dict(DEFAULT_SPLIT_BITS))
    mv_bit_scale: float = 1.0
    res_bit_weight: float = 16.0

    def __post_init__(self):
        if not (0 <= self.qp <= 51):
            raise GeometryError(f"qp {self.qp} outside [0, 51]")

    @property
    def lam(self) -> float:
        """HEVC-style lambda: 0.57 * 2^((qp-12)/3), monotone in qp."""
        return 0.57 * 2.0 ** ((self.qp - 12) / 3.0)

    def split_bit_cost(self, s: SplitType) -> float:
        return self.split_bits[s]


@dataclass
class SearchStats:
    nodes_visited: int = 0
    leaf_costs_evaluated: int = 0
    splits_pruned: int = 0
    wall_time: float = 0.0


@dataclass
class EncodeResult:
    tree: PartitionTree
    cost: float
    stats: SearchStats


@dataclass(frozen=True)
class PruneParams:
    thm: float
    qtskip: bool

    def __post_init__(self):
        if not (0.0 <= self.thm <= 1.0):
            raise GeometryError(f"thm {self.thm} outside [0, 1]")


def _round_half_away(x: float) -> int:
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


def _rate_bits(model: CostModel, mv_dx: int, mv_dy: int, sse: float, area: int) -> float:
    return (
        model.header_bits
        + model.mv_bit_scale * (abs(mv_dx) + abs(mv_dy))
        + model.res_bit_weight * math.log2(1.0 + sse / area)
    )


def leaf_cost(
    geom: CuGeom,
    cur: Frame,
    refs: RefPair,
    model: CostModel,
    ctu_origin=(0, 0),
    search_range: int = 32,
) -> float:
    """RD cost of coding geom as a single CU (direct block_me route)."""
    x0, y0 = ctu_origin
    rect = (x0 + geom.x, y0 + geom.y, geom.width, geom.height)
    best_sse = None
    best_mv = None
    for ref in (refs.l0, refs.l1):
        mv = block_me(cur, ref, rect, search_range)
        pred = clamped_window(
            ref.luma, rect[1] + mv.dy, rect[0] + mv.dx, geom.height, geom.width
        ).astype(np.int64)
        blk = cur.luma[rect[1] : rect[1] + geom.height, rect[0] : rect[0] + geom.width].astype(np.int64)
        sse = int(((blk - pred) ** 2).sum())
        if best_sse is None or sse < best_sse:
            best_sse, best_mv = sse, mv
    return best_sse + model.lam * _rate_bits(model, best_mv.dx, best_mv.dy, best_sse, geom.area)


class CtuCostContext:
    """Per-CTU motion precomputation shared by all leaf-cost evaluations.

    One displacement scan per reference list covers every power-of-two block
    geometry at min_cu_dim-aligned positions, so leaf costs inside a search
    are O(1) lookups.  Results match the direct block_me route exactly
    (same scan window and tie-breaks).
    """

    def __init__(
        self,
        cur: Frame,
        refs: RefPair,
        ctu_origin,
        c: Constraints,
        search_range: int = 32,
    ):
        x0, y0 = ctu_origin
        if x0 < 0 or y0 < 0 or x0 + c.ctu_size > cur.width or y0 + c.ctu_size > cur.height:
            raise GeometryError(f"partial CTU unsupported: origin {ctu_origin}")
        self.c = c
        self.search_range = search_range
        self.origin = ctu_origin
        dims = []
        d = c.min_cu_dim
        while d <= c.ctu_size:
            dims.append(d)
            d *= 2
        sizes = [(w, h, c.min_cu_dim) for w in dims for h in dims]
        self._scans = []
        for ref in (refs.l0, refs.l1):
            if self._scans and ref is refs.l0:
                self._scans.append(self._scans[0])
                continue
            self._scans.append(
                scan_motion(cur.luma, ref.luma, ctu_origin, c.ctu_size, search_range, sizes, want_sse=True)
            )

    def leaf_terms(self, geom: CuGeom) -> tuple[int, int, int]:
        """(dx, dy, sse) of the better candidate list for geom (tie -> L0)."""
        stride = self.c.min_cu_dim
        sz = (geom.width, geom.height, stride)
        row, col = geom.y // stride, geom.x // stride
        best = None
        for scan in self._scans:
            g = scan[sz]
            cand = (int(g["sse"][row, col]), int(g["dx"][row, col]), int(g["dy"][row, col]))
            if best is None or cand[0] < best[0]:
                best = cand
        return best[1], best[2], best[0]

    def leaf_cost(self, geom: CuGeom, model: CostModel) -> float:
        dx, dy, sse = self.leaf_terms(geom)
        return sse + model.lam * _rate_bits(model, dx, dy, sse, geom.area)


def cand_split(
    geom: CuGeom, pred: Prediction, thm: float, c: Constraints
) -> tuple[bool, tuple[SplitType, ...]]:
    """MT-split early skipping: (SkipMT, CandSplit) for one CU.

    If the rounded mean predicted QT depth exceeds the CU's depth and QT is
    available, MT splits are skipped entirely.  Otherwise the candidate list
    starts at NS and appends, in HBT/VBT/HTT/VTT order, every legal MT split
    whose mean predicted probability strictly exceeds thm.
    """
    if pred.ctu_size != c.ctu_size:
        raise GeometryError(
            f"prediction ctu_size {pred.ctu_size} does not match constraints {c.ctu_size}"
        )
    legal = legal_splits(geom, c)
    avg_depth = mean_qt_depth(pred, geom)
    if _round_half_away(avg_depth) > geom.qt_depth and SplitType.QT in legal:
        return True, (SplitType.NS, SplitType.QT)
    cand = [SplitType.NS]
    if geom.mt_depth < NUM_MT_LEVELS and any(s in legal for s in MT_SPLITS):
        probs = mean_mt_probs(pred, geom, geom.mt_depth)
        for s in MT_SPLITS:
            if s in legal and probs[MT_LABEL_OF_SPLIT[s]] > thm:
                cand.append(s)
    return False, tuple(cand)


def _pruned_candidates(
    geom: CuGeom, pred: Prediction, p: PruneParams, c: Constraints
) -> tuple[SplitType, ...]:
    """Candidate set per the acceleration flowchart around cand_split."""
    skip_mt, cand = cand_split(geom, pred, p.thm, c)
    if skip_mt:
        return cand
    cand = list(cand)
    legal = legal_splits(geom, c)
    if cand == [SplitType.NS]:
        mt_legal = [s for s in MT_SPLITS if s in legal]
        if mt_legal and geom.mt_depth < NUM_MT_LEVELS:
            probs = mean_mt_probs(pred, geom, geom.mt_depth)
            best = max(mt_legal, key=lambda s: (probs[MT_LABEL_OF_SPLIT[s]], -int(s)))
            cand.append(best)
    if SplitType.QT in legal and not p.qtskip:
        cand.append(SplitType.QT)
    cand.sort(key=int)
    return tuple(cand)


def _search(geom, context, model, c, candidates_fn, stats, memo):
    key = (geom.x, geom.y, geom.width, geom.height, geom.qt_depth, geom.mt_depth, geom.after_mt)
    hit = memo.get(key)
    if hit is not None:
        return hit
    stats.nodes_visited += 1
    cands = candidates_fn(geom)
    stats.splits_pruned += len(legal_splits(geom, c)) - len(cands)
    best_cost = None
    best_tree = None
    for s in cands:
        if s == SplitType.NS:
            cost = context.leaf_cost(geom, model)
            stats.leaf_costs_evaluated += 1
            tree = PartitionTree(geom, SplitType.NS)
        else:
            parts = [
                _search(g, context, model, c, candidates_fn, stats, memo)
                for g in apply_split(geom, s, c)
            ]
            cost = model.lam * model.split_bit_cost(s) + sum(pc for _, pc in parts)
            tree = PartitionTree(geom, s, tuple(t for t, _ in parts))
        if best_cost is None or cost < best_cost:
            best_cost, best_tree = cost, tree
    memo[key] = (best_tree, best_cost)
    return best_tree, best_cost


def exhaustive_search(
    cur: Frame,
    refs: RefPair,
    ctu_origin,
    model: CostModel,
    c: Constraints,
    search_range: int = 32,
    context: CtuCostContext | None = None,
) -> EncodeResult:
    """Minimize the RD cost over every legal partition of one CTU."""
    if context is None:
        context = CtuCostContext(cur, refs, ctu_origin, c, search_range)
    stats = SearchStats()
    t0 = time.perf_counter()
    tree, cost = _search(
        root_geom(c), context, model, c, lambda g: legal_splits(g, c), stats, {}
    )
    stats.wall_time = time.perf_counter() - t0
    return EncodeResult(tree=tree, cost=cost, stats=stats)


def pruned_search(
    cur: Frame,
    refs: RefPair,
    ctu_origin,
    model: CostModel,
    pred: Prediction,
    params: PruneParams,
    c: Constraints,
    search_range: int = 32,
    context: CtuCostContext | None = None,
) -> EncodeResult:
    """Prediction-guided search over the pruned candidate sets."""
    if context is None:
        context = CtuCostContext(cur, refs, ctu_origin, c, search_range)
    stats = SearchStats()
    t0 = time.perf_counter()
    tree, cost = _search(
        root_geom(c),
        context,
        model,
        c,
        lambda g: _pruned_candidates(g, pred, params, c),
        stats,
        {},
    )
    stats.wall_time = time.perf_counter() - t0
    return EncodeResult(tree=tree, cost=cost, stats=stats)


def tree_cost(tree: PartitionTree, context: CtuCostContext, model: CostModel) -> float:
    """Recompute the cost of a given tree; matches search costs bit-for-bit."""
    if tree.split == SplitType.NS:
        return context.leaf_cost(tree.geom, model)
    return model.lam * model.split_bit_cost(tree.split) + sum(
        tree_cost(ch, context, model) for ch in tree.children
    )
