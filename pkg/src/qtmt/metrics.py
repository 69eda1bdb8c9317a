"""Evaluation math: SkipMT confusion and precision/recall/F1, CandSplit
accuracy curves, split-type distributions, class weights, the hybrid
regression+classification loss, BD-rate, and time saving."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GeometryError
from .maps import MT_LABEL_OF_SPLIT, NS_LABEL, NUM_MT_LEVELS, LabelMaps
from .partition import MT_SPLITS, Constraints, PartitionTree, SplitType, legal_splits
from .predictor import NUM_CLASSES, Prediction, mean_mt_probs
from .rdo import cand_split

NUM_SKIP_DEPTHS = 4  # SkipMT decisions exist at QT depths 0..3 only


@dataclass
class ConfusionTable:
    """Counts (or percentages) with "needs further QT split" as positive."""

    tp: float = 0.0
    fn: float = 0.0
    tn: float = 0.0
    fp: float = 0.0

    def total(self) -> float:
        return self.tp + self.fn + self.tn + self.fp


def prf1(t: ConfusionTable) -> tuple[float, float, float]:
    """(precision, recall, F1) as percentages.

    A vacuous denominator (no predicted / no actual positives) yields 100 for
    that term; a table where both are vacuous is an error.  F1 is the
    harmonic mean of precision and recall taken at one-decimal reporting
    precision, the convention confusion tables are published at.
    """
    if t.total() <= 0:
        raise GeometryError("confusion table is all zero")
    if t.tp + t.fp == 0 and t.tp + t.fn == 0:
        raise GeometryError("confusion table has no positives in either direction")
    precision = 100.0 if t.tp + t.fp == 0 else 100.0 * t.tp / (t.tp + t.fp)
    recall = 100.0 if t.tp + t.fn == 0 else 100.0 * t.tp / (t.tp + t.fn)
    p, r = round(precision, 1), round(recall, 1)
    f1 = 0.0 if p + r == 0 else 2.0 * p * r / (p + r)
    return precision, recall, f1


@dataclass
class DecisionRecord:
    """One CU's logged decisions against the exhaustive-search ground truth.

    skip_mt/needs_qt describe the SkipMT decision (None when QT was not an
    option for this CU); the mt_* fields describe the CandSplit decision
    (None when no candidate list was formed).
    """

    qt_depth: int
    skip_mt: bool | None = None
    needs_qt: bool | None = None
    mt_level: int | None = None
    cand: tuple[SplitType, ...] | None = None
    truth_split: SplitType | None = None
    mt_mean_probs: np.ndarray | None = None
    legal_mt: tuple[SplitType, ...] = ()


DecisionLog = list


def decision_log(
    truth: PartitionTree, pred: Prediction, thm: float, c: Constraints
) -> DecisionLog:
    """Walk the ground-truth tree and log both decisions at every CU."""
    out = []
    for node in truth.iter_nodes():
        geom = node.geom
        legal = legal_splits(geom, c)
        rec = DecisionRecord(qt_depth=geom.qt_depth)
        skip = False
        if SplitType.QT in legal:
            skip, cand = cand_split(geom, pred, thm, c)
            rec.skip_mt = skip
            rec.needs_qt = node.split == SplitType.QT
        if (
            node.split != SplitType.QT
            and geom.mt_depth < NUM_MT_LEVELS
            and not skip
        ):
            _, cand = cand_split(geom, pred, thm, c)
            rec.mt_level = geom.mt_depth
            rec.truth_split = node.split
            rec.mt_mean_probs = mean_mt_probs(pred, geom, geom.mt_depth)
            rec.legal_mt = tuple(s for s in MT_SPLITS if s in legal)
            rec.cand = _augment_cand(cand, rec.legal_mt, rec.mt_mean_probs)
        if rec.skip_mt is not None or rec.mt_level is not None:
            out.append(rec)
    return out


def _augment_cand(cand, legal_mt, probs) -> tuple[SplitType, ...]:
    """Flowchart augmentation: an {NS}-only list gains the most probable
    legal MT split.  QT membership is the SkipMT/QTskip decision's business
    and is deliberately not part of the MT-level candidate list."""
    if len(cand) == 1 and legal_mt:
        best = max(legal_mt, key=lambda s: (probs[MT_LABEL_OF_SPLIT[s]], -int(s)))
        return cand + (best,)
    return cand


def skipmt_confusion(log: DecisionLog) -> list[ConfusionTable]:
    """Per-QT-depth confusion tables of the SkipMT decision."""
    if not log:
        raise GeometryError("decision log is empty")
    tables = [ConfusionTable() for _ in range(NUM_SKIP_DEPTHS)]
    for rec in log:
        if rec.skip_mt is None:
            continue
        if rec.qt_depth >= NUM_SKIP_DEPTHS:
            raise GeometryError(f"SkipMT entry at QT depth {rec.qt_depth}")
        t = tables[rec.qt_depth]
        if rec.needs_qt and rec.skip_mt:
            t.tp += 1
        elif rec.needs_qt and not rec.skip_mt:
            t.fn += 1
        elif not rec.needs_qt and rec.skip_mt:
            t.fp += 1
        else:
            t.tn += 1
    return tables


def recompute_cand(rec: DecisionRecord, thm: float) -> tuple[SplitType, ...]:
    """The CU's candidate list at an arbitrary threshold, from logged means."""
    cand = [SplitType.NS]
    for s in MT_SPLITS:
        if s in rec.legal_mt and rec.mt_mean_probs[MT_LABEL_OF_SPLIT[s]] > thm:
            cand.append(s)
    return _augment_cand(tuple(cand), rec.legal_mt, rec.mt_mean_probs)


def candsplit_accuracy(log: DecisionLog, thm_grid) -> dict[int, list[float]]:
    """Accuracy of the CandSplit decision per MT level across thresholds.

    accuracy(b, thm) is the fraction of level-b decisions whose candidate
    list contains the ground-truth split.  Levels with no entries are
    omitted.
    """
    by_level: dict[int, list[DecisionRecord]] = {}
    for rec in log:
        if rec.mt_level is not None:
            by_level.setdefault(rec.mt_level, []).append(rec)
    out = {}
    for level, recs in sorted(by_level.items()):
        out[level] = [
            sum(rec.truth_split in recompute_cand(rec, thm) for rec in recs) / len(recs) * 100.0
            for thm in thm_grid
        ]
    return out


def split_distribution(dataset) -> np.ndarray:
    """Proportions of the five labels per MT branch, shape (3, 5).

    Accepts an iterable of LabelMaps, SampleRecord-like objects (with an
    mt_maps attribute), or raw (3, n, n) label arrays.
    """
    counts = np.zeros((NUM_MT_LEVELS, NUM_CLASSES), dtype=np.int64)
    n = 0
    for item in dataset:
        if isinstance(item, LabelMaps):
            mt = item.mt
        elif hasattr(item, "mt_maps"):
            mt = item.mt_maps
        else:
            mt = np.asarray(item)
        for b in range(NUM_MT_LEVELS):
            counts[b] += np.bincount(mt[b].ravel(), minlength=NUM_CLASSES)
        n += 1
    if n == 0:
        raise GeometryError("empty dataset")
    return counts / counts.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class LossWeights:
    """Inputs of the weighted hybrid loss: the regression/classification
    balance a, per-split-type lambda, and per-branch label proportions
    (both in the label order VTT, VBT, NS, HBT, HTT)."""

    a: float = 0.8
    lambdas: tuple = (1.0, 2.0, 1.0, 2.0, 1.0)  # BT splits weighted 2, TT and NS 1
    proportions: np.ndarray = field(default_factory=lambda: np.full((3, 5), 0.2))

    def matrix(self) -> np.ndarray:
        """(3, 5) class weights; classes absent from a branch get weight 0."""
        p = np.asarray(self.proportions, dtype=np.float64)
        lam = np.asarray(self.lambdas, dtype=np.float64)
        w = np.zeros_like(p)
        nz = p > 0
        w[nz] = (lam[None, :] * p[:, NS_LABEL : NS_LABEL + 1] / np.where(nz, p, 1.0))[nz]
        return w


def class_weight(b: int, s: SplitType, w: LossWeights) -> float:
    """Eq.-2-style weight lambda_s * p_{b,NS} / p_{b,s}."""
    label = MT_LABEL_OF_SPLIT[s]
    p = np.asarray(w.proportions, dtype=np.float64)
    if p[b, label] <= 0:
        raise GeometryError(f"unseen class: {s.name} has zero proportion in branch {b}")
    return float(w.lambdas[label] * p[b, NS_LABEL] / p[b, label])


def hybrid_loss(
    pred: Prediction, labels: LabelMaps, w: LossWeights, mean_ce: bool = False
) -> float:
    """Weighted MSE-on-depths plus weighted cross-entropy on split classes.

    The cross-entropy term is a plain (unaveraged) sum over branches and
    cells; mean_ce=True divides it by n_b * n_m instead.  Natural log;
    probabilities are clamped below at 1e-12.
    """
    if pred.qt_depth.shape != labels.qt.shape or pred.mt_probs.shape[:3] != labels.mt.shape:
        raise GeometryError(
            f"prediction/label shape mismatch: {pred.qt_depth.shape}/{pred.mt_probs.shape} "
            f"vs {labels.qt.shape}/{labels.mt.shape}"
        )
    d = labels.qt.astype(np.float64)
    d_hat = pred.qt_depth.astype(np.float64)
    mse = float(((d - d_hat) ** 2).mean(dtype=np.float64))

    weights = w.matrix()
    probs = np.clip(pred.mt_probs.astype(np.float64), 1e-12, None)
    ce = 0.0
    for b in range(NUM_MT_LEVELS):
        y = labels.mt[b].ravel()
        p_true = probs[b].reshape(-1, NUM_CLASSES)[np.arange(y.size), y]
        ce += float((weights[b, y] * np.log(p_true)).sum(dtype=np.float64))
    if mean_ce:
        ce /= NUM_MT_LEVELS * labels.mt[0].size
    return w.a * mse - (1.0 - w.a) * ce


# ---------------------------------------------------------------------------
# RD-curve and timing metrics

@dataclass(frozen=True)
class RdPoint:
    bitrate: float  # kbit/s
    psnr: float     # dB

    def __post_init__(self):
        if self.bitrate <= 0:
            raise GeometryError(f"bitrate must be positive, got {self.bitrate}")


def _sorted_curve(points) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted(points, key=lambda p: p.bitrate)
    rate = np.array([p.bitrate for p in pts], dtype=np.float64)
    psnr = np.array([p.psnr for p in pts], dtype=np.float64)
    if len(pts) != 4:
        raise GeometryError(f"bd_rate expects 4 RD points per curve, got {len(pts)}")
    if not (np.diff(rate) > 0).all() or not (np.diff(psnr) > 0).all():
        raise GeometryError("RD curve must have strictly increasing psnr with bitrate")
    return rate, psnr


def bd_rate(anchor, test) -> float:
    """Bjontegaard delta rate in percent (positive = test costs more rate).

    Cubic fit of log10(bitrate) over psnr for each curve, analytically
    integrated over the overlapping psnr interval.
    """
    a_rate, a_psnr = _sorted_curve(anchor)
    t_rate, t_psnr = _sorted_curve(test)
    lo = max(a_psnr.min(), t_psnr.min())
    hi = min(a_psnr.max(), t_psnr.max())
    if hi <= lo:
        raise GeometryError("RD curves have no overlapping psnr interval")
    poly_a = np.polyfit(a_psnr, np.log10(a_rate), 3)
    poly_t = np.polyfit(t_psnr, np.log10(t_rate), 3)
    int_a = np.polyint(poly_a)
    int_t = np.polyint(poly_t)
    avg_diff = (
        (np.polyval(int_t, hi) - np.polyval(int_t, lo))
        - (np.polyval(int_a, hi) - np.polyval(int_a, lo))
    ) / (hi - lo)
    return float((10.0 ** avg_diff - 1.0) * 100.0)


def time_saving(t_anchor, t_test) -> float:
    """Mean relative encoding-time reduction, in percent.

    With the four-QP convention this is exactly (1/4) * sum over QPs of
    (T_anchor - T_test) / T_anchor * 100.
    """
    t_anchor = list(t_anchor)
    t_test = list(t_test)
    if len(t_anchor) != len(t_test) or not t_anchor:
        raise GeometryError("time vectors must be non-empty and of equal length")
    if any(t <= 0 for t in t_anchor) or any(t <= 0 for t in t_test):
        raise GeometryError("times must be positive")
    return 100.0 * sum((a - t) / a for a, t in zip(t_anchor, t_test)) / len(t_anchor)


# ---------------------------------------------------------------------------
# CSV emitters

def write_confusion_csv(path, tables: list[ConfusionTable]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["qt_depth", "tp", "fn", "tn", "fp", "precision", "recall", "f1"])
        for depth, t in enumerate(tables):
            if t.total() == 0 or (t.tp + t.fp == 0 and t.tp + t.fn == 0):
                wr.writerow([depth, t.tp, t.fn, t.tn, t.fp, "", "", ""])
                continue
            p, r, f1 = prf1(t)
            wr.writerow([depth, t.tp, t.fn, t.tn, t.fp, f"{p:.4f}", f"{r:.4f}", f"{f1:.4f}"])


def write_accuracy_csv(path, thm_grid, curves: dict[int, list[float]]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        levels = sorted(curves.keys())
        wr.writerow(["thm"] + [f"acc_mt{b}" for b in levels])
        for i, thm in enumerate(thm_grid):
            wr.writerow([thm] + [f"{curves[b][i]:.4f}" for b in levels])


def write_tradeoff_csv(path, rows) -> None:
    """rows: iterables of (thm, qtskip, cost_increase_pct, nodes_saved_pct, ts_pct)."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["thm", "qtskip", "cost_increase_pct", "nodes_saved_pct", "ts_pct"])
        for row in rows:
            wr.writerow(list(row))
