import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import prev_refs, wedge_frames
from qtmt.errors import GeometryError
from qtmt.maps import LabelMaps, NS_LABEL, maps_from_tree
from qtmt.metrics import (
    ConfusionTable,
    DecisionRecord,
    LossWeights,
    RdPoint,
    bd_rate,
    candsplit_accuracy,
    class_weight,
    decision_log,
    hybrid_loss,
    prf1,
    recompute_cand,
    skipmt_confusion,
    split_distribution,
    time_saving,
    write_accuracy_csv,
    write_confusion_csv,
    write_tradeoff_csv,
)
from qtmt.partition import Constraints, SplitType, random_tree
from qtmt.predictor import NoiseParams, Prediction, oracle_predict, uniform_predict
from qtmt.rdo import CostModel, exhaustive_search

TABLE3 = [
    # tp, fn, tn, fp, precision, recall, f1
    (41.84, 7.81, 45.83, 4.52, 90.3, 84.3, 87.2),
    (19.53, 0.58, 72.57, 7.32, 72.7, 97.1, 83.1),
    (2.69, 0.08, 94.67, 2.57, 51.1, 97.1, 67.0),
    (0.02, 0.0, 99.92, 0.06, 25.0, 100.0, 40.0),
]


# ---------------------------------------------------------------------------
# prf1

@pytest.mark.parametrize("row", TABLE3)
def test_prf1_reported_rows(row):
    tp, fn, tn, fp, ep, er, ef = row
    p, r, f1 = prf1(ConfusionTable(tp=tp, fn=fn, tn=tn, fp=fp))
    assert p == pytest.approx(ep, abs=0.05)
    assert r == pytest.approx(er, abs=0.05)
    assert f1 == pytest.approx(ef, abs=0.05)


def test_prf1_perfect_classifier():
    assert prf1(ConfusionTable(tp=12, fn=0, tn=30, fp=0)) == (100.0, 100.0, 100.0)


def test_prf1_degenerate_errors():
    with pytest.raises(GeometryError):
        prf1(ConfusionTable())
    with pytest.raises(GeometryError):
        prf1(ConfusionTable(tn=50))  # no positives predicted or actual


def test_prf1_vacuous_sides():
    p, r, _ = prf1(ConfusionTable(tp=0, fn=3, tn=10, fp=0))
    assert p == 100.0 and r == 0.0


# ---------------------------------------------------------------------------
# decision logs

def eval_log(rng, eps=0.0, jitter=0.0, thm=0.0, qp=30):
    frames = wedge_frames(rng, 2, 64, 64)
    refs = prev_refs(frames, 1)
    c = Constraints(ctu_size=64)
    exh = exhaustive_search(frames[1], refs, (0, 0), CostModel(qp=qp), c, 3)
    pred = oracle_predict(
        maps_from_tree(exh.tree, c), NoiseParams(eps=eps, depth_jitter=jitter, seed=5)
    )
    return decision_log(exh.tree, pred, thm, c)


def test_skipmt_confusion_oracle_is_diagonal(rng):
    tables = skipmt_confusion(eval_log(rng))
    assert sum(t.total() for t in tables) > 0
    for t in tables:
        assert t.fp == 0 and t.fn == 0


def test_skipmt_confusion_single_mislabel():
    log = [
        DecisionRecord(qt_depth=1, skip_mt=True, needs_qt=True),
        DecisionRecord(qt_depth=1, skip_mt=True, needs_qt=False),  # the one FP
        DecisionRecord(qt_depth=0, skip_mt=False, needs_qt=False),
    ]
    tables = skipmt_confusion(log)
    assert (tables[1].tp, tables[1].fp, tables[1].fn, tables[1].tn) == (1, 1, 0, 0)
    assert (tables[0].tp, tables[0].fp, tables[0].fn, tables[0].tn) == (0, 0, 0, 1)


def test_skipmt_confusion_matches_manual_tally(rng):
    entries = []
    tally = [[0, 0, 0, 0] for _ in range(4)]  # tp fn tn fp per depth
    for i in range(50):
        depth = int(rng.integers(0, 4))
        skip = bool(rng.integers(0, 2))
        needs = bool(rng.integers(0, 2))
        entries.append(DecisionRecord(qt_depth=depth, skip_mt=skip, needs_qt=needs))
        if needs and skip:
            tally[depth][0] += 1
        elif needs and not skip:
            tally[depth][1] += 1
        elif not needs and not skip:
            tally[depth][2] += 1
        else:
            tally[depth][3] += 1
    tables = skipmt_confusion(entries)
    for depth in range(4):
        got = (tables[depth].tp, tables[depth].fn, tables[depth].tn, tables[depth].fp)
        assert got == tuple(tally[depth])


def test_skipmt_confusion_rejects_depth4():
    with pytest.raises(GeometryError, match="depth 4"):
        skipmt_confusion([DecisionRecord(qt_depth=4, skip_mt=True, needs_qt=True)])


def test_candsplit_accuracy_all_legal_is_100(rng):
    log = eval_log(rng)
    curves = candsplit_accuracy(log, [0.0])
    for level, accs in curves.items():
        assert accs[0] == 100.0


def test_candsplit_accuracy_monotone_then_flat(rng):
    frames = wedge_frames(rng, 2, 64, 64)
    refs = prev_refs(frames, 1)
    c = Constraints(ctu_size=64)
    exh = exhaustive_search(frames[1], refs, (0, 0), CostModel(qp=30), c, 3)
    log = decision_log(exh.tree, uniform_predict(c), 0.0, c)
    grid = [0.0, 0.125, 0.175, 0.225, 0.26]
    curves = candsplit_accuracy(log, grid)
    for level, accs in curves.items():
        assert all(a >= b for a, b in zip(accs, accs[1:]))  # non-increasing
        assert accs[-2] == accs[-1]  # stabilized: list is {NS, best-MT}
    # floor accuracy is at least the NS share: NS is always a candidate
    for level, accs in curves.items():
        recs = [r for r in log if r.mt_level == level]
        ns_share = 100.0 * sum(r.truth_split == SplitType.NS for r in recs) / len(recs)
        assert accs[-1] >= ns_share


def test_recompute_cand_matches_threshold_semantics():
    rec = DecisionRecord(
        qt_depth=0,
        mt_level=0,
        truth_split=SplitType.HBT,
        mt_mean_probs=np.array([0.1, 0.2, 0.1, 0.5, 0.1]),
        legal_mt=(SplitType.HBT, SplitType.VBT, SplitType.HTT, SplitType.VTT),
    )
    assert recompute_cand(rec, 0.15) == (SplitType.NS, SplitType.HBT, SplitType.VBT)
    assert recompute_cand(rec, 0.6) == (SplitType.NS, SplitType.HBT)  # augmented best-MT


# ---------------------------------------------------------------------------
# distributions & weights

def test_split_distribution_all_ns():
    maps = LabelMaps(
        qt=np.zeros((8, 8), np.uint8), mt=np.full((3, 16, 16), NS_LABEL, np.uint8)
    )
    dist = split_distribution([maps])
    assert np.allclose(dist[:, NS_LABEL], 1.0)


def test_split_distribution_half_and_half():
    mt = np.full((3, 16, 16), NS_LABEL, np.uint8)
    mt[:, :8, :] = 3  # HBT on half the cells
    dist = split_distribution([mt])
    assert np.allclose(dist[:, 2], 0.5) and np.allclose(dist[:, 3], 0.5)


def test_split_distribution_matches_second_count(rng):
    c = Constraints(ctu_size=64)
    maps = [maps_from_tree(random_tree(rng, c, stop_base=0.35), c) for _ in range(20)]
    dist = split_distribution(maps)
    stacked = np.stack([m.mt for m in maps])  # (n, 3, 16, 16)
    for b in range(3):
        for s in range(5):
            assert dist[b, s] == pytest.approx(np.mean(stacked[:, b] == s))


def test_class_weight_closed_forms():
    props = np.array([[0.1, 0.1, 0.6, 0.2, 0.0], [0.2] * 5, [0.2] * 5])
    w = LossWeights(a=0.8, lambdas=(1.0, 2.0, 1.0, 2.0, 1.0), proportions=props)
    assert class_weight(0, SplitType.HBT, w) == pytest.approx(6.0)
    assert class_weight(0, SplitType.NS, w) == pytest.approx(1.0)
    assert class_weight(1, SplitType.VTT, w) == pytest.approx(1.0)  # lam 1, equal shares
    with pytest.raises(GeometryError, match="unseen class"):
        class_weight(0, SplitType.HTT, w)


# ---------------------------------------------------------------------------
# hybrid loss

def perfect_pair(ctu=128):
    n8, n4 = ctu // 8, ctu // 4
    qt = np.zeros((n8, n8), np.uint8)
    mt = np.full((3, n4, n4), NS_LABEL, np.uint8)
    labels = LabelMaps(qt=qt, mt=mt)
    probs = np.zeros((3, n4, n4, 5), np.float32)
    probs[..., NS_LABEL] = 1.0
    pred = Prediction(qt_depth=qt.astype(np.float32), mt_probs=probs)
    return pred, labels


def test_hybrid_loss_perfect_is_zero():
    pred, labels = perfect_pair()
    assert abs(hybrid_loss(pred, labels, LossWeights())) < 1e-9


def test_hybrid_loss_a1_reduces_to_mse(rng):
    pred, labels = perfect_pair()
    qt_pred = pred.qt_depth + rng.normal(0, 1, pred.qt_depth.shape).astype(np.float32)
    noisy = Prediction(qt_depth=qt_pred, mt_probs=pred.mt_probs)
    w = LossWeights(a=1.0)
    expected = float(((qt_pred.astype(np.float64) - labels.qt) ** 2).mean())
    assert hybrid_loss(noisy, labels, w) == pytest.approx(expected, rel=1e-12)


def test_hybrid_loss_single_cell_hand_value():
    pred, labels = perfect_pair()
    qt_pred = pred.qt_depth.copy()
    qt_pred[0, 0] += 1.0
    mt = labels.mt.copy()
    mt[0, 0, 0] = 3  # truth HBT at one cell
    probs = pred.mt_probs.copy()
    probs[0, 0, 0] = [0.125, 0.125, 0.125, 0.5, 0.125]
    w = LossWeights(
        a=0.8,
        lambdas=(1.0, 2.0, 1.0, 2.0, 1.0),
        proportions=np.array([[0.05, 0.05, 0.6, 0.2, 0.1], [0.2] * 5, [0.2] * 5]),
    )
    got = hybrid_loss(
        Prediction(qt_depth=qt_pred, mt_probs=probs), LabelMaps(qt=labels.qt, mt=mt), w
    )
    expected = 0.8 / 256 + 0.2 * 6.0 * np.log(2.0)
    assert got == pytest.approx(expected, abs=1e-9)


def test_hybrid_loss_nonnegative_and_mean_ce(rng):
    c = Constraints(ctu_size=64)
    maps = maps_from_tree(random_tree(rng, c, stop_base=0.3), c)
    pred = oracle_predict(maps, NoiseParams(eps=0.3, depth_jitter=0.4, seed=1))
    w = LossWeights(a=0.8)
    full = hybrid_loss(pred, maps, w)
    mean = hybrid_loss(pred, maps, w, mean_ce=True)
    assert full >= 0 and mean >= 0
    assert full > mean  # 3*256 cells of unaveraged CE dominate


def test_hybrid_loss_shape_mismatch():
    pred, _ = perfect_pair(128)
    _, labels64 = perfect_pair(64)
    with pytest.raises(GeometryError, match="mismatch"):
        hybrid_loss(pred, labels64, LossWeights())


# ---------------------------------------------------------------------------
# BD-rate: trapezoid oracle fits via a hand-built Vandermonde and integrates
# numerically, sharing no curve code with the implementation.

def bd_rate_trapezoid_oracle(anchor, test, samples=20001):
    def fit(points):
        psnr = np.array([p.psnr for p in points])
        logr = np.log10([p.bitrate for p in points])
        v = np.stack([psnr**3, psnr**2, psnr, np.ones_like(psnr)], axis=1)
        coef, *_ = np.linalg.lstsq(v, logr, rcond=None)
        return coef, psnr.min(), psnr.max()

    ca, alo, ahi = fit(anchor)
    ct, tlo, thi = fit(test)
    lo, hi = max(alo, tlo), min(ahi, thi)
    xs = np.linspace(lo, hi, samples)

    def ev(coef, x):
        return coef[0] * x**3 + coef[1] * x**2 + coef[2] * x + coef[3]

    int_a = np.trapezoid(ev(ca, xs), xs)
    int_t = np.trapezoid(ev(ct, xs), xs)
    return (10.0 ** ((int_t - int_a) / (hi - lo)) - 1.0) * 100.0


def rd_curve(rng, base_rate=800.0):
    rates = np.sort(base_rate * (1.0 + rng.uniform(0.3, 2.0, 4)).cumprod())
    psnrs = np.sort(30.0 + rng.uniform(0.5, 3.0, 4).cumsum())
    return [RdPoint(float(r), float(p)) for r, p in zip(rates, psnrs)]


def test_bd_rate_identical_curves(rng):
    curve = rd_curve(rng)
    assert abs(bd_rate(curve, curve)) < 1e-9


def test_bd_rate_ten_percent_shift(rng):
    anchor = rd_curve(rng)
    test = [RdPoint(p.bitrate * 1.10, p.psnr) for p in anchor]
    assert bd_rate(anchor, test) == pytest.approx(10.0, abs=0.01)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_bd_rate_matches_trapezoid_oracle(seed):
    r = np.random.default_rng(seed)
    anchor = rd_curve(r)
    test = rd_curve(r, base_rate=700.0)
    assert bd_rate(anchor, test) == pytest.approx(
        bd_rate_trapezoid_oracle(anchor, test), abs=0.01
    )


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_bd_rate_first_order_antisymmetry(seed):
    r = np.random.default_rng(seed)
    anchor = rd_curve(r)
    test = [RdPoint(p.bitrate * float(f), p.psnr) for p, f in
            zip(anchor, 1.0 + r.uniform(-0.05, 0.05, 4))]
    ab = bd_rate(anchor, test)
    ba = bd_rate(test, anchor)
    assert ab == pytest.approx(-ba / (1 + ba / 100.0), abs=0.05)


def test_bd_rate_error_cases(rng):
    curve = rd_curve(rng)
    bad = [RdPoint(p.bitrate, 60.0 - p.psnr) for p in curve]  # decreasing psnr
    with pytest.raises(GeometryError, match="strictly increasing"):
        bd_rate(curve, bad)
    far = [RdPoint(p.bitrate, p.psnr + 100.0) for p in curve]
    with pytest.raises(GeometryError, match="overlapping"):
        bd_rate(curve, far)
    with pytest.raises(GeometryError, match="4 RD points"):
        bd_rate(curve[:3], curve[:3])
    with pytest.raises(GeometryError, match="bitrate"):
        RdPoint(0.0, 30.0)


# ---------------------------------------------------------------------------
# time saving

def test_time_saving_values():
    assert time_saving((100, 100, 100, 100), (90, 80, 70, 60)) == pytest.approx(25.0)
    assert time_saving((5, 5, 5, 5), (5, 5, 5, 5)) == 0.0
    assert time_saving((8, 8, 8, 8), (4, 4, 4, 4)) == pytest.approx(50.0)


def test_time_saving_errors():
    with pytest.raises(GeometryError):
        time_saving((1, 2, 3, 0), (1, 1, 1, 1))
    with pytest.raises(GeometryError):
        time_saving((1, 2), (1, 2, 3))


# ---------------------------------------------------------------------------
# CSV emitters

def test_csv_emitters(tmp_path, rng):
    tables = skipmt_confusion(eval_log(rng))
    write_confusion_csv(tmp_path / "c.csv", tables)
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "qt_depth,tp,fn,tn,fp,precision,recall,f1"

    curves = candsplit_accuracy(eval_log(rng), [0.0, 0.1])
    write_accuracy_csv(tmp_path / "a.csv", [0.0, 0.1], curves)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0].startswith("thm,acc_mt0")
    assert len(lines) == 3

    write_tradeoff_csv(tmp_path / "t.csv", [(0.1, True, 0.5, 30.0, 25.0)])
    assert "thm,qtskip,cost_increase_pct,nodes_saved_pct,ts_pct" in (
        tmp_path / "t.csv"
    ).read_text()
