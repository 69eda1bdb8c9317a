import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtmt.errors import FormatError
from qtmt.maps import maps_from_tree
from qtmt.partition import Constraints, random_tree
from qtmt.predictor import (
    NoiseParams,
    Prediction,
    load_predictions,
    mean_mt_probs,
    mean_qt_depth,
    oracle_predict,
    uniform_predict,
    write_predictions,
)


def random_maps(seed, ctu=64):
    c = Constraints(ctu_size=ctu)
    return maps_from_tree(random_tree(np.random.default_rng(seed), c, stop_base=0.35), c), c


def test_oracle_exact_when_noiseless():
    maps, _ = random_maps(0)
    pred = oracle_predict(maps)
    assert np.array_equal(pred.qt_depth, maps.qt.astype(np.float32))
    assert np.array_equal(pred.mt_probs.argmax(axis=-1), maps.mt)
    assert set(np.unique(pred.mt_probs)) <= {0.0, 1.0}


def test_oracle_smoothing_closed_form():
    maps, _ = random_maps(1)
    pred = oracle_predict(maps, NoiseParams(eps=0.2))
    picked = np.take_along_axis(pred.mt_probs, maps.mt[..., None].astype(int), axis=-1)
    assert np.allclose(picked, 0.8)
    sums = pred.mt_probs.sum(axis=-1)
    assert np.allclose(sums, 1.0, atol=1e-6)
    others = pred.mt_probs[pred.mt_probs < 0.5]
    assert np.allclose(others, 0.05)


@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(0.0, 0.79))
@settings(max_examples=40, deadline=None)
def test_oracle_argmax_preserved_below_point8(seed, eps):
    maps, _ = random_maps(seed % 7)
    pred = oracle_predict(maps, NoiseParams(eps=eps, seed=seed))
    assert np.array_equal(pred.mt_probs.argmax(axis=-1), maps.mt)


def test_oracle_jitter_deterministic():
    maps, _ = random_maps(2)
    a = oracle_predict(maps, NoiseParams(depth_jitter=0.5, seed=9))
    b = oracle_predict(maps, NoiseParams(depth_jitter=0.5, seed=9))
    d = oracle_predict(maps, NoiseParams(depth_jitter=0.5, seed=10))
    assert np.array_equal(a.qt_depth, b.qt_depth)
    assert not np.array_equal(a.qt_depth, d.qt_depth)


def test_uniform_prediction_rows():
    c = Constraints()
    pred = uniform_predict(c)
    assert pred.qt_depth.shape == (16, 16) and (pred.qt_depth == 0).all()
    assert pred.mt_probs.shape == (3, 32, 32, 5)
    assert np.allclose(pred.mt_probs.sum(axis=-1), 1.0)
    assert np.allclose(pred.mt_probs, 0.2)


def test_prediction_invariants_enforced():
    with pytest.raises(FormatError):
        Prediction(
            qt_depth=np.zeros((16, 16), np.float32),
            mt_probs=np.full((3, 32, 32, 5), 0.3, np.float32),  # rows sum to 1.5
        )
    bad = np.zeros((16, 16), np.float32)
    bad[0, 0] = np.nan
    with pytest.raises(FormatError):
        Prediction(qt_depth=bad, mt_probs=np.full((3, 32, 32, 5), 0.2, np.float32))


def test_mean_helpers_pixel_weighting():
    c = Constraints(ctu_size=64)
    n8, n4 = 8, 16
    qt = np.zeros((n8, n8), np.float32)
    qt[0, 0] = 4.0  # one 8x8 cell
    probs = np.full((3, n4, n4, 5), 0.2, np.float32)
    pred = Prediction(qt_depth=qt, mt_probs=probs)
    from qtmt.partition import CuGeom

    # a 4x8 CU covering exactly the left half of that hot cell
    assert mean_qt_depth(pred, CuGeom(0, 0, 4, 8, 0, 1, True)) == pytest.approx(4.0)
    # an 8x8 CU half over the hot cell, half over a zero cell
    assert mean_qt_depth(pred, CuGeom(4, 0, 8, 8, 1, 1, True)) == pytest.approx(2.0)
    assert np.allclose(mean_mt_probs(pred, CuGeom(0, 0, 16, 16, 1, 0, False), 0), 0.2)


# ---------------------------------------------------------------------------
# MVFP files

def make_predictions(n, ctu=64, seed=0):
    rng = np.random.default_rng(seed)
    c = Constraints(ctu_size=ctu)
    out = {}
    for i in range(n):
        maps = maps_from_tree(random_tree(rng, c, stop_base=0.4), c)
        out[(i // 2, i % 2, 0)] = oracle_predict(maps, NoiseParams(eps=0.25, seed=i))
    return out


def test_mvfp_roundtrip_bit_exact(tmp_path):
    preds = make_predictions(6)
    path = tmp_path / "p.mvfp"
    write_predictions(path, preds, 64)
    back = load_predictions(path)
    assert set(back) == set(preds)
    for key in preds:
        assert back[key].qt_depth.tobytes() == preds[key].qt_depth.astype("<f4").tobytes()
        assert back[key].mt_probs.tobytes() == preds[key].mt_probs.astype("<f4").tobytes()
    # writing the loaded map again is identical on disk
    path2 = tmp_path / "p2.mvfp"
    write_predictions(path2, back, 64)
    assert path.read_bytes() == path2.read_bytes()


def test_mvfp_empty_file(tmp_path):
    path = tmp_path / "e.mvfp"
    write_predictions(path, {}, 128)
    assert load_predictions(path) == {}


def test_mvfp_bad_magic(tmp_path):
    path = tmp_path / "b.mvfp"
    write_predictions(path, make_predictions(1), 64)
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="bad magic"):
        load_predictions(path)


def test_mvfp_truncated(tmp_path):
    path = tmp_path / "t.mvfp"
    write_predictions(path, make_predictions(3), 64)
    data = path.read_bytes()
    path.write_bytes(data[:-50])
    with pytest.raises(FormatError, match="truncated record"):
        load_predictions(path)


def test_mvfp_bad_probability_rows(tmp_path):
    preds = make_predictions(1)
    path = tmp_path / "s.mvfp"
    write_predictions(path, preds, 64)
    data = bytearray(path.read_bytes())
    # first probability float sits after header(12) + rec head(8) + qt(4*64)
    off = 12 + 8 + 4 * 64
    data[off : off + 4] = np.float32(5.0).tobytes()
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="probability rows"):
        load_predictions(path)
