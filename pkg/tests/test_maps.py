import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtmt.errors import MapEncodingError
from qtmt.maps import (
    MT_LABEL_OF_SPLIT,
    NS_LABEL,
    LabelMaps,
    maps_from_tree,
    tree_from_maps,
    validate_maps,
)
from qtmt.partition import (
    Constraints,
    CuGeom,
    PartitionTree,
    SplitType,
    apply_split,
    enumerate_partitions,
    leaf_paths,
    random_tree,
    root_geom,
)


# ---------------------------------------------------------------------------
# Per-pixel path-walk oracle: for every pixel, descend the tree through the
# child containing it, recording the final QT depth and the MT decision seen
# at each MT level.  Independent of the map encoder's region writes.

def pixel_decisions(tree, px, py):
    node = tree
    mt_labels = [NS_LABEL] * 3
    while node.split != SplitType.NS:
        g = node.geom
        if node.split != SplitType.QT:
            mt_labels[g.mt_depth] = MT_LABEL_OF_SPLIT[node.split]
        node = next(
            ch
            for ch in node.children
            if ch.geom.x <= px < ch.geom.x + ch.geom.width
            and ch.geom.y <= py < ch.geom.y + ch.geom.height
        )
    return node.geom.qt_depth, mt_labels


def maps_by_pixel_walk(tree, c):
    n8, n4 = c.ctu_size // 8, c.ctu_size // 4
    qt = np.zeros((n8, n8), dtype=np.uint8)
    mt = np.full((3, n4, n4), NS_LABEL, dtype=np.uint8)
    for py in range(0, c.ctu_size, 4):
        for px in range(0, c.ctu_size, 4):
            depth, labels = pixel_decisions(tree, px, py)
            qt[py // 8, px // 8] = depth
            for b in range(3):
                mt[b, py // 4, px // 4] = labels[b]
    return qt, mt


def test_single_ns_tree_maps():
    c = Constraints()
    maps = maps_from_tree(PartitionTree(root_geom(c), SplitType.NS), c)
    assert (maps.qt == 0).all()
    assert (maps.mt == NS_LABEL).all()


def test_all_zero_maps_decode_to_single_ns():
    c = Constraints()
    maps = LabelMaps(
        qt=np.zeros((16, 16), dtype=np.uint8),
        mt=np.full((3, 32, 32), NS_LABEL, dtype=np.uint8),
    )
    tree = tree_from_maps(maps, c)
    assert tree.split == SplitType.NS
    assert tree.geom == root_geom(c)


def test_green_circle_example():
    # 64 CTU: a CU reached by three QT splits, then HBT, then NS twice.
    c = Constraints(ctu_size=64)

    def qt_all_the_way(geom, depth):
        if depth == 3:
            if geom.x == 0 and geom.y == 0:
                kids = apply_split(geom, SplitType.HBT, c)
                children = tuple(PartitionTree(k, SplitType.NS) for k in kids)
                return PartitionTree(geom, SplitType.HBT, children)
            return PartitionTree(geom, SplitType.NS)
        kids = apply_split(geom, SplitType.QT, c)
        return PartitionTree(geom, SplitType.QT, tuple(qt_all_the_way(k, depth + 1) for k in kids))

    tree = qt_all_the_way(root_geom(c), 0)
    maps = maps_from_tree(tree, c)
    # the 8x8 CU at the origin: qt depth 3, MT0 = HBT, MT1 and MT2 = NS
    assert maps.qt[0, 0] == 3
    assert maps.mt[0, 0, 0] == MT_LABEL_OF_SPLIT[SplitType.HBT]
    assert maps.mt[1, 0, 0] == NS_LABEL
    assert maps.mt[2, 0, 0] == NS_LABEL
    assert tree_from_maps(maps, c) == tree


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_maps_match_pixel_walk_oracle(seed):
    c = Constraints(ctu_size=16)
    tree = random_tree(np.random.default_rng(seed), c, stop_base=0.3)
    maps = maps_from_tree(tree, c)
    qt, mt = maps_by_pixel_walk(tree, c)
    assert np.array_equal(maps.qt, qt)
    assert np.array_equal(maps.mt, mt)


@given(seed=st.integers(0, 2**32 - 1), ctu=st.sampled_from([64, 128]))
@settings(max_examples=60, deadline=None)
def test_roundtrip_random_trees(seed, ctu):
    c = Constraints(ctu_size=ctu)
    tree = random_tree(np.random.default_rng(seed), c)
    maps = maps_from_tree(tree, c)
    assert tree_from_maps(maps, c) == tree
    ok, diag = validate_maps(maps, c)
    assert ok, diag


def test_roundtrip_other_direction():
    # maps -> tree -> maps is also the identity on valid maps
    c = Constraints(ctu_size=16)
    for tree in list(enumerate_partitions(c))[::97]:
        maps = maps_from_tree(tree, c)
        assert maps_from_tree(tree_from_maps(maps, c), c) == maps


def test_corrupted_mt_cell_rejected():
    c = Constraints(ctu_size=64)
    geom = root_geom(c)
    kids = apply_split(geom, SplitType.HBT, c)
    tree = PartitionTree(geom, SplitType.HBT, tuple(PartitionTree(k, SplitType.NS) for k in kids))
    maps = maps_from_tree(tree, c)
    bad_mt = maps.mt.copy()
    bad_mt[0, 3, 3] = MT_LABEL_OF_SPLIT[SplitType.VBT]  # differs within the CU
    with pytest.raises(MapEncodingError, match="invalid map encoding"):
        tree_from_maps(LabelMaps(qt=maps.qt, mt=bad_mt), c)


def test_error_names_offending_rect():
    c = Constraints(ctu_size=64)
    qt = np.zeros((8, 8), dtype=np.uint8)
    qt[0, 0] = 1  # one cell of the root quadrant deeper, rest at 0
    maps = LabelMaps(qt=qt, mt=np.full((3, 16, 16), NS_LABEL, dtype=np.uint8))
    with pytest.raises(MapEncodingError, match=r"CU\(x=0, y=0, w=64, h=64\)"):
        tree_from_maps(maps, c)
    ok, diag = validate_maps(maps, c)
    assert not ok and "CU(" in diag


def test_validate_rejects_bad_quadtree_nesting():
    c = Constraints()
    qt = np.zeros((16, 16), dtype=np.uint8)
    qt[:8, :8] = 1
    qt[0, 0] = 0  # quadrant neither uniform at 0 nor uniformly deeper
    maps = LabelMaps(qt=qt, mt=np.full((3, 32, 32), NS_LABEL, dtype=np.uint8))
    ok, _ = validate_maps(maps, c)
    assert not ok


def test_validate_rejects_illegal_implied_split():
    # HTT on an 8-tall CU: split dimension below 4*min_cu_dim
    c = Constraints()
    qt = np.full((16, 16), 4, dtype=np.uint8)  # all 8x8 CUs at qt depth 4
    mt = np.full((3, 32, 32), NS_LABEL, dtype=np.uint8)
    mt[0, 0:2, 0:2] = MT_LABEL_OF_SPLIT[SplitType.HTT]
    maps = LabelMaps(qt=qt, mt=mt)
    ok, diag = validate_maps(maps, c)
    assert not ok and "HTT" in diag


def test_validate_rejects_stale_deep_labels():
    # NS at MT0 but a non-NS label hiding at MT1: decoder never reads it,
    # the re-encode comparison must catch it.
    c = Constraints()
    mt = np.full((3, 32, 32), NS_LABEL, dtype=np.uint8)
    mt[1, 5, 5] = MT_LABEL_OF_SPLIT[SplitType.HBT]
    maps = LabelMaps(qt=np.zeros((16, 16), dtype=np.uint8), mt=mt)
    ok, diag = validate_maps(maps, c)
    assert not ok and "stale" in diag


def test_validate_accepts_encoder_output():
    c = Constraints(ctu_size=16)
    for tree in list(enumerate_partitions(c))[::513]:
        ok, diag = validate_maps(maps_from_tree(tree, c), c)
        assert ok, diag


def test_dimension_mismatch_raises():
    c = Constraints()
    maps = LabelMaps(
        qt=np.zeros((8, 8), dtype=np.uint8),
        mt=np.full((3, 16, 16), NS_LABEL, dtype=np.uint8),
    )
    with pytest.raises(MapEncodingError, match="dimensions"):
        validate_maps(maps, c)
