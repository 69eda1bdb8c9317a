"""CU geometry, split types, split legality, and partition trees.

A partition of a CTU is a recursive tree of splits.  Quadtree (QT) splits
come first on any root-to-leaf path; once a multi-type (MT) split has been
applied, QT is no longer available below it.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator

from .errors import GeometryError


class SplitType(enum.IntEnum):
    """The six split decisions.  Enum order is the canonical evaluation order."""

    NS = 0   # no split (terminal)
    QT = 1   # quadtree split into 4 quadrants
    HBT = 2  # horizontal binary split (two stacked halves)
    VBT = 3  # vertical binary split (two side-by-side halves)
    HTT = 4  # horizontal ternary split (1:2:1, stacked)
    VTT = 5  # vertical ternary split (1:2:1, side by side)


#: MT splits in the order Algorithm-style candidate lists append them.
MT_SPLITS = (SplitType.HBT, SplitType.VBT, SplitType.HTT, SplitType.VTT)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Constraints:
    """Partitioning limits.  Defaults follow VTM-style values for a 128 CTU;
    max_mt_cu_dim defaults to min(64, ctu_size)."""

    ctu_size: int = 128
    max_qt_depth: int = 4
    max_mt_depth: int = 3
    min_cu_dim: int = 4
    max_mt_cu_dim: int | None = None
    min_qt_leaf_dim: int = 8

    def __post_init__(self):
        if self.max_mt_cu_dim is None:
            object.__setattr__(self, "max_mt_cu_dim", min(64, self.ctu_size))
        for name in ("ctu_size", "min_cu_dim", "max_mt_cu_dim", "min_qt_leaf_dim"):
            if not _is_pow2(getattr(self, name)):
                raise GeometryError(f"constraint {name} must be a positive power of two")
        if not (self.min_cu_dim <= self.min_qt_leaf_dim <= self.max_mt_cu_dim <= self.ctu_size):
            raise GeometryError(
                "constraints must satisfy min_cu_dim <= min_qt_leaf_dim "
                "<= max_mt_cu_dim <= ctu_size"
            )
        if not (0 <= self.max_qt_depth <= 4) or not (0 <= self.max_mt_depth <= 3):
            raise GeometryError(
                "depth limits outside the representable range (QT <= 4, MT <= 3)"
            )


@dataclass(frozen=True)
class CuGeom:
    """A CU rectangle inside its CTU, with its position in the split hierarchy.

    x/y are pixel offsets relative to the CTU origin.  after_mt is True iff
    any ancestor split was an MT split.
    """

    x: int
    y: int
    width: int
    height: int
    qt_depth: int = 0
    mt_depth: int = 0
    after_mt: bool = False

    @property
    def area(self) -> int:
        return self.width * self.height


def validate_geom(geom: CuGeom, c: Constraints) -> None:
    """Raise GeometryError unless geom satisfies the CuGeom invariants under c."""
    ok = (
        _is_pow2(geom.width)
        and _is_pow2(geom.height)
        and c.min_cu_dim <= geom.width <= c.ctu_size
        and c.min_cu_dim <= geom.height <= c.ctu_size
        and geom.x >= 0
        and geom.y >= 0
        and geom.x + geom.width <= c.ctu_size
        and geom.y + geom.height <= c.ctu_size
        and 0 <= geom.qt_depth <= c.max_qt_depth
        and 0 <= geom.mt_depth <= c.max_mt_depth
        and (not geom.after_mt or geom.mt_depth >= 1)
    )
    if not ok:
        raise GeometryError(f"illegal CU geometry: {geom}")


def legal_splits(geom: CuGeom, c: Constraints) -> tuple[SplitType, ...]:
    """Split types available for geom, in canonical order.  NS is always first.

    QT: square CU, width >= 2*min_qt_leaf_dim, depth budget left, and not
    below an MT split.  BT: both dims <= max_mt_cu_dim, MT depth budget left,
    and the split dimension can be halved.  TT: same but the split dimension
    must support the 1:2:1 layout (>= 4*min_cu_dim).
    """
    validate_geom(geom, c)
    out = [SplitType.NS]
    if (
        geom.width == geom.height
        and geom.width >= 2 * c.min_qt_leaf_dim
        and geom.qt_depth < c.max_qt_depth
        and not geom.after_mt
    ):
        out.append(SplitType.QT)
    mt_ok = (
        geom.mt_depth < c.max_mt_depth
        and geom.width <= c.max_mt_cu_dim
        and geom.height <= c.max_mt_cu_dim
    )
    if mt_ok:
        if geom.height >= 2 * c.min_cu_dim:
            out.append(SplitType.HBT)
        if geom.width >= 2 * c.min_cu_dim:
            out.append(SplitType.VBT)
        if geom.height >= 4 * c.min_cu_dim:
            out.append(SplitType.HTT)
        if geom.width >= 4 * c.min_cu_dim:
            out.append(SplitType.VTT)
    out.sort(key=int)
    return tuple(out)


def apply_split(geom: CuGeom, s: SplitType, c: Constraints) -> tuple[CuGeom, ...]:
    """Children of geom under split s, in raster order."""
    if s == SplitType.NS or s not in legal_splits(geom, c):
        raise GeometryError(f"split not available: {s.name} on {geom}")
    x, y, w, h = geom.x, geom.y, geom.width, geom.height
    if s == SplitType.QT:
        d = geom.qt_depth + 1
        hw, hh = w // 2, h // 2
        return tuple(
            CuGeom(x + dx, y + dy, hw, hh, d, geom.mt_depth, geom.after_mt)
            for dy in (0, hh)
            for dx in (0, hw)
        )
    d = geom.mt_depth + 1
    q = geom.qt_depth
    if s == SplitType.HBT:
        hh = h // 2
        rows = ((y, hh), (y + hh, hh))
        return tuple(CuGeom(x, ry, w, rh, q, d, True) for ry, rh in rows)
    if s == SplitType.VBT:
        hw = w // 2
        cols = ((x, hw), (x + hw, hw))
        return tuple(CuGeom(cx, y, cw, h, q, d, True) for cx, cw in cols)
    if s == SplitType.HTT:
        qh = h // 4
        rows = ((y, qh), (y + qh, 2 * qh), (y + 3 * qh, qh))
        return tuple(CuGeom(x, ry, w, rh, q, d, True) for ry, rh in rows)
    qw = w // 4
    cols = ((x, qw), (x + qw, 2 * qw), (x + 3 * qw, qw))
    return tuple(CuGeom(cx, y, cw, h, q, d, True) for cx, cw in cols)


@dataclass(frozen=True)
class PartitionTree:
    """One node of a partition: a CU, its decision, and its subtrees."""

    geom: CuGeom
    split: SplitType
    children: tuple[PartitionTree, ...] = ()

    def iter_nodes(self) -> Iterator[PartitionTree]:
        yield self
        for ch in self.children:
            yield from ch.iter_nodes()

    def leaves(self) -> Iterator[PartitionTree]:
        for node in self.iter_nodes():
            if node.split == SplitType.NS:
                yield node

    def num_nodes(self) -> int:
        return sum(1 for _ in self.iter_nodes())


#: A partition path is the ordered sequence of decisions from the CTU root
#: down to (and including) a CU's own decision.
PartitionPath = tuple[SplitType, ...]


def leaf_paths(tree: PartitionTree) -> Iterator[tuple[CuGeom, PartitionPath]]:
    """Yield (leaf geometry, partition path ending in NS) for every leaf."""

    def walk(node, prefix):
        path = prefix + (node.split,)
        if node.split == SplitType.NS:
            yield node.geom, path
        else:
            for ch in node.children:
                yield from walk(ch, path)

    yield from walk(tree, ())


def root_geom(c: Constraints) -> CuGeom:
    return CuGeom(0, 0, c.ctu_size, c.ctu_size)


def validate_tree(tree: PartitionTree, c: Constraints) -> None:
    """Raise GeometryError unless tree satisfies all PartitionTree invariants."""
    expected_children = {SplitType.QT: 4, SplitType.HBT: 2, SplitType.VBT: 2,
                         SplitType.HTT: 3, SplitType.VTT: 3}

    def walk(node):
        validate_geom(node.geom, c)
        if node.split == SplitType.NS:
            if node.children:
                raise GeometryError("NS node with children")
            return
        if node.split not in legal_splits(node.geom, c):
            raise GeometryError(f"split not available: {node.split.name} on {node.geom}")
        if len(node.children) != expected_children[node.split]:
            raise GeometryError(f"{node.split.name} node with {len(node.children)} children")
        geoms = apply_split(node.geom, node.split, c)
        for ch, g in zip(node.children, geoms):
            if ch.geom != g:
                raise GeometryError(f"child geometry {ch.geom} does not tile parent as {g}")
            walk(ch)

    walk(tree)
    # no QT below MT is implied: apply_split never offers QT once after_mt is set,
    # and legal_splits rejects it, so the walk above already enforces it.


def enumerate_partitions(c: Constraints) -> Iterator[PartitionTree]:
    """Yield every legal partition tree exactly once, in deterministic order.

    Guarded to small CTUs; the tree count explodes beyond 32.
    """
    if c.ctu_size > 32:
        raise GeometryError(f"enumeration too large: ctu_size {c.ctu_size} > 32")

    def gen(geom):
        yield PartitionTree(geom, SplitType.NS)
        for s in legal_splits(geom, c):
            if s == SplitType.NS:
                continue
            child_geoms = apply_split(geom, s, c)
            pools = [list(gen(g)) for g in child_geoms]
            for combo in itertools.product(*pools):
                yield PartitionTree(geom, s, tuple(combo))

    yield from gen(root_geom(c))


def random_tree(rng, c: Constraints, stop_base: float = 0.5, stop_ramp: float = 0.15) -> PartitionTree:
    """Sample a random legal partition tree (rng: numpy Generator).

    The NS probability grows with depth to keep expected tree size finite.
    """

    def grow(geom):
        opts = legal_splits(geom, c)
        depth = geom.qt_depth + geom.mt_depth
        p_stop = min(0.97, stop_base + stop_ramp * depth)
        splits = [s for s in opts if s != SplitType.NS]
        if not splits or rng.random() < p_stop:
            return PartitionTree(geom, SplitType.NS)
        s = splits[rng.integers(len(splits))]
        children = tuple(grow(g) for g in apply_split(geom, s, c))
        return PartitionTree(geom, s, children)

    return grow(root_geom(c))
