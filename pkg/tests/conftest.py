"""Shared helpers: synthetic content and reference pairs."""

import numpy as np
import pytest

from qtmt.motion import Frame, RefPair


def texture(rng, height, width, scale=3, noise=12):
    coarse = rng.integers(30, 226, (height // scale + 1, width // scale + 1))
    up = np.kron(coarse, np.ones((scale, scale)))[:height, :width]
    return (up + rng.integers(-noise, noise + 1, (height, width))).clip(0, 255).astype(np.uint8)


def shifted(plane, sx, sy):
    """Edge-replicated shift: out[y, x] = plane[clip(y+sy), clip(x+sx)]."""
    ys = np.clip(np.arange(plane.shape[0]) + sy, 0, plane.shape[0] - 1)
    xs = np.clip(np.arange(plane.shape[1]) + sx, 0, plane.shape[1] - 1)
    return plane[np.ix_(ys, xs)]


def static_frames(rng, n, width, height):
    base = texture(rng, height, width)
    return [Frame(luma=base.copy(), poc=t) for t in range(n)]


def pan_frames(rng, n, width, height, sx=3, sy=1):
    frames = [Frame(luma=texture(rng, height, width), poc=0)]
    for t in range(1, n):
        frames.append(Frame(luma=shifted(frames[-1].luma, sx, sy).copy(), poc=t))
    return frames


def wedge_frames(rng, n, width, height, sx=2, sy=1, noise=2):
    """Diagonal motion boundary: lower-left triangle pans, rest static."""
    yy, xx = np.mgrid[0:height, 0:width]
    mask = yy * width > xx * height
    frames = [Frame(luma=texture(rng, height, width), poc=0)]
    for t in range(1, n):
        prev = frames[-1].luma
        cur = np.where(mask, shifted(prev, sx, sy), prev)
        cur = (cur + rng.integers(-noise, noise + 1, cur.shape)).clip(0, 255).astype(np.uint8)
        frames.append(Frame(luma=cur, poc=t))
    return frames


def prev_refs(frames, poc):
    return RefPair(l0=frames[poc - 1], l1=frames[poc - 1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
