#!/usr/bin/env python3
"""Generate the small synthetic y4m clips used by the experiments.

Three kinds: static (repeated texture), shift (edge-replicated global pan,
so every block's true vector is the shift), and split-motion (left half
pans, right half static, plus light noise) as textured content with a
motion boundary.
"""

import argparse
from pathlib import Path

import numpy as np

from qtmt.motion import Frame, write_y4m


def texture(rng, height, width, scale=4):
    """Piecewise-smooth texture: coarse random grid upsampled + fine noise."""
    coarse = rng.integers(30, 226, (height // scale + 1, width // scale + 1))
    up = np.kron(coarse, np.ones((scale, scale)))[:height, :width]
    return (up + rng.integers(-12, 13, (height, width))).clip(0, 255).astype(np.uint8)


def shifted(plane, sx, sy):
    ys = np.clip(np.arange(plane.shape[0]) + sy, 0, plane.shape[0] - 1)
    xs = np.clip(np.arange(plane.shape[1]) + sx, 0, plane.shape[1] - 1)
    return plane[np.ix_(ys, xs)]


def static_clip(rng, n, width, height):
    base = texture(rng, height, width)
    return [Frame(luma=base.copy(), poc=t) for t in range(n)]


def shift_clip(rng, n, width, height, sx=3, sy=1):
    frames = [Frame(luma=texture(rng, height, width), poc=0)]
    for t in range(1, n):
        frames.append(Frame(luma=shifted(frames[-1].luma, sx, sy).copy(), poc=t))
    return frames


def split_motion_clip(rng, n, width, height, sx=2, sy=1):
    """Lower-left triangle pans, the rest stays; the diagonal motion boundary
    cannot be separated by any single split, forcing recursive partitioning."""
    yy, xx = np.mgrid[0:height, 0:width]
    mask = yy * width > xx * height
    frames = [Frame(luma=texture(rng, height, width, scale=3), poc=0)]
    for t in range(1, n):
        prev = frames[-1].luma
        cur = np.where(mask, shifted(prev, sx, sy), prev)
        noise = rng.integers(-2, 3, cur.shape)
        frames.append(Frame(luma=(cur + noise).clip(0, 255).astype(np.uint8), poc=t))
    return frames


MAKERS = {"static": static_clip, "shift": shift_clip, "split": split_motion_clip}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="clips", help="output directory")
    ap.add_argument("--frames", type=int, default=4)
    ap.add_argument("--width", type=int, default=320)
    ap.add_argument("--height", type=int, default=192)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kinds", default="static,shift,split")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in args.kinds.split(","):
        rng = np.random.default_rng(args.seed)
        frames = MAKERS[kind](rng, args.frames, args.width, args.height)
        path = out / f"{kind}_{args.width}x{args.height}_{args.frames}f.y4m"
        write_y4m(path, frames)
        print(path)


if __name__ == "__main__":
    main()
