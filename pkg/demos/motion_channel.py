"""Residual motion on a textured scene where one block moves and the camera pans.

Writes prev/cur frames and the motion channel as PGM images.
"""
import argparse
from pathlib import Path

import numpy as np

from salnet import io
from salnet.motion import estimate_global_affine, estimate_optical_flow, residual_motion
from salnet.synthetic import moving_block_pair

ap = argparse.ArgumentParser()
ap.add_argument("out", type=Path, nargs="?", default=Path("motion_demo"))
ap.add_argument("--pan", type=int, default=1, help="camera pan in pixels between the two frames")
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

rng = np.random.default_rng(args.seed)
# a camera pan is a shifted crop window over a larger scene
# block matching works on 8x8 tiles, so keep the block on the tile grid of the cropped frame
big_prev, big_cur, big_mask = moving_block_pair(rng, (3, 1), size=80, block=8, corner=(40 + args.pan, 40))
prev = big_prev[8:72, 8:72]
cur = big_cur[8:72, 8 + args.pan:72 + args.pan]
mask = big_mask[8:72, 8 + args.pan:72 + args.pan]

flow = estimate_optical_flow(prev, cur)
camera = estimate_global_affine(flow)
res = residual_motion(flow, camera)
print("global affine a1..a6:", np.round(camera.params, 3))
print(f"residual inside block >= {res.magnitude[mask].min():.2f}, outside <= {res.magnitude[~mask].max():.2f}")

args.out.mkdir(parents=True, exist_ok=True)
io.write_pgm(prev.mean(axis=2), args.out / "prev.pgm")
io.write_pgm(cur.mean(axis=2), args.out / "cur.pgm")
io.write_pgm(res.magnitude, args.out / "residual.pgm")
print("wrote", *sorted(p.name for p in args.out.iterdir()))
