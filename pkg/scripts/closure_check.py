"""Run the camera-to-world pipeline on synthetic scenes and report closure error.

    python scripts/closure_check.py --seeds 20 --size 64 --frames 8
"""

import argparse
import time

import numpy as np

from geomotion.flowops import deform
from geomotion.pipeline import preprocess
from geomotion.synth import SceneConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--frames", type=int, default=8)
    args = ap.parse_args()

    print(f"{'seed':>4} {'points':>10} {'flows':>10} {'deform':>10} {'ms':>7}")
    for seed in range(args.seeds):
        scene = generate(SceneConfig.random(seed, height=args.size, width=args.size, frames=args.frames))
        t0 = time.perf_counter()
        out = preprocess(scene.camera, use_deformability=False)
        ms = 1e3 * (time.perf_counter() - t0)
        e_pts = max(np.abs(a.data - b.data).max() for a, b in zip(out.point_maps, scene.world.point_maps))
        e_flow = max(np.abs(a.data - b.data).max() for a, b in zip(out.flows, scene.world.flows))
        e_def = max(np.abs(deform(p, f).data - nxt).max()
                    for p, f, nxt in zip(out.point_maps, out.flows, scene.next_world))
        print(f"{seed:4d} {e_pts:10.2e} {e_flow:10.2e} {e_def:10.2e} {ms:7.1f}")


if __name__ == "__main__":
    main()
