"""Time rasterization and flow composition on the 6890-vertex stand-in mesh.

    python3 scripts/benchmark.py --size 512 --repeats 5
"""

import argparse
import time

import numpy as np

from liquidwarp.body_model import BodyParams, CameraWP, project, skin, smpl_sized_model
from liquidwarp.flow import compose_flow
from liquidwarp.rasterizer import configure_threads, face_tris, rasterize


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    threads = configure_threads()
    model = smpl_sized_model()
    rng = np.random.default_rng(args.seed)
    cam = CameraWP(0.9)
    tris = []
    for _ in range(2):
        theta = rng.uniform(-0.2, 0.2, 3 * model.n_joints)
        tris.append(face_tris(project(skin(model, theta, np.zeros(model.n_betas)), cam), model.faces))

    t0 = time.perf_counter()
    rasterize(tris[0], 64, 64)
    print(f"first call (JIT or cache load): {time.perf_counter() - t0:.2f} s")

    n = args.size
    t_r, src_maps = best_of(lambda: rasterize(tris[0], n, n), args.repeats)
    tgt_maps = rasterize(tris[1], n, n)
    t_f, tf = best_of(lambda: compose_flow(src_maps, tris[0], tgt_maps), args.repeats)
    print(f"threads={threads} faces={model.n_faces} size={n}x{n}")
    print(f"rasterize    {t_r * 1e3:8.1f} ms  ({src_maps.silhouette.mean():.1%} coverage)")
    print(f"compose_flow {t_f * 1e3:8.1f} ms  ({tf.valid.sum()} valid pixels)")


if __name__ == "__main__":
    main()
