"""Compare the compiled kernels with the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import math
import timeit

import numpy as np

from lifisim import _kernels
from lifisim.channel import partition_surfaces
from lifisim.geometry import build_scene


def cases():
    scene = build_scene("walking", (-0.33, 1.55), math.radians(-90))
    els = partition_surfaces(scene, 2)
    box = scene.body.box_params()
    order = np.ones(len(els))
    rng = np.random.default_rng(0)
    p = rng.uniform([-2.5, -1.75, 0], [2.5, 1.75, 3], size=(200_000, 3))
    q = rng.uniform([-2.5, -1.75, 0], [2.5, 1.75, 3], size=(200_000, 3))
    t = np.cumsum(rng.choice([0.001, 0.018, 0.064], size=3000))
    y = rng.normal(size=3000)
    return {
        f"pair_gains ({len(els)}x{len(els)} elements, body box)":
            lambda k: k.pair_gains(els.centers, els.normals, order, els.centers, els.normals,
                                   els.areas, 0.0, box),
        "segments_blocked (200k segments)": lambda k: k.segments_blocked(p, q, box),
        "trig_sums (3000 samples x 2000 freqs)":
            lambda k: k.trig_sums(t - t[0], y, 0.01, 0.01, 2000),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels.python)]
    if _kernels.compiled is not None:
        backends.insert(0, ("compiled", _kernels.compiled))
    else:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':48s} " + " ".join(f"{n:>12s}" for n, _ in backends) + "   speedup")
    for name, fn in cases().items():
        times = []
        for _, mod in backends:
            fn(mod)  # warm up
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        cells = " ".join(f"{1e3 * t:10.2f}ms" for t in times)
        speed = f"{times[-1] / times[0]:8.1f}x" if len(times) > 1 else ""
        print(f"{name:48s} {cells} {speed}")


if __name__ == "__main__":
    main()
