"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each kernel is timed on the same inputs under every importable backend, and
a full 100 tracks x 100 detections association step is timed in a fresh
interpreter per backend (the backend is chosen once, at import).
"""
import argparse
import json
import os
import statistics
import subprocess
import sys
import timeit

import numpy as np

from pointtrack._backend import available_backends

STEP_SNIPPET = """
import statistics, time
import numpy as np
from pointtrack._backend import BACKEND
from pointtrack.association import TrackerConfig, TrackerState, step
from pointtrack.geometry import BBox, Detection, Track
rng = np.random.default_rng(0)
g = np.stack(np.meshgrid(np.arange(10) * 150 + 100, np.arange(10) * 90 + 60), -1).reshape(-1, 2)
tracks = tuple(Track(i + 1, BBox(float(x), float(y), 40, 60), 0.9) for i, (x, y) in enumerate(g))
moved = g + rng.normal(0, 5, g.shape)
dets = [Detection(BBox(x, y, 40, 60), float(c), (float(x - px), float(y - py)))
        for (x, y), (px, py), c in zip(moved, g, rng.uniform(0.5, 1.0, 100))]
state, cfg = TrackerState(tracks, 101, 1), TrackerConfig()
ts = []
for _ in range({n}):
    t0 = time.perf_counter()
    step(state, dets, cfg, frame=2)
    ts.append(time.perf_counter() - t0)
print(BACKEND, statistics.median(ts[10:]))
"""


def kernel_cases(rng):
    n = 100
    cost = rng.uniform(0, 50, (n, n))
    gate = rng.uniform(0, 30, (n, n))
    centers = rng.uniform(0, 240, (64, 2))
    sigmas = rng.uniform(0.5, 4.0, 64)
    noise = rng.random((136, 240))
    # a realistic detector output: mostly background with a few bumps
    hm = available_backends()["python"].render_max(centers, sigmas, 240, 136) * 0.9 + 0.05 * noise
    boxes_a = np.column_stack([rng.uniform(0, 500, (n, 2)), rng.uniform(10, 80, (n, 2))])
    boxes_b = np.column_stack([rng.uniform(0, 500, (n, 2)), rng.uniform(10, 80, (n, 2))])
    pts = [rng.uniform(0, 500, n) for _ in range(2)] + [rng.uniform(10, 80, n)]
    return {
        "greedy_assign 100x100": lambda k: k.greedy_assign(cost, gate),
        "render_max 64 pts 240x136": lambda k: k.render_max(centers, sigmas, 240, 136),
        "peak_mask heatmap 240x136": lambda k: k.peak_mask(hm, 0.4),
        "peak_mask noise 240x136": lambda k: k.peak_mask(noise, 0.4),
        "iou_matrix 100x100": lambda k: k.iou_matrix(boxes_a, boxes_b),
        "point_costs 100x100": lambda k: k.point_costs(*pts, *pts),
    }


def time_kernels(repeat):
    backends = available_backends()
    results = {}
    for name, fn in kernel_cases(np.random.default_rng(0)).items():
        row = {}
        for b, mod in backends.items():
            number = max(1, repeat // 10)
            row[b] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=10)) / number
        results[name] = row
    return results


def time_step(repeat):
    out = {}
    for b in available_backends():
        env = dict(os.environ, POINTTRACK_BACKEND=b)
        proc = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(n=repeat + 10)],
                              env=env, capture_output=True, text=True, check=True)
        name, secs = proc.stdout.split()
        out[name] = float(secs)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200, help="calls per timing sample")
    p.add_argument("--json", help="also write the results here")
    args = p.parse_args(argv)
    results = time_kernels(args.repeat)
    results["association step 100x100"] = time_step(args.repeat)
    backends = list(available_backends())
    print(f"{'case':<28}" + "".join(f"{b + ' (ms)':>14}" for b in backends) + f"{'speedup':>10}")
    for name, row in results.items():
        cells = "".join(f"{row[b] * 1e3:>14.4f}" if b in row else f"{'-':>14}" for b in backends)
        speed = (f"{row['python'] / row['cython']:>9.1f}x"
                 if "cython" in row and "python" in row else f"{'-':>10}")
        print(f"{name:<28}{cells}{speed}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
