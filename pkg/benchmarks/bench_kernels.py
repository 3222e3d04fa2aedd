"""Time the compiled kernels against the numpy fallback.

Run ``python3 benchmarks/bench_kernels.py``; prints one row per kernel with
the median wall time of each backend and the speed-up.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from qfreq.fields import Mesh
from qfreq.frequency import model_trace
from qfreq.kernels import available_backends, get_backend
from qfreq.minimize import BoundaryTrace, SolveParams, solve
from qfreq.qspace import canonical_arrays
from qfreq.whitney import bump_current


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(n_mesh: int):
    m = Mesh.disk(n_mesh)
    rng = np.random.default_rng(0)
    v, s = canonical_arrays(rng.normal(size=(m.n_nodes, 2)), rng.choice([-1, 1], m.n_nodes))
    v, s = np.ascontiguousarray(v), np.ascontiguousarray(s)
    nbr = np.ascontiguousarray(m.neighbors)
    nodes = np.ascontiguousarray(np.nonzero((m.color == 0) & ~m.boundary)[0].astype(np.int64))
    ea, eb = (np.ascontiguousarray(m.edges[:, k]) for k in (0, 1))

    cur = bump_current()
    pts = rng.uniform(-0.6, 0.6, size=(400, 2))
    px, py = np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])
    pz = np.zeros(400)
    z, gx, gy = (np.ascontiguousarray(a) for a in (cur.heights, cur.gx, cur.gy))
    m65 = Mesh.disk(65)
    tr = BoundaryTrace.from_angular(m65, model_trace)

    def relax(k):
        return lambda: k.relax_nodes(v.copy(), s.copy(), nbr, nodes, 1e-12)

    def energy(k):
        return lambda: k.edge_energy(v, s, ea, eb)

    def moments(k):
        return lambda: k.ball_moments(px, py, pz, z, gx, gy, -4.0, -4.0, cur.h, 0.35, np.zeros((400, 7)))

    def sweep_solve(name):
        return lambda: solve(tr, m65, SolveParams(), backend=name)

    return [
        (f"relax_nodes (disk {n_mesh})", relax, False),
        (f"edge_energy (disk {n_mesh})", energy, False),
        ("ball_moments (400 balls)", moments, False),
        ("solve (disk 65)", sweep_solve, True),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mesh", type=int, default=129)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = available_backends()
    print(f"backends: {', '.join(names)}")
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in names) + ("     speed-up" if len(names) > 1 else ""))
    for label, make, by_name in cases(args.mesh):
        t = {n: _median_time(make(n if by_name else get_backend(n)), args.repeat) for n in names}
        row = f"{label:32s}" + "".join(f"{t[n]:11.4f}s" for n in names)
        if len(names) > 1:
            row += f"{t['python'] / t['compiled']:12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
