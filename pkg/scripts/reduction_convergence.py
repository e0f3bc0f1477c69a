"""Evolve a scalar field on the bundle lattice, split it into fiber modes and
measure each mode's residual in the base equation on three grids.

    python scripts/reduction_convergence.py [--hbar 0.35] [--curved]
"""

import argparse
import time

import numpy as np

from kklab import reduction as R
from kklab.config import ScenarioConfig
from kklab.geometry import FieldBundle, minkowski


def fields(curved):
    def g0(p):
        g = minkowski(2)
        if curved:
            g[0, 0] = 1 + 0.1 * np.cos(p[1])
            g[1, 1] = -(1 + 0.2 * np.sin(p[1]) ** 2)
        return g

    return FieldBundle(2, lambda p: 1 + 0.2 * np.sin(p[1]),
                       lambda p: np.array([0.3 * np.cos(p[1]), 0.1 + 0.2 * np.sin(2 * p[1])]), g0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hbar", type=float, default=0.35)
    ap.add_argument("--curved", action="store_true")
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()
    cfg = ScenarioConfig(hbar=args.hbar, base_dim=2)
    fb = fields(args.curved)
    modes = (0, 1, -1, 2)
    prev = {}
    t0 = time.perf_counter()
    print(f"{'n_x':>5} {'n':>3} {'residual':>10} {'ratio':>6}")
    for level in range(args.levels):
        lat = R.sample_static(fb, 32 * 2 ** level)
        ny = 8
        y = 2 * np.pi * np.arange(ny) / ny
        X, Y = np.meshgrid(lat.x, y, indexing="ij")
        psi0 = sum(np.exp(np.cos(X + n)) * np.exp(1j * n * Y) for n in modes)
        steps = int(round(1 / (0.25 * lat.h)))
        g = R.ModeGrid.initial(lat, ny, 1 / steps, 1.0, psi0, 0.3j * np.cos(X) * psi0, cfg=cfg)
        spec = R.fourier_decompose(R.evolve_kg_bundle(g, None, cfg, steps), cfg)
        for n in modes:
            mode = spec.mode(n)
            prof = R.solve_alpha(None, cfg, mode.q, 1.0, lattice=lat)
            res = R.mode_kg_residual(mode, prof, None, cfg)
            ratio = f"{prev[n] / res:6.3f}" if n in prev else ""
            prev[n] = res
            print(f"{lat.n:5d} {n:3d} {res:10.3e} {ratio:>6}")
    print(f"{time.perf_counter() - t0:.2f} s")


if __name__ == "__main__":
    main()
