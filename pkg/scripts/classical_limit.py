"""Quantum conformal factor approaching the classical one as hbar -> 0."""

import argparse

import numpy as np

from kklab import reduction as R
from kklab.config import ScenarioConfig
from kklab.geometry import FieldBundle, minkowski


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--method", choices=("fd2", "spectral"), default="spectral")
    ap.add_argument("--n-x", type=int, default=128)
    args = ap.parse_args()
    fields = FieldBundle(2, lambda p: 1 + 0.2 * np.sin(p[1]), lambda p: np.zeros(2), lambda p: minkowski(2))
    prev = None
    print(f"{'hbar':>7} {'error':>10} {'order':>6} {'newton':>6}")
    for hb in (0.2, 0.1, 0.05, 0.025, 0.0125):
        cfg = ScenarioConfig(hbar=hb, base_dim=2)
        prof = R.solve_alpha(fields, cfg, 0.7, 1.0, n_x=args.n_x, method=args.method)
        err = np.max(np.abs(prof.omega() - np.sqrt(1 + 0.49 / prof.lattice.a ** 2)))
        order = "" if prev is None else f"{np.log2(prev / err):6.3f}"
        print(f"{hb:7.4f} {err:10.3e} {order:>6} {prof.iterations:6d}")
        prev = err


if __name__ == "__main__":
    main()
