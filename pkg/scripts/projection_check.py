"""Project a bundle geodesic and compare it with the Lorentz-force curve.

    python scripts/projection_check.py [--span 10] [--r 0.7] [--amp 0.2] [--E 0.1]
"""

import argparse
import time

import numpy as np

from kklab.config import ScenarioConfig
from kklab.geometry import BundleMetric, FieldBundle, minkowski
from kklab.projection import compare_with_lorentz, geodesic_to_tr, project_and_reparametrize


def sinusoidal(amp, E):
    eta = minkowski(4)
    return FieldBundle(
        4,
        lambda x: 1 + amp * np.sin(x[1]),
        lambda x: np.array([E * x[1], 0, 0, 0]),
        lambda x: eta,
        lambda x: np.array([0, amp * np.cos(x[1]), 0, 0]),
        lambda x: np.array([[0, 0, 0, 0], [E, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=float),
        lambda x: np.zeros((4, 4, 4)),
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--span", type=float, default=10.0)
    ap.add_argument("--r", type=float, default=0.7)
    ap.add_argument("--amp", type=float, default=0.2)
    ap.add_argument("--E", type=float, default=0.1)
    args = ap.parse_args()

    cfg = ScenarioConfig(base_dim=4)
    fields = sinusoidal(args.amp, args.E)
    bm = BundleMetric(fields, cfg)
    print(f"{'tol':>8} {'position':>10} {'velocity':>10} {'seconds':>8}")
    for tol in (1e-6, 1e-8, 1e-10):
        t0 = time.perf_counter()
        geo = geodesic_to_tr(bm, np.zeros(4), [1.0, 0.3, 0.1, 0.0], args.r, args.span, tol=tol)
        pr = project_and_reparametrize(geo, bm, tr_grid=np.linspace(0, args.span, 201))
        rep = compare_with_lorentz(pr, fields, cfg, tol=tol)
        print(f"{tol:8.0e} {rep.position:10.2e} {rep.velocity:10.2e} {time.perf_counter() - t0:8.2f}")


if __name__ == "__main__":
    main()
