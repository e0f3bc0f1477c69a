"""Spacelike bundle curves (epsilon = -1) on a = 1 + kappa t: boundary parameter vs quadrature."""

import numpy as np
from scipy.integrate import quad

from kklab.config import ScenarioConfig
from kklab.geometry import BundleMetric, FieldBundle, minkowski
from kklab.projection import bundle_velocity, geodesic_to_tr


def ramp(kappa):
    return FieldBundle(2, lambda x: 1.0 + kappa * x[0], lambda x: np.zeros(2), lambda x: minkowski(2),
                       lambda x: np.array([kappa, 0.0]), lambda x: np.zeros((2, 2)), lambda x: np.zeros((2, 2, 2)))


def main():
    cfg = ScenarioConfig(base_dim=2, epsilon=-1)
    print(f"{'kappa':>6} {'r':>5} {'vx':>5} {'s_event':>14} {'s_oracle':>14} {'error':>9}")
    for kappa, r, vx in [(0.3, 2.0, 0.2), (0.5, 1.6, -0.4), (0.2, 3.0, 0.6), (1.0, 1.2, 0.0)]:
        bm = BundleMetric(ramp(kappa), cfg)
        v0 = bundle_velocity(bm, np.zeros(2), [1.0, vx], r)
        geo = geodesic_to_tr(bm, np.zeros(2), [1.0, vx], r, 100.0)
        p = v0[1]
        oracle, _ = quad(lambda t: 1 / np.sqrt(p * p - 1 + r * r / (1 + kappa * t) ** 2), 0, (r - 1) / kappa,
                         epsabs=1e-13, epsrel=1e-13)
        s = geo.event["param"]
        print(f"{kappa:6.2f} {r:5.2f} {vx:5.2f} {s:14.10f} {oracle:14.10f} {abs(s - oracle):9.1e}")


if __name__ == "__main__":
    main()
