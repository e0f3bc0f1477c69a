"""Per-step clock ratios dt_r/dt_0 along a projected geodesic, against sqrt(1 + r^2/(beta a)^2)."""

import numpy as np

from kklab.config import ScenarioConfig
from kklab.geometry import BundleMetric
from kklab.projection import clock_table, geodesic_to_tr
from projection_check import sinusoidal


def main():
    cfg = ScenarioConfig(base_dim=4)
    bm = BundleMetric(sinusoidal(0.2, 0.1), cfg)
    geo = geodesic_to_tr(bm, np.zeros(4), [1.0, 0.3, 0.1, 0.0], 0.7, 10.0, tol=1e-10)
    ct = clock_table(geo, bm)
    print(f"{'t':>10} {'ratio':>16} {'weighted':>16} {'midpoint':>16}")
    for k in range(len(ct["ratio"])):
        print(f"{ct['t'][k + 1]:10.4f} {ct['ratio'][k]:16.12f} {ct['predicted'][k]:16.12f} {ct['midpoint'][k]:16.12f}")
    print(f"max |ratio - weighted| = {np.max(np.abs(ct['ratio'] - ct['predicted'])):.2e}")
    print(f"max |ratio - midpoint| = {np.max(np.abs(ct['ratio'] - ct['midpoint'])):.2e}")


if __name__ == "__main__":
    main()
