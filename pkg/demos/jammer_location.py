"""Where should a jammer stand?  Grid search the expected best-offered rate
over the coverage area (lower is better for the attacker) and print the
objective surface as a crude heat map.

Run:  python3 demos/jammer_location.py
"""
import numpy as np

from slicesim.harness import Scenario, ring_layout
from slicesim.jammer import optimize_location

SHADES = " .:-=+*#%@"


def main():
    sc = Scenario.desk()
    sc.radio.link_budget_gain = 4e5
    sc.radio.num_base_stations = 5     # symmetric ring around a middle cell
    bs = ring_layout(sc.radio.num_base_stations, sc.bs_spacing_km)
    rng = np.random.default_rng(17)
    best, gx, gy, obj = optimize_location(sc.radio, bs, sc.radio.cell_radius_km,
                                          pitch_km=0.5, mc_samples=2000, rng=rng)

    print(f"{sc.radio.num_base_stations} cells, spacing "
          f"{sc.bs_spacing_km} km, grid pitch 0.5 km, 2000 user draws\n")
    lo, hi = obj.min(), obj.max()
    span = hi - lo if hi > lo else 1.0
    print("attack quality (darker = better spot for the jammer):")
    for iy in range(gy.size - 1, -1, -1):
        row = ""
        for ix in range(gx.size):
            shade = SHADES[int((1.0 - (obj[ix, iy] - lo) / span) * (len(SHADES) - 1))]
            row += shade * 2
        print("  " + row)
    print(f"\nbest point {best} km (grid centre is the middle cell)")
    print(f"objective there {lo:.3f} vs worst corner {hi:.3f} bit/s/Hz")


if __name__ == "__main__":
    main()
