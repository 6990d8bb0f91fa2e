"""
Reachable sets of a Randers cone
================================

A constant wind w = (0, 1/2) on the Euclidean plane, with the projection onto
the first coordinate, has exactly two horizontal unit vectors over the base
directions +1 and -1: f1 = (1, 1/2) and f2 = (-1, 1/2).  Following their flows
forwards in time only ever moves upward, so the attainable set of the origin is
the cone x2 >= |x1| / 2.  Allowing negative times gives the whole plane.

Run ``python demos/cone_reachability.py [outdir]``; it writes two SVG rasters.
"""
import sys
from pathlib import Path

import numpy as np

from finsler import Word, apply_word, attainable_set, compare_grid, orbit_set, lifted_fan_system, scenario
from finsler.control import cone_oracle, grid_to_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
out.mkdir(parents=True, exist_ok=True)

scene = scenario("cone_r2")
system = lifted_fan_system(scene)
f1, f2 = (g.constant for g in system.generators)
print("generators:", f1, f2)
print("F(f1) =", scene.norm(np.zeros(2), f1), " F(f2) =", scene.norm(np.zeros(2), f2))

# The two fields commute, so one unit of each lands straight above the origin.
print("f2 after f1:", apply_word(system, [0, 0], Word([(0, 1.0), (1, 1.0)])))

window = (-2.0, 2.0, -0.25, 2.75)
att = attainable_set(system, [0, 0], horizon=6.0, max_letters=4, samples=50_000,
                     window=window, resolution=0.05, seed=1)
report = compare_grid(att, cone_oracle(0.5), boundary_band=0.1)
print(f"attainable set: {att.occupancy.sum()} cells, agreement with the cone {report.agreement:.4f}")

orb = orbit_set(system, [0, 0], horizon=6.0, max_letters=4, samples=50_000,
                window=window, resolution=0.05, seed=1)
print(f"orbit: coverage {orb.coverage():.4f} of the window")

# The attainable set is not symmetric: running time backwards reaches cells
# below the cone that forward words never touch.
below = orb.occupancy & ~att.occupancy
print("cells reached only with negative times:", int(below.sum()))

grid_to_svg(att, out / "cone_attainable.svg", cone_wind=0.5)
grid_to_svg(orb, out / "cone_orbit.svg", cone_wind=0.5)
print("wrote", out / "cone_attainable.svg", "and", out / "cone_orbit.svg")
