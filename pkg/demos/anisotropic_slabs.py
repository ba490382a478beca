"""Gradient-aligned slabs on a smooth function.

Build the anisotropic approximant of f(x) = |x|^2/2 on the unit square with
a budget of 512 cells, compare it with the uniform grid at the same budget
(which fits only 256 squares, since the next dyadic grid needs 1024), and draw the partition to an SVG file.
"""

from __future__ import annotations

import math

import numpy as np

from convpart import ApproximationProblem, build, build_isotropic_baseline, lp_error
from convpart.functions import quad
from convpart.cli import render_svg

f = quad(2)
problem = ApproximationProblem(f, d=2, p=2.0, q=2.0, N=512)

s = build(problem)
u = build_isotropic_baseline(problem, mode="uniform")
print(f"anisotropic: {s.n_cells} cells, L2 error {lp_error(f, s, 2.0):.4e}")
print(f"uniform:     {u.n_cells} cells, L2 error {lp_error(f, u, 2.0):.4e}")

# the slab direction in each dyadic cube follows the mean gradient, i.e. the cube center
angles = {round(math.degrees(math.atan2(c.direction[1], c.direction[0])), 1) for c in s.partition.cells}
print(f"{len(angles)} distinct slab directions, from {min(angles)} to {max(angles)} degrees")

# the generations of the refinement loop
for row in s.trace.rows:
    print(f"  k={row.k} G_alpha={row.G_alpha:.3e} N_k={row.N_k} marked={row.marked}")

n = render_svg(s.partition, s.values, "anisotropic_slabs.svg")
print(f"wrote anisotropic_slabs.svg with {n} polygons")

x = np.random.default_rng(0).uniform(size=(3, 2))
print("f(x) =", f(x).round(4), " s(x) =", s(x).round(4))
