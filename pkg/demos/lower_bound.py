"""The bump family defeats every partition with m^d cells.

f_m places one smooth bump in each of the m^d sub-cubes.  Any partition
into m^d convex cells leaves an L_inf error above e^{-1}/3; this script
measures the error of the anisotropic and the uniform partition.
"""

from __future__ import annotations

from convpart import lower_bound_check

for m in (1, 2, 4, 8):
    r = lower_bound_check(m, 2)
    print(
        f"m={m} N={r.N:3d}: L_inf error anisotropic {r.error_inf:.4f}, uniform {r.error_uniform:.4f}, "
        f"threshold {r.threshold:.4f} -> {'pass' if r.passed else 'FAIL'}"
    )
