"""Refinement bounds on a trace.

Runs the greedy dyadic refinement in both parameter regimes and checks the
decay of G_alpha per generation and its bound in terms of N_k.
"""

from __future__ import annotations

import math

from convpart import Cube, RefinementParams, alpha_of, lemma_constant, refine_to_budget
from convpart.functions import quad
from convpart.analysis import audit_trace

for d, p, q in ((2, 2.0, 2.0), (3, math.inf, 1.9)):
    alpha, gamma = alpha_of(d, p, q), 1.0 / d
    params = RefinementParams(alpha, gamma)
    part, trace = refine_to_budget(quad(d), Cube.unit(d), params, q, 4096)
    audit = audit_trace(trace)
    print(f"d={d} p={p} q={q}: alpha={alpha:.4f} gamma={gamma:.4f} regime={params.regime.value}")
    print(f"  constant {lemma_constant(d, gamma, alpha, params.regime):.4g}, {len(part)} cubes")
    for k, (b, g) in enumerate(zip(audit.bound_ratio, audit.decay_ratio), start=1):
        print(f"  k={k}: bound ratio {b:.3e}, decay ratio {g:.4f}")
    print(f"  {'ok' if audit.ok else 'violated'}")
