"""Empirical convergence rates against the predicted orders.

Runs a small rate study for the smooth function in d=2 and prints the
fitted slopes next to the predicted N^{-2/(d+1)} and the isotropic N^{-1/d}.
Budgets are kept small so the script finishes in about a minute.
"""

from __future__ import annotations

from convpart import QuadratureConfig, get_function, predicted_rate, run_study

config = QuadratureConfig(samples_per_cube=4096)
f = get_function("quad", 2)
study = run_study(f, d=2, p=2.0, q=2.0, budgets=[16, 64, 256, 1024, 4096], config=config)

for method in study.methods():
    print(method)
    for run in study.series(method):
        print(f"  N={run.N:5d} cells={run.cells:5d} error={run.error:.4e}")
    slope, _, r2 = study.fit(method)
    print(f"  fitted slope {slope:.3f} (R^2 {r2:.3f})")

pred = predicted_rate(2, 2.0, 2.0)
print(f"predicted: -{pred.rate:.3f} ({pred.regime.value}); isotropic baseline -0.5")
