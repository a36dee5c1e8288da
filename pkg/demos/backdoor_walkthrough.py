"""Why conditioning on C is not the same as intervening on C.

The demo model has a hidden relation variable R that pushes both the causal
feature C and the shortcut Z. Reading P(Y | C) off observational data mixes
the two. Cutting R -> C gives the interventional answer, and the backdoor
formula recovers it from observational tables alone.
"""

import numpy as np

from mmci import causal

for name in ("unconfounded", "confounded", "shortcut"):
    scm = causal.canned(name, seed=7)
    print(causal.format_table(scm, causal.demo(scm)))
    print()

# The same identity on a pile of random models
scm_errors = []
for seed in range(200):
    scm = causal.random_scm(seed)
    for c in range(scm.card["C"]):
        scm_errors.append(causal.total_variation(causal.backdoor_adjust(scm, c),
                                                 causal.interventional_truth(scm, c)))
print(f"200 random models: worst TV(backdoor, do) = {max(scm_errors):.2e}")

# Break positivity: R decides C and Z outright, so some (c, z) never occurs
scm = causal.DiscreteSCM([0.5, 0.5], np.eye(2), np.eye(2), np.full((2, 2, 2), 0.5), np.eye(2))
try:
    causal.backdoor_adjust(scm, 0)
except causal.PositivityError as e:
    print("positivity violated:", e)
