"""Reproduce the shape of the incorrect-sample mixing experiment.

Two synthetic record pools stand in for unpaired (correct) and paired
(incorrect) try-on results; as the substituted fraction grows 0 -> 1 the
aggregate SDR and S-LPIPS curves must rise monotonically.
"""

import numpy as np

from tryon_eval import MixSpec, mix_experiment
from tryon_eval.harness import EvalRecord

rng = np.random.default_rng(0)
n = 50

correct = tuple(
    EvalRecord(
        model_id=f"m{i}", clothing_id=f"c{i}", status="ok",
        sdr_distance=float(rng.uniform(0.05, 0.30)),
        slpips_value=float(rng.uniform(0.03, 0.10)),
    )
    for i in range(n)
)
incorrect = tuple(
    EvalRecord(
        model_id=f"m{i}", clothing_id=f"c{i}", status="ok",
        sdr_distance=float(rng.uniform(0.40, 0.80)),
        slpips_value=float(rng.uniform(0.11, 0.18)),
    )
    for i in range(n)
)

rows = mix_experiment(MixSpec(correct=correct, incorrect=incorrect, seed=42))
print("fraction  substituted  mean SDR distance  mean S-LPIPS")
for row in rows:
    print(
        f"{row.fraction:8.1f}  {row.n_substituted:11d}  "
        f"{row.mean_sdr_distance:17.4f}  {row.mean_slpips:12.4f}"
    )

sdr_curve = [r.mean_sdr_distance for r in rows]
print("\nmonotone increasing:", all(a < b for a, b in zip(sdr_curve, sdr_curve[1:])))
