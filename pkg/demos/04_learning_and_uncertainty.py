"""Train a multiplier classifier online and watch both uncertainty terms
(softmax entropy, dropout variance) fall as feedback accumulates."""

import numpy as np

from idxlab import CostMultiplierModel, MULTIPLIER_GRID, combined_uncertainty
from idxlab.costmodel import nearest_bucket_index

rng = np.random.default_rng(0)
dim = 24
model = CostMultiplierModel(input_dim=dim, seed=0)
target = nearest_bucket_index(5.0)
probes = [rng.random(dim) for _ in range(8)]

print(f"teaching the model that this operator family runs "
      f"{MULTIPLIER_GRID[target]:.0f}x slower than estimated\n")
print("labels seen | mean U | entropy | dropout variance | argmax multiplier")
seen = 0
for batch in range(12):
    scores = [combined_uncertainty(model, e, 0.5, passes=20) for e in probes]
    mean_u = np.mean([s.combined for s in scores])
    mean_h = np.mean([s.entropy for s in scores])
    mean_m = np.mean([s.mcd for s in scores])
    guesses = {
        float(MULTIPLIER_GRID[int(np.argmax(model.predict(e)))]) for e in probes
    }
    print(f"{seen:11d} | {mean_u:6.3f} | {mean_h:7.3f} | {mean_m:16.5f} | {sorted(guesses)}")
    labels = [(rng.random(dim), target) for _ in range(8)] + [
        (e, target) for e in probes
    ]
    model.update(labels)
    seen += len(labels)

print("\nthe gate at threshold 0.1 would now accept corrections:",
      all(combined_uncertainty(model, e, 0.5, 20).combined <= 0.1 for e in probes))
