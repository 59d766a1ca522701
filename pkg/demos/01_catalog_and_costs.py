"""Waveform catalog, interference costs and the distortion-constrained action set.

Run with ``python demos/01_catalog_and_costs.py``.
"""

import numpy as np

from cogradar.bandit import constrain_actions
from cogradar.spectrum import (
    MHZ,
    ChannelGrid,
    CostWeights,
    Waveform,
    bits_to_str,
    build_catalog,
    catalog_costs,
    widest_clean_id,
)

# %% The catalog: every LFM chirp whose band fits the 100 MHz channel
grid = ChannelGrid(B=100 * MHZ, S=10, H=-90.0)
catalog = build_catalog(grid, 10 * MHZ, 100 * MHZ, 10 * MHZ)
weights = CostWeights.for_catalog(catalog)
print(f"{len(catalog)} waveforms")
for bw in np.unique(catalog.bw):
    fcs = catalog.fc[catalog.bw == bw] / MHZ
    print(f"  bw {bw / MHZ:5.0f} MHz: {len(fcs):2d} centres from {fcs.min():+.0f} to {fcs.max():+.0f} MHz")

# %% An interference vector: a cellular user in the two lowest sub-channels
s = np.zeros(grid.S, dtype=bool)
s[:2] = True
best = catalog[widest_clean_id(catalog, s)]
print(f"\ninterference {bits_to_str(s)}; widest clean chirp fc={best.fc / MHZ:+.0f} MHz bw={best.bw / MHZ:.0f} MHz")

# cost of every waveform if the previous pulse was the full-band chirp
prev = catalog[catalog.fullband_id]
terms = catalog_costs(catalog, s, prev, weights)
order = np.argsort(terms.total)
print("five cheapest waveforms after a full-band pulse:")
print("   id   fc MHz  bw MHz  collision  missed  distortion  total")
for i in order[:5]:
    w = catalog[i]
    print(
        f"  {i:3d}  {w.fc / MHZ:+6.0f}  {w.bw / MHZ:6.0f}  {terms.collision[i]:9.2f}"
        f"  {terms.missed[i]:6.2f}  {terms.distortion[i]:10.3f}  {terms.total[i]:.3f}"
    )

# %% The admissible set shrinks as the distortion tolerance tightens
w_prev = Waveform(-1, 0.0, 50 * MHZ)
for dhat in (1.01, 0.5, 0.2, 0.05):
    ids = constrain_actions(catalog, w_prev, weights.replace(dhat=dhat))
    print(f"dhat={dhat:<5} -> {len(ids):2d} admissible waveforms after (fc=0, bw=50 MHz)")
