"""Region map in the (k1, k2) plane: Riccati condition vs the small-gain test.

Writes planar_region.csv next to this script.

Run:  python3 demos/planar_region.py
"""

import csv
from pathlib import Path

import numpy as np

from hypiss import PlanarParams, check_planar, kk_exists

a, b, lam1, lam2 = 0.8, 0.6, 1.0, -1.0
ks = np.linspace(0.0, 1.4, 29)
out = Path(__file__).with_name("planar_region.csv")
counts = {"both": 0, "ours only": 0, "kk only": 0, "neither": 0}
with out.open("w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["k1", "k2", "ours_holds", "kk_holds"])
    for k1 in ks:
        for k2 in ks:
            p = PlanarParams(a, b, lam1, lam2, k1, k2)
            ours, kk = check_planar(p).holds, kk_exists(p) is not None
            w.writerow([f"{k1:.4f}", f"{k2:.4f}", int(ours), int(kk)])
            key = "both" if ours and kk else "ours only" if ours else "kk only" if kk else "neither"
            counts[key] += 1
print(counts)
print(f"wrote {out}")
