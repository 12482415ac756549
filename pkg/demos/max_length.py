"""Maximal certified length L(C) for speeds (1, -1) and (2, -2) with unit coupling.

Run:  python3 demos/max_length.py
"""

import math

from hypiss import build_system, max_iss_length

for lam in ([1.0, -1.0], [2.0, -2.0]):
    sys = build_system(L=1.0, lam=lam, source_jacobian=[[0, 1], [1, 0]])
    for C in (1.0, 10.0, 1e3):
        L = max_iss_length(sys, C)
        print(f"speeds {lam}, C = {C:7.1f}: L(C) = {L:.5f}  (pi * |lambda| / 2 = {math.pi * lam[0] / 2:.5f})")
