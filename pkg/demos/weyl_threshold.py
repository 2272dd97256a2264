"""Weyl sequences in a tube of H at and above the threshold pi^2.

    python demos/weyl_threshold.py
"""

import math

from tube_spectra import geometry as geo
from tube_spectra.weyl import essential_threshold_report

H = geo.build_hersch_pipe()
rep = essential_threshold_report(H, [0.8 * math.pi**2, math.pi**2, 1.5 * math.pi**2], n_values=(1, 2, 4), h=1 / 16)
print("lambda/pi^2  n  energy-lambda  mass   dual residual")
for r in rep.rows:
    if not r.applicable:
        print(f"{r.lam / math.pi**2:10.2f}  {r.n}  below threshold, no sequence")
        continue
    d = r.diag
    print(f"{r.lam / math.pi**2:10.2f}  {r.n}  {d.energy - r.lam:12.4f}  {d.mass:.4f}  {d.dual_residual:.3e}")
