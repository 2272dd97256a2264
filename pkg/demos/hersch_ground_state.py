"""Ground state of the slit pipe H: exhaustion in R, then its exponential tail.

Coarse settings so the script finishes in well under a minute:

    python demos/hersch_ground_state.py [outdir]
"""

import math
import sys
from pathlib import Path

from tube_spectra import cli
from tube_spectra import geometry as geo
from tube_spectra.decay import compute_tail_profile, paper_decay_constants, verify_decay_bounds
from tube_spectra.spectra import exhaustion_study

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

H = geo.build_hersch_pipe()
study = exhaustion_study(H, [3.0, 4.0, 5.0, 6.0], h=0.08)
print("R      lambda_1")
for R, lam in zip(study.R, study.lambdas[:, 0]):
    print(f"{R:4.1f}   {lam:.6f}")
print(f"extrapolated {study.extrapolated[0]:.6f}  (threshold pi^2 = {math.pi**2:.6f})")
(out / "exhaustion.csv").write_text(study.to_csv())
(out / "exhaustion.svg").write_text(cli.plot_csv(out / "exhaustion.csv"))

# tail of u_1 on the longest truncation against the a priori bound
ground = study.results[-1]
lam = ground.eigenvalues[0]
prof = compute_tail_profile(ground, H)
consts = paper_decay_constants(geo.threshold_energy(H), lam, ground.mesh.domain.r0)
check = verify_decay_bounds(prof, consts)
print(f"measured decay rate {prof.rate:.3f}, half-strip mode {math.sqrt(math.pi**2 - lam):.3f}, bound {consts.rate:.3f}")
print("bound holds at every R:", check.passed)
(out / "decay.csv").write_text(check.to_csv())
(out / "decay.svg").write_text(cli.plot_csv(out / "decay.csv"))
