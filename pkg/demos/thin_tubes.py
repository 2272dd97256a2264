"""Attaching thin tubes to H: rigidity, eigenvalue drop and the sign of d rho.

A coarse n = 3 study (about a minute).  The blow-up constant is taken as
given; ``tube-spectra blowup`` recomputes it.

    python demos/thin_tubes.py
"""

from tube_spectra.perturb import MeshPolicy, hersch_ground_states, normal_derivative_profile, rho_verdict

ALPHA = 0.6347

levels = hersch_ground_states((0.2, 0.1, 0.05), R=6.0)
profile = normal_derivative_profile(levels)
lam_H = profile.lambdas[-1]
print(f"lambda_1(H) ~ {lam_H:.5f}, min f^2 on [1, 4] = {profile.m_min():.5f}")

rep = rho_verdict(3, (0.05, 0.025, 0.0125), profile, ALPHA, lam_H, MeshPolicy(h=0.1, R=6.0, per_mouth=8))
print("eps      drop/eps^2  T/eps^2   d rho/d eps^2")
for r in rep.rows:
    print(f"{r.eps:<8g} {r.drop_over_eps2:10.4f} {r.T_over_eps2:9.4f} {r.rho_slope:12.3f}")
s = rep.study
print(f"fitted drop/eps^2 {s.fitted_drop_over_eps2:.4f} vs alpha * sum f^2 = {s.predicted_drop_over_eps2:.4f}")
print(f"rho decreases with three tubes: {rep.verdict}; the count sufficient in theory is n0 = {rep.n0}")
