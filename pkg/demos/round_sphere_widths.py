"""Width gap on the round three-sphere.

Builds the great-sphere foliation, the two-parameter family with and
without the logarithmic neck, and prints the resulting bounds.
"""
import numpy as np

from minsphere import ambient, sweepout

S3 = ambient.round_sphere(1.0)
fol = sweepout.build_optimal_foliation(S3)
print("centre area %.6f (4 pi = %.6f), lambda %.4f, index %d"
      % (fol.center_area, 4 * np.pi, fol.lam, fol.index))
print("slide coefficient %.5f vs lambda / 2 = %.5f" % (fol.slide_coeff, fol.lam / 2))

est = sweepout.width_report(S3, fol=fol)
cfg = est.details["config"]
print("eps %.3g  tau_bar %.3g  mu %.3g" % (cfg["eps"], cfg["tau_bar"], cfg["mu"]))
print("omega_1 <= %.6f" % est.omega1_upper)
print("omega_2 <= %.6f   margin %.3g" % (est.omega2_upper, est.margin))
for name, reg in est.details["modified_regions"].items():
    print("  %-13s sup %.6f  margin %.3g" % (name, reg["sup"], reg["margin"]))

eps = [0.08, 0.04, 0.02, 0.01]
for e, sup in zip(eps, sweepout.unmodified_limit(fol, eps)):
    print("unmodified eps=%.3g  sup %.6f  8 pi - sup %.4f" % (e, sup, 8 * np.pi - sup))

for tau in (0.1, 0.05, 0.02):
    m, exact = sweepout.log_cutoff_energy(tau)
    print("cutoff energy tau=%.3g  %.5f vs %.5f" % (tau, m, exact))
