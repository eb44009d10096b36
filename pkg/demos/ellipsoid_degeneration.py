"""Planar spheres of E(a, 1.5, 1.2, 1): crossover, index growth, width table."""
from minsphere import jacobi, sweepout

bcd = (1.5, 1.2, 1.0)
cross = sweepout.crossover(bcd)
print("crossover a* = %.6f  (|Gamma_1| = %.6f)" % (cross["a_star"], cross["gamma1"]))

w = sweepout.yau_witness(bcd, [3.0, 3.5, 4.0])
print("a = %.2f: omega_2 <= %.5f < 2|Gamma_1| = %.5f < |Gamma_2| = %.5f  certified %s"
      % (w["a"], w["omega2_upper"], 2 * w["gamma1"], w["gamma2"], w["certified"]))

rep = jacobi.index_lower_bound_phiAB(bcd, [2, 4, 8, 16, 32])
for r in rep["rows"]:
    q = ", ".join("-" if v is None else "%.3f" % v for v in r["quotients"])
    print("a = %4g  index %3d  phi quotients [%s]" % (r["a"], r["index"], q))

print("%6s %10s %12s %10s %s" % ("a", "eps", "sup/2|G1|", "certified", "omega_k / k|G1|"))
for r in sweepout.degeneration_experiment(bcd, [2, 4, 8, 16, 32]):
    ratios = " ".join("%.4f" % x for x in r["linear_ratio"])
    print("%6g %10.3g %12.7f %10s %s" % (r["a"], r["eps"], r["normalized"], r["certified"], ratios))
