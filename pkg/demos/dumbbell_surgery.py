"""Mean curvature flow of the golden dumbbell with one neck surgery."""
from minsphere import mcf

res, params = mcf.run_config(mcf.GOLDEN_DUMBBELL)
print(res.event_log(), end="")
print("extinction %.5f, circumscribed bound %.3f, %d steps"
      % (res.extinction_time, res.circumscribed_bound, res.steps))

fol = mcf.extract_foliation(res)
rep = fol.verify(1000)
print("%d leaves, nesting certificate %s, final distance to skeleton %.2e (spacing %.3g)"
      % (len(fol.leaves), "passed" if rep["passed"] else "failed",
         fol.skeleton_distance(-1), fol.spacing))
