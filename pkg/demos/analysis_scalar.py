"""
Worst-case analysis of a scalar loop
====================================

The loop ``x+ = 0.5 x + w``, ``z = x`` is driven by noise whose law lies in
a 2-Wasserstein ball of radius ``gamma`` around ``N(0, 1)``.

* If the noise must stay i.i.d. ("ind"), the adversary inflates its standard
  deviation to ``1 + gamma`` and the variance is ``(1 + gamma)^2 / (1 - a^2)``.
* If it may be correlated in time ("cor"), the adversary puts all power at
  the frequency of largest gain, giving ``(1 + gamma)^2 / (1 - a)^2``.

Both numbers come out of the certificate LMIs, and the moment relaxation
(the dual problem) returns the same value.
"""

from drlmi import analysis
from drlmi.ambiguity import AmbiguitySpec
from drlmi.model import ClosedLoop, weighted_h2_norm_sq

a = 0.5
cl = ClosedLoop.scalar(a, 1.0, 1.0, 0.0)
print(f"nominal H2^2: {weighted_h2_norm_sq(cl, [[1.0]]):.6f}")
print()
print(f"{'gamma':>6} {'kind':>5} {'certificate':>12} {'moments':>12} {'closed form':>12}")
for gamma in (0.0, 0.1, 0.5, 1.0):
    for kind, exact in (("ind", (1 + gamma) ** 2 / (1 - a * a)), ("cor", (1 + gamma) ** 2 / (1 - a) ** 2)):
        amb = AmbiguitySpec(kind, gamma, [[1.0]])
        report = analysis.duality_gap(cl, amb)
        print(f"{gamma:6.2f} {kind:>5} {report.dual:12.6f} {report.primal:12.6f} {exact:12.6f}")

# at gamma = 0 the independent value is the nominal H2 norm; the correlated
# one is not, since a zero-mean process with unit variance can still be
# perfectly correlated in time
