"""
Restricting the temporal correlation
====================================

The correlated set lets the adversary choose any stationary correlation.
Bounds of the form ``sum_k tr(E[w(t-k) w(t)^T] M_k) <= g`` shrink it; they
are handled by augmenting the loop with a delay line on ``w``.  The
certificate is then only an upper bound of the moment problem.
"""

from drlmi import analysis
from drlmi.ambiguity import AmbiguitySpec
from drlmi.analysis import AutocorrelationConstraint
from drlmi.model import ClosedLoop

cl = ClosedLoop.scalar(0.5, 1.0, 1.0, 0.0)
amb = AmbiguitySpec("cor", 0.5, [[1.0]])
print(f"unrestricted correlated worst case: {analysis.analyze(cl, amb).cost:.5f}")

cases = {
    "loose lag-1 bound E[w(t-1) w(t)] <= 1000": AutocorrelationConstraint(1, [[[[0.0]], [[1.0]]]], [1e3]),
    "power bound E[w^2] <= 1.5": AutocorrelationConstraint(0, [[[[1.0]]]], [1.5]),
    "lag-1 bound E[w(t-1) w(t)] <= 0.2": AutocorrelationConstraint(1, [[[[0.0]], [[1.0]]]], [0.2]),
}
for label, acf in cases.items():
    p = analysis.solve_moment_relaxation_autocorrelated(cl, amb, acf).value
    d = analysis.analyze_autocorrelated(cl, amb, acf)
    print(f"{label:45s} moments {p:.5f}  certificate {d.cost:.5f}  mu {d.mu.round(4)}")
