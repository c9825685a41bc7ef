"""
Realising the worst case
========================

The moment relaxation returns the stationary second moment of the state,
the worst-case disturbance ``w`` and the nominal sample ``w_hat`` it was
transported from.  A Gaussian recursion with those moments attains the
worst-case cost; here it is simulated and the averaged cost compared with
the SDP value.

For the independent set the worst case is ``w = Delta w_hat`` with a fixed
matrix ``Delta``; evaluating the nominal H2 norm of the loop driven through
``Delta`` reproduces the worst-case value.
"""

import numpy as np

from drlmi import analysis
from drlmi.ambiguity import AmbiguitySpec
from drlmi.model import ClosedLoop, weighted_h2_norm_sq

cl = ClosedLoop(
    [[0.6, 0.3], [-0.2, 0.5]],
    [[1.0, 0.0], [0.3, 0.8]],
    [[1.0, 0.5]],
    [[0.1, 0.0]],
)
Sigma = np.array([[1.0, 0.3], [0.3, 0.5]])

for kind in ("ind", "cor"):
    amb = AmbiguitySpec(kind, 0.4, Sigma)
    res = analysis.solve_moment_relaxation(cl, amb)
    policy = analysis.extract_worst_case_policy(res.Sigma, cl)
    est = analysis.verify_policy_cost(policy, cl, T=20_000, n_seeds=50, seed=1)
    print(f"{kind}: SDP {res.value:.5f}, Monte Carlo {est.mean:.5f} +- {est.std / np.sqrt(50):.5f}")
    if kind == "ind":
        D = analysis.worst_case_transport(res.Sigma, amb)
        print(f"     transport map Delta =\n{np.round(D, 5)}")
        print(f"     H2^2 through Delta {weighted_h2_norm_sq(cl.with_input_map(D), Sigma):.5f}, "
              f"budget {analysis.transport_budget(D, Sigma):.5f} <= gamma 0.4")

# the correlated worst case feeds back the estimated state; runs then carry a
# random persistent component and the average over seeds converges slowly
