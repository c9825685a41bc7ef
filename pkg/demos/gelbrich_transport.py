"""
Gelbrich distance and Gaussian transport
========================================

For Gaussians the 2-Wasserstein distance has the closed form

    W^2 = |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)

which is also the value of a small SDP over couplings.  The optimal map
between zero-mean Gaussians is linear and symmetric.
"""

import numpy as np

from drlmi.ambiguity import gelbrich_distance, gelbrich_distance_sdp, optimal_transport_plan

rng = np.random.default_rng(0)
for d in (1, 2, 4):
    F1, F2 = rng.standard_normal((2, d, d))
    S1 = F1 @ F1.T + 0.1 * np.eye(d)
    S2 = F2 @ F2.T
    closed = gelbrich_distance(np.zeros(d), S1, np.zeros(d), S2)
    sdp = gelbrich_distance_sdp(S1, S2)
    D = optimal_transport_plan(S1, S2)
    push = np.abs(D @ S1 @ D - S2).max()
    E = np.eye(d) - D
    print(f"d={d}: closed form {closed:.8f}, SDP {sdp:.8f}, "
          f"|D S1 D - S2| = {push:.1e}, E|w - Dw|^2 = {np.trace(E @ S1 @ E.T):.8f} (= d^2 {closed**2:.8f})")
