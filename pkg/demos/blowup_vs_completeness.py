"""Two members of the force family ``qddot = beta qdot^2 / (1 + q)``.

With ``beta = 1`` the solution ``q = e^t - 1`` exists for all time; with
``beta = 2`` it is ``q = 1 / (1 - t) - 1`` and escapes at ``t = 1``.

The force-growth check rejects both: a force quadratic in the velocity is
outside the hypothesis for any constant ``g``.  The hypothesis is only
sufficient, so the complete ``beta = 1`` case is simply not certified,
while the integrator still separates the two behaviours.

Run with ``python3 demos/blowup_vs_completeness.py``.
"""

import math

from geoflow.bounds import GrowthFunction, Sampler, check_force_growth
from geoflow.flows import ForceField, integrate_second_order
from geoflow.manifolds import ChartManifold
from geoflow.metric import euclidean

m = euclidean(ChartManifold.euclidean(1))
sampler = Sampler(count=2000, seed=1, q_box=(-0.9, 10.0))

for beta, horizon in ((1.0, 3.0), (2.0, 2.0)):
    force = ForceField(lambda t, q, v, b=beta: b * v**2 / (1 + q),
                       domain=lambda t, q: q[0] > -1)
    traj = integrate_second_order(m, force, 0.0, [0.0], [1.0], horizon)
    rep = check_force_growth(m, [0.0], force, GrowthFunction(), 1.0, horizon, sampler)
    print(f"beta = {beta:g}")
    print(f"  run:         {traj.status.value}, t* = {traj.t_star}, t_end = {traj.t[-1]:.6f}")
    if beta == 1.0:
        print(f"  endpoint:    q = {traj.q[-1, 0]:.10f} (exact {math.exp(3) - 1:.10f})")
    print(f"  force check: {rep.verdict}, worst ratio {rep.worst_ratio:.3g}, "
          f"fitted constant {rep.fitted_constant:.3g}")
