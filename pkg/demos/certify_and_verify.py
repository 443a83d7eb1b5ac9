"""Certify a time-dependent Lagrangian system, then check the a-priori bounds on a run.

The metric ``(1 + t^2) I`` grows in time, the potential is quadratic and a
uniform magnetic field bends the orbit.  After certification the recorded
energy ``E = 1 + rho^2 + |v|^2`` is compared against the Bihari envelope
with ``beta = 6`` and the integrated distance inequalities are evaluated.

Run with ``python3 demos/certify_and_verify.py``.
"""

import numpy as np

from geoflow.bounds import (GrowthFunction, Sampler, verify_distance_inequality,
                            verify_energy_envelope)
from geoflow.flows import integrate_second_order
from geoflow.manifolds import ChartManifold
from geoflow.mechanics import certify_lagrangian, el_force_field, from_expressions
from geoflow.metric import conformal_poly

plane = ChartManifold.euclidean(2)
sys = from_expressions(conformal_poly(plane), one_form=["-q2/2", "q1/2"],
                       potential="(q1^2 + q2^2)/2")
g = GrowthFunction()
horizon = 3.0

bundle = certify_lagrangian(sys, [0, 0], g, horizon, Sampler(count=3000, seed=7))
for rep in bundle.reports:
    print(f"{rep.hypothesis:28s} {rep.verdict}  worst ratio {rep.worst_ratio:.4f}")
print(f"bundle verdict: {bundle.verdict}")
print(f"scope: {bundle.reports[0].scope}")

traj = integrate_second_order(sys.metric, el_force_field(sys), 0.0, [1.0, 0.0], [0.0, 1.0],
                              horizon)
env = verify_energy_envelope(traj, g)
print(f"\nrun: {traj.status.value} with {len(traj)} samples, max E = {np.max(traj.E):.4f}")
print(f"energy envelope satisfied: {env['satisfied']}")
for mode in ("erx", "ers"):
    rep = verify_distance_inequality(sys.metric, [0, 0], traj, g, mode)
    print(f"{mode}: satisfied {rep['satisfied']}, lhs {rep['lhs']:.6f}, rhs {rep['rhs']:.6f}")
