"""
Open-system power, quantum Fisher information and the kernel term
=================================================================

Amplitude damping of a qubit battery: the bound along a trajectory, the
pure excited state, and the logarithmic growth of the power as the state
is regularised towards purity.
"""

import numpy as np

from qbattery import ThermoContext, evolve_lindblad, open_bound, singularity_probe
from qbattery.bounds import cusumano_power, eigenstate_index, eigenstate_open_bound, free_energy_deviation_spectrum
from qbattery.linalg import DensityMatrix
from qbattery.scenarios import build_named, random_density
from qbattery.thermo import RegularizationPolicy

model, H_W = build_named("qubit-amplitude-damping")
ctx = ThermoContext(1.0, H_W)
reg = RegularizationPolicy()

#########################################################################
# |P| <= sigma_F sqrt(I_Q) + kernel term, sampled along a trajectory.
traj = evolve_lindblad(model, random_density(2, seed=7), np.linspace(0, 5, 6), 0.01)
for t, rho in zip(traj.times, traj.states):
    rep = open_bound(model, rho, ctx, reg)
    print(f"t = {t:.1f}: |P| = {rep.lhs:.4f} <= {rep.rhs:.4f}")

#########################################################################
# From the pure excited state the state support is one-dimensional and the
# power is carried entirely by the jump into the kernel.
spec = free_energy_deviation_spectrum(ctx, DensityMatrix.basis(2, 0))
n = eigenstate_index(spec, [1, 0])
print("eigenstate power", cusumano_power(model, spec, n), "bound", eigenstate_open_bound(model, spec, n))

#########################################################################
# With eps-mixing the power grows like (gamma / beta) log(1 / eps).
fit = singularity_probe(model, ctx, 0, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
for e, p in zip(fit.eps, fit.powers):
    print(f"eps = {e:.0e}: P = {p:+.4f}")
print(f"fit P = {fit.a:.4f} + {fit.b:.4f} log eps (residual {fit.residual:.1e})")
