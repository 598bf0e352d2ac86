"""
Free energy, extractable work and ergotropy
===========================================

Build a battery Hamiltonian, compute its Gibbs state, and compare the two
routes to the maximal extractable work.
"""

import numpy as np

from qbattery import ThermoContext, ergotropy, free_energy_operator, max_extractable_work, thermal_state
from qbattery.scenarios import random_density, random_hermitian
from qbattery.thermo import RegularizationPolicy, equilibrium_free_energy, nonequilibrium_free_energy, relative_entropy

#########################################################################
# A three-level battery at inverse temperature beta = 2.
H = random_hermitian(3, 1.0, seed=0)
ctx = ThermoContext(2.0, H)
tau = thermal_state(ctx)
print("Gibbs populations:", np.round(tau.spectral.eigenvalues, 4))

#########################################################################
# The work bound as a relative entropy and as a free-energy difference.
rho = random_density(3, seed=1)
via_rel = relative_entropy(rho, tau) / ctx.beta
via_free = nonequilibrium_free_energy(ctx, rho) - equilibrium_free_energy(ctx)
print(f"W_max = {max_extractable_work(ctx, rho):.12f}")
print(f"  S(rho||tau)/beta = {via_rel:.12f}   F(rho) - F_eq = {via_free:.12f}")

#########################################################################
# Ergotropy counts only unitarily extractable work and vanishes on
# passive states such as the Gibbs state.
print(f"ergotropy(rho) = {ergotropy(H, rho):.6f}, ergotropy(tau) = {ergotropy(H, tau):.1e}")

#########################################################################
# The free energy operator of a pure state needs a regularisation policy.
pure = random_density(3, rank=1, seed=2)
for policy in (RegularizationPolicy(), RegularizationPolicy("epsilon-mix", 1e-6)):
    F = free_energy_operator(ctx, pure, policy)
    print(policy.mode, "-> spectrum of F:", np.round(np.linalg.eigvalsh(F), 3))
