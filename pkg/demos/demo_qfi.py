"""
Two routes to the quantum Fisher information
============================================

The eigenbasis sum and the symmetric logarithmic derivative agree on
full-rank states; only the eigenbasis sum survives rank deficiency.
"""

from qbattery import lindblad_rhs, qfi_eigsum, qfi_sld
from qbattery.scenarios import random_density, random_lindblad

model = random_lindblad(4, 2, 1.0, seed=8)
rho = random_density(4, seed=9)
rho_dot = lindblad_rhs(model, rho)
print(f"eigensum {qfi_eigsum(rho.spectral, rho_dot).value:.12f}")
print(f"SLD      {qfi_sld(rho, rho_dot):.12f}")

#########################################################################
# A rank-2 state: pairs with p_a + p_b = 0 are excluded and counted.
low = random_density(4, rank=2, seed=10)
q = qfi_eigsum(low.spectral, lindblad_rhs(model, low))
print(f"rank 2: I_Q = {q.value:.6f}, excluded pairs = {q.excluded_pairs}")
try:
    qfi_sld(low, lindblad_rhs(model, low))
except ValueError as exc:
    print("SLD route refuses:", exc)
