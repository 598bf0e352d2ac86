import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbattery.linalg import SIGMA_Z, DensityMatrix, SingularLogarithm, eig_hermitian, expectation
from qbattery.scenarios import haar_unitary, random_density, random_hermitian
from qbattery.thermo import (
    INFINITE,
    RegularizationPolicy,
    ThermoContext,
    covariance,
    ergotropy,
    free_energy_operator,
    log_partition_function,
    max_extractable_work,
    nonequilibrium_free_energy,
    relative_entropy,
    thermal_state,
    variance,
    von_neumann_entropy,
)

seeds = st.integers(0, 2**32 - 1)
betas = st.sampled_from([0.1, 1.0, 10.0])
H_QUBIT = np.diag([0.5, -0.5])


def _ctx(dim, seed, beta=1.0):
    # spectral range <= 1 keeps every Gibbs weight above the support cutoff at beta = 10
    H = random_hermitian(dim, 1.0, seed)
    norm = np.linalg.norm(H, 2)
    return ThermoContext(beta, 0.5 * H / norm if norm > 0 else H)


# --- context and policy --------------------------------------------------------


@pytest.mark.parametrize("beta", [0.0, -1.0, math.inf, math.nan])
def test_context_rejects_bad_beta(beta):
    with pytest.raises(ValueError):
        ThermoContext(beta, H_QUBIT)


def test_policy_validation():
    with pytest.raises(ValueError):
        RegularizationPolicy("epsilon-mix", None)
    with pytest.raises(ValueError):
        RegularizationPolicy("epsilon-mix", 1.0)
    with pytest.raises(ValueError):
        RegularizationPolicy("nonsense")
    assert RegularizationPolicy("epsilon-mix", 0.1).describe()["epsilon"] == 0.1


# --- thermal state ---------------------------------------------------------------


def test_thermal_zero_hamiltonian():
    assert np.allclose(thermal_state(ThermoContext(3.0, np.zeros((3, 3)))).data, np.eye(3) / 3)


def test_thermal_high_temperature_qubit():
    tau = thermal_state(ThermoContext(0.001, H_QUBIT))
    z = np.exp(-0.0005) + np.exp(0.0005)
    assert np.allclose(np.diag(tau.data).real, [np.exp(-0.0005) / z, np.exp(0.0005) / z], atol=1e-15)
    assert np.isclose(tau.data[0, 0].real, 0.49975, atol=1e-6)


def test_thermal_shares_eigenbasis():
    ctx = _ctx(4, 1, 2.0)
    tau = thermal_state(ctx)
    assert np.allclose(ctx.H @ tau.data, tau.data @ ctx.H, atol=1e-12)
    assert np.all(tau.eigenvalues > 0)


def test_thermal_overflow():
    with pytest.raises(OverflowError):
        thermal_state(ThermoContext(1000.0, np.diag([1.0, -1.0])))


def test_thermal_has_no_work():
    ctx = _ctx(3, 2)
    assert abs(max_extractable_work(ctx, thermal_state(ctx))) < 1e-12


# --- free energy operator ------------------------------------------------------------


@given(seeds, st.integers(1, 6), betas)
def test_gibbs_identity(seed, dim, beta):
    ctx = _ctx(dim, seed, beta)
    F = free_energy_operator(ctx, thermal_state(ctx))
    expected = -log_partition_function(ctx) / beta
    assert np.linalg.norm(F - expected * np.eye(dim), 2) < 1e-9
    assert variance(thermal_state(ctx), F) < 1e-12


def test_free_energy_maximally_mixed():
    ctx = _ctx(3, 4, 2.0)
    F = free_energy_operator(ctx, DensityMatrix.maximally_mixed(3))
    assert np.allclose(F, ctx.H - np.log(3) / 2.0 * np.eye(3))


def test_free_energy_mean_qutrit():
    ctx = _ctx(3, 5, 0.7)
    rho = random_density(3, None, 6)
    p = rho.eigenvalues
    U = expectation(rho, ctx.H)
    S = -np.sum(p * np.log(p))
    assert abs(expectation(rho, free_energy_operator(ctx, rho)) - (U - S / 0.7)) < 1e-10


def test_free_energy_policies_on_pure_state():
    ctx = ThermoContext(1.0, H_QUBIT)
    pure = DensityMatrix.basis(2, 0)
    with pytest.raises(SingularLogarithm):
        free_energy_operator(ctx, pure, RegularizationPolicy("reject"))
    F = free_energy_operator(ctx, pure)
    assert np.allclose(F, H_QUBIT)
    eps = 1e-3
    F_eps = free_energy_operator(ctx, pure, RegularizationPolicy("epsilon-mix", eps))
    assert np.isclose(F_eps[1, 1].real, -0.5 + np.log(eps / 2))


def test_free_energy_dim_mismatch():
    with pytest.raises(ValueError):
        free_energy_operator(ThermoContext(1.0, H_QUBIT), DensityMatrix.maximally_mixed(3))


# --- entropies --------------------------------------------------------------------


def test_entropy_values():
    assert von_neumann_entropy(DensityMatrix.basis(3, 1)) == 0.0
    assert np.isclose(von_neumann_entropy(DensityMatrix.maximally_mixed(5)), np.log(5))
    expected = -0.75 * math.log(0.75) - 0.25 * math.log(0.25)
    assert np.isclose(von_neumann_entropy(DensityMatrix(np.diag([0.75, 0.25]))), expected)
    assert np.isclose(expected, 0.5623, atol=1e-4)


@given(seeds, st.integers(1, 6), st.integers(1, 6))
def test_entropy_range(seed, dim, rank):
    rank = min(rank, dim)
    s = von_neumann_entropy(random_density(dim, rank, seed))
    assert 0.0 <= s <= math.log(dim) + 1e-12


def test_relative_entropy_examples():
    rho = random_density(3, None, 7)
    assert abs(relative_entropy(rho, rho)) < 1e-12
    assert np.isclose(relative_entropy(DensityMatrix.basis(2, 0), DensityMatrix.maximally_mixed(2)), np.log(2))


def test_relative_entropy_infinite():
    val = relative_entropy(DensityMatrix.maximally_mixed(2), DensityMatrix.basis(2, 0))
    assert val == INFINITE and val > 0


@given(seeds, st.integers(2, 5))
def test_relative_entropy_two_paths(seed, dim):
    rho = random_density(dim, None, seed)
    sigma = random_density(dim, None, seed + 1)
    # independent path: matrix logarithms through scipy
    from scipy.linalg import logm

    oracle = np.trace(rho.data @ logm(rho.data)).real - np.trace(rho.data @ logm(sigma.data)).real
    assert abs(relative_entropy(rho, sigma) - oracle) < 1e-9 * max(1.0, abs(oracle))
    assert relative_entropy(rho, sigma) >= 0


# --- maximal extractable work --------------------------------------------------------


def test_wmax_excited_qubit():
    ctx = ThermoContext(1.0, H_QUBIT)
    oracle = 0.5 + math.log(math.exp(-0.5) + math.exp(0.5))
    assert abs(max_extractable_work(ctx, DensityMatrix.basis(2, 0)) - oracle) < 1e-12


def test_wmax_nonnegative_thousand():
    gen = np.random.default_rng(3)
    for _ in range(1000):
        dim = int(gen.integers(2, 7))
        ctx = ThermoContext(float(gen.choice([0.1, 1.0, 10.0])), random_hermitian(dim, 0.3, gen))
        assert max_extractable_work(ctx, random_density(dim, None, gen)) >= 0


@given(seeds, st.integers(2, 6), betas)
def test_wmax_matches_free_energy_difference(seed, dim, beta):
    ctx = _ctx(dim, seed, beta)
    rho = random_density(dim, None, seed + 1)
    w = max_extractable_work(ctx, rho)
    diff = nonequilibrium_free_energy(ctx, rho) + log_partition_function(ctx) / beta
    assert abs(w - diff) <= 1e-9 * max(abs(w), abs(diff))


# --- ergotropy ---------------------------------------------------------------------


def test_ergotropy_excited_qubit():
    assert np.isclose(ergotropy(H_QUBIT, DensityMatrix.basis(2, 0)), 1.0)


def test_ergotropy_passive_zero():
    ctx = _ctx(4, 8, 1.3)
    assert abs(ergotropy(ctx.H, thermal_state(ctx))) < 1e-12


def _brute_force_ergotropy(H, rho):
    """Minimise the energy over every assignment of populations to energy levels."""
    e = np.linalg.eigvalsh(H)
    r = np.linalg.eigvalsh(rho.data)
    best = min(sum(r[p[k]] * e[k] for k in range(len(e))) for p in itertools.permutations(range(len(e))))
    return np.trace(rho.data @ H).real - best


def test_ergotropy_brute_force():
    gen = np.random.default_rng(11)
    for _ in range(200):
        dim = int(gen.integers(2, 5))
        H = random_hermitian(dim, 1.0, gen)
        rho = random_density(dim, None, gen)
        assert abs(ergotropy(H, rho) - _brute_force_ergotropy(H, rho)) < 1e-10


@given(seeds, st.integers(2, 5))
def test_ergotropy_bounds(seed, dim):
    H = random_hermitian(dim, 1.0, seed)
    rho = random_density(dim, None, seed + 1)
    erg = ergotropy(H, rho)
    assert -1e-12 <= erg <= expectation(rho, H) - np.linalg.eigvalsh(H)[0] + 1e-12


# --- variance and covariance ---------------------------------------------------------


def test_variance_examples():
    A = random_hermitian(3, 1.0, 9)
    _, vecs = eig_hermitian(A)
    assert abs(variance(DensityMatrix.pure(vecs[:, 2]), A)) < 1e-12
    assert np.isclose(variance(DensityMatrix.maximally_mixed(2), SIGMA_Z), 1.0)


def test_variance_elementwise():
    rho = random_density(4, None, 10)
    A = random_hermitian(4, 1.0, 11)
    r = rho.data
    m = sum(r[j, i] * A[i, j] for i in range(4) for j in range(4)).real
    a2 = sum(r[j, i] * A[i, k] * A[k, j] for i in range(4) for j in range(4) for k in range(4)).real
    assert np.isclose(variance(rho, A), a2 - m * m)


def test_covariance_examples():
    rho = random_density(3, None, 12)
    A = random_hermitian(3, 1.0, 13)
    c = covariance(rho, A, A)
    assert abs(c.imag) < 1e-12 and np.isclose(c.real, variance(rho, A))
    D1, D2 = np.diag([1.0, 2.0, 3.0]), np.diag([-1.0, 0.5, 4.0])
    assert abs(covariance(DensityMatrix.basis(3, 1), D1, D2)) < 1e-15


@given(seeds, st.integers(2, 6))
def test_covariance_cauchy_schwarz(seed, dim):
    rho = random_density(dim, None, seed)
    A = random_hermitian(dim, 1.0, seed + 1)
    B = random_hermitian(dim, 1.0, seed + 2)
    c = covariance(rho, A, B)
    vA, vB = variance(rho, A), variance(rho, B)
    assert abs(c) ** 2 <= vA * vB + 1e-10
    assert vA * vB - (c * c).real >= -1e-12
    assert np.isclose(covariance(rho, B, A), np.conj(c))


@given(seeds, st.integers(2, 5))
def test_scalars_invariant_under_basis_change(seed, dim):
    ctx = _ctx(dim, seed, 1.5)
    rho = random_density(dim, None, seed + 1)
    U = haar_unitary(dim, seed + 2)
    ctx_r = ThermoContext(1.5, U @ ctx.H @ U.conj().T)
    rho_r = DensityMatrix(U @ rho.data @ U.conj().T)
    pairs = [
        (von_neumann_entropy(rho), von_neumann_entropy(rho_r)),
        (max_extractable_work(ctx, rho), max_extractable_work(ctx_r, rho_r)),
        (ergotropy(ctx.H, rho), ergotropy(ctx_r.H, rho_r)),
        (variance(rho, free_energy_operator(ctx, rho)), variance(rho_r, free_energy_operator(ctx_r, rho_r))),
    ]
    for a, b in pairs:
        assert abs(a - b) < 1e-9
