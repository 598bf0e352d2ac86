"""Free energy operator, entropies, extractable work and second moments.

Units: hbar = k_B = 1, natural logarithms throughout.  Scalar quantities
(energy, entropy, nonequilibrium free energy, maximal work) are evaluated
from eigenvalues with ``0 log 0 = 0`` and are finite for any state.  The
free energy *operator* diverges on the kernel of a rank-deficient state,
so building it requires an explicit :class:`RegularizationPolicy`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import (
    REJECT,
    SUPPORT_TOL,
    SUPPORT_TRUNCATE,
    DensityMatrix,
    as_hermitian,
    eig_hermitian,
    expectation,
    matrix_function,
)

EPSILON_MIX = "epsilon-mix"
POLICY_MODES = (SUPPORT_TRUNCATE, EPSILON_MIX, REJECT)

INFINITE = math.inf
"""Returned by :func:`relative_entropy` when the support condition fails."""

MAX_LOG_RANGE = 700.0


class InternalConsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ThermoContext:
    """Reference inverse temperature ``beta`` and battery Hamiltonian ``H``."""

    beta: float
    H: np.ndarray

    def __post_init__(self):
        beta = float(self.beta)
        if not (beta > 0 and math.isfinite(beta)):
            raise ValueError(f"beta must be > 0 and finite, got {self.beta!r}")
        object.__setattr__(self, "beta", beta)
        H = as_hermitian(self.H)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class RegularizationPolicy:
    """How the logarithm of a rank-deficient state is handled.

    ``support-truncate`` restricts ``log rho`` to the support of ``rho``;
    ``epsilon-mix`` takes the logarithm of ``(1 - epsilon) rho + epsilon 1/d``;
    ``reject`` raises :class:`~qbattery.linalg.SingularLogarithm`.
    """

    mode: str = SUPPORT_TRUNCATE
    epsilon: Optional[float] = None
    support_tol: float = SUPPORT_TOL

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise ValueError(f"mode must be one of {POLICY_MODES}, got {self.mode!r}")
        if self.mode == EPSILON_MIX:
            if self.epsilon is None or not 0 < self.epsilon < 1:
                raise ValueError(f"epsilon-mix needs epsilon in (0, 1), got {self.epsilon!r}")
        if not self.support_tol >= 0:
            raise ValueError("support_tol must be >= 0")

    def describe(self) -> dict:
        d = {"mode": self.mode, "support_tol": self.support_tol}
        if self.mode == EPSILON_MIX:
            d["epsilon"] = self.epsilon
        return d


def epsilon_mix(rho: DensityMatrix, epsilon: float) -> DensityMatrix:
    d = rho.dim
    return DensityMatrix((1 - epsilon) * rho.data + epsilon * np.eye(d) / d)


def log_partition_function(ctx: ThermoContext) -> float:
    e = eig_hermitian(ctx.H).eigenvalues
    x = -ctx.beta * e
    m = x.max()
    return float(m + np.log(np.sum(np.exp(x - m))))


def thermal_state(ctx: ThermoContext) -> DensityMatrix:
    """Gibbs state ``exp(-beta H) / Z``."""
    lam, vecs = eig_hermitian(ctx.H)
    spread = ctx.beta * (lam[0] - lam[-1])
    if spread > MAX_LOG_RANGE:
        raise OverflowError(
            f"beta * spectral range = {spread:.1f} exceeds {MAX_LOG_RANGE}; Gibbs weights underflow"
        )
    w = np.exp(-ctx.beta * (lam - lam[-1]))
    w /= w.sum()
    return DensityMatrix.from_spectral(w, vecs)


def free_energy_operator(
    ctx: ThermoContext, rho_W: DensityMatrix, reg: RegularizationPolicy = RegularizationPolicy()
) -> np.ndarray:
    """``H + log(rho_W) / beta`` with the kernel handled by ``reg``."""
    if rho_W.dim != ctx.dim:
        raise ValueError(f"state dim {rho_W.dim} does not match Hamiltonian dim {ctx.dim}")
    if reg.mode == EPSILON_MIX:
        spec = epsilon_mix(rho_W, reg.epsilon).spectral
        log_rho = matrix_function(spec, np.log, reg.support_tol, REJECT)
    else:
        log_rho = matrix_function(rho_W.spectral, np.log, reg.support_tol, reg.mode)
    F = ctx.H + log_rho / ctx.beta
    return 0.5 * (F + F.conj().T)


def _xlogx(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """``-tr(rho log rho)`` in nats."""
    s = -float(np.sum(_xlogx(rho.eigenvalues)))
    return s if s > 0.0 else 0.0


def energy(ctx: ThermoContext, rho: DensityMatrix) -> float:
    return expectation(rho, ctx.H)


def nonequilibrium_free_energy(ctx: ThermoContext, rho: DensityMatrix) -> float:
    """``U(rho) - S(rho) / beta``, equal to the mean of the free energy operator."""
    return energy(ctx, rho) - von_neumann_entropy(rho) / ctx.beta


def equilibrium_free_energy(ctx: ThermoContext) -> float:
    return -log_partition_function(ctx) / ctx.beta


def relative_entropy(
    rho: DensityMatrix, sigma: DensityMatrix, support_tol: float = SUPPORT_TOL
) -> float:
    """``tr(rho log rho) - tr(rho log sigma)`` in nats.

    Returns :data:`INFINITE` when ``rho`` has weight above ``support_tol`` on
    the kernel of ``sigma``.
    """
    if rho.dim != sigma.dim:
        raise ValueError("dimension mismatch")
    s_val, s_vec = sigma.spectral
    on_support = s_val > support_tol
    log_s = np.log(np.where(on_support, s_val, 1.0))
    return _relative_entropy_in_basis(rho, s_vec, log_s, on_support, support_tol)


def _relative_entropy_in_basis(rho, s_vec, log_s, on_support, support_tol) -> float:
    # populations of rho in the eigenbasis of sigma
    q = np.real(np.einsum("ik,ij,jk->k", s_vec.conj(), rho.data, s_vec))
    if np.sum(q[~on_support]) > support_tol:
        return INFINITE
    cross = float(np.sum(q[on_support] * log_s[on_support]))
    val = float(np.sum(_xlogx(rho.eigenvalues))) - cross
    return max(val, 0.0)


def max_extractable_work(
    ctx: ThermoContext, rho_W: DensityMatrix, rtol: float = 1e-9
) -> float:
    """Maximal average work with a bath at ``beta``: ``S(rho || tau) / beta``.

    The value is cross-checked against ``F(rho) - F(tau)``; disagreement
    beyond ``rtol`` (relative to the free energies involved) raises
    :class:`InternalConsistencyError`.
    """
    thermal_state(ctx)  # range check
    # log tau from the Gibbs formula, exact even where tau underflows support_tol
    lam, vecs = eig_hermitian(ctx.H)
    log_tau = -ctx.beta * lam - log_partition_function(ctx)
    full = np.ones(lam.size, dtype=bool)
    w_rel = _relative_entropy_in_basis(rho_W, vecs, log_tau, full, SUPPORT_TOL) / ctx.beta
    f_rho = nonequilibrium_free_energy(ctx, rho_W)
    f_tau = equilibrium_free_energy(ctx)
    w_free = f_rho - f_tau
    scale = max(abs(w_rel), abs(f_rho), abs(f_tau), 1e-300)
    if not math.isfinite(w_rel) or abs(w_rel - w_free) > rtol * scale:
        raise InternalConsistencyError(
            f"relative-entropy work {w_rel!r} disagrees with free-energy difference {w_free!r}"
        )
    return w_rel


def passive_energy(H, rho: DensityMatrix) -> float:
    """Energy of the passive rearrangement of ``rho`` with respect to ``H``."""
    e = eig_hermitian(H).eigenvalues[::-1]  # ascending
    r = rho.eigenvalues  # descending
    return float(np.dot(r, e))


def ergotropy(H, rho: DensityMatrix) -> float:
    """Maximal work extractable by a cyclic unitary."""
    H = as_hermitian(H)
    if H.shape[0] != rho.dim:
        raise ValueError("dimension mismatch")
    return max(expectation(rho, H) - passive_energy(H, rho), 0.0)


def variance(rho, A) -> float:
    """``<A^2> - <A>^2``."""
    A = np.asarray(A)
    m = expectation(rho, A)
    return expectation(rho, A @ A) - m * m


def covariance(rho, A, B) -> complex:
    """``tr(rho A B) - tr(rho A) tr(rho B)``; complex in general, conj-symmetric in A, B."""
    r = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    A = np.asarray(A)
    B = np.asarray(B)
    if not (r.shape == A.shape == B.shape):
        raise ValueError("dimension mismatch")
    return complex(np.trace(r @ A @ B) - expectation(r, A) * expectation(r, B))
