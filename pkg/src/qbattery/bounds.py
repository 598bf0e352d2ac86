"""Charging-power bounds for closed and open battery dynamics.

Closed dynamics (battery coupled to source, bath and ancilla through ``V``)::

    |P|^2 = |tr(rho [dF, dV])|^2 <= 2 (var_F var_V - Re[Cov(F, V)^2])

Open dynamics, splitting eigenvalue pairs of ``rho_W`` by whether
``p_a + p_b`` vanishes::

    |P| <= sigma_F sqrt(I_Q) + |sum_{p_a + p_b = 0} dF_ab <b|rho_dot|a>|

where ``I_Q`` is the quantum Fisher information restricted to pairs with
``p_a + p_b > 0``.  For a battery in an eigenstate ``|n>`` of ``F`` the
second term reduces to ``sum_j gamma_j sum_{m != n} |w_m| |<m|L_j|n>|^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import (
    ClosedModel,
    LindbladModel,
    battery_free_energy_operator,
    charging_power,
    lindblad_rhs,
    power_closed,
    power_closed_centered,
    power_open,
)
from .linalg import (
    SUPPORT_TOL,
    DensityMatrix,
    Spectral,
    eig_hermitian,
    sqrtm_psd,
    to_eigenbasis,
)
from .thermo import (
    EPSILON_MIX,
    RegularizationPolicy,
    ThermoContext,
    covariance,
    free_energy_operator,
    variance,
)

TOL_VIOLATION = 1e-9


def _closed_rhs(t):
    return 2.0 * (t["sigma2_F"] * t["sigma2_V"] - t["re_cov_sq"])


def _open_rhs(t):
    return t["sigma_F"] * t["sqrt_qfi"] + t["kernel_term"]


def _fluctuation_only_rhs(t):
    return t["sigma_F"] * t["sqrt_qfi"]


def _eigenstate_rhs(t):
    return t["kernel_sum"]


COMPOSERS = {
    "closed": _closed_rhs,
    "open": _open_rhs,
    "fluctuation-only": _fluctuation_only_rhs,
    "eigenstate-open": _eigenstate_rhs,
}


@dataclass
class BoundReport:
    """One evaluation of a named inequality ``lhs <= rhs``.

    ``rhs`` is recomputed from ``rhs_terms`` on every read.  The violation
    tolerance scales with magnitude: ``tol_violation * max(1, |lhs|, |rhs|)``.
    """

    name: str
    lhs: float
    rhs_terms: dict
    tol_violation: float = TOL_VIOLATION
    extras: dict = field(default_factory=dict)
    regularization: Optional[dict] = None
    instance_meta: dict = field(default_factory=dict)

    @property
    def rhs(self) -> float:
        return float(COMPOSERS[self.name](self.rhs_terms))

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def tolerance(self) -> float:
        return self.tol_violation * max(1.0, abs(self.lhs), abs(self.rhs))

    @property
    def violated(self) -> bool:
        return self.slack < -self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rhs_terms": dict(self.rhs_terms),
            "slack": self.slack,
            "violated": self.violated,
            "tol_violation": self.tol_violation,
            "regularization": self.regularization,
            "instance_meta": dict(self.instance_meta),
        }


@dataclass(frozen=True)
class QfiResult:
    value: float
    rank_used: int
    excluded_pairs: int


def _rel_close(a, b, rtol, floor=1.0):
    return abs(a - b) <= rtol * max(floor, abs(a), abs(b))


def closed_bound(
    rho_full: DensityMatrix,
    ctx: ThermoContext,
    reg: RegularizationPolicy,
    model: ClosedModel,
    tol_violation: float = TOL_VIOLATION,
) -> BoundReport:
    """Closed-system bound ``|P|^2 <= 2 (var_F var_V - Re[Cov^2])``.

    Also checks that ``|P|^2`` equals the centred commutator form and its
    three-term expansion ``|a|^2 + |b|^2 - 2 Re(c^2)`` where
    ``a = tr(sqrt(rho) dF dV sqrt(rho))``, ``b`` is the reversed product and
    ``c = tr(rho dF dV)``.
    """
    r = rho_full.data
    n = r.shape[0]
    rho_W, F, F_full = battery_free_energy_operator(rho_full, ctx, reg, model)
    V = model.V

    P = power_closed(rho_full, ctx, reg, model)
    P_centered = power_closed_centered(rho_full, ctx, reg, model)
    lhs = P * P
    if not _rel_close(lhs, abs(P_centered) ** 2, 1e-9):
        raise ArithmeticError(f"|P|^2={lhs!r} differs from centred form {abs(P_centered)**2!r}")

    dF = F_full - np.sum(r.T * F_full).real * np.eye(n)
    dV = V - np.sum(r.T * V).real * np.eye(n)
    sq = sqrtm_psd(r)
    a = complex(np.trace(sq @ dF @ dV @ sq))
    b = complex(np.trace(sq @ dV @ dF @ sq))
    c = complex(np.trace(r @ dF @ dV))
    three_term = abs(a) ** 2 + abs(b) ** 2 - 2.0 * (c * c).real
    if not _rel_close(lhs, three_term, 1e-9):
        raise ArithmeticError(f"|P|^2={lhs!r} differs from three-term form {three_term!r}")

    cov = covariance(rho_full, F_full, V)
    terms = {
        "sigma2_F": variance(rho_W, F),
        "sigma2_V": variance(rho_full, V),
        "re_cov_sq": (cov * cov).real,
    }
    return BoundReport(
        "closed",
        lhs,
        terms,
        tol_violation,
        extras={
            "power": P,
            "three_term": three_term,
            "sqrt_pair": (a, b),
            "conj_pair_error": abs(a - b.conjugate()),
            "cov": cov,
        },
        regularization=reg.describe(),
        instance_meta={"dims": list(model.space.dims)},
    )


def _pair_mask(p: np.ndarray, rank_tol: float) -> np.ndarray:
    return (p[:, None] + p[None, :]) > rank_tol


def qfi_eigsum(spec: Spectral, rho_dot, rank_tol: float = SUPPORT_TOL) -> QfiResult:
    """``2 sum' |<b|rho_dot|a>|^2 / (p_a + p_b)`` over pairs with ``p_a + p_b > rank_tol``."""
    p = np.clip(np.asarray(spec.eigenvalues, dtype=float), 0.0, None)
    rd = to_eigenbasis(spec, rho_dot)
    mask = _pair_mask(p, rank_tol)
    denom = np.where(mask, p[:, None] + p[None, :], 1.0)
    value = 2.0 * float(np.sum(np.where(mask, np.abs(rd) ** 2 / denom, 0.0)))
    return QfiResult(value, int(np.sum(p > rank_tol)), int(np.sum(~mask)))


def qfi_sld(rho: DensityMatrix, rho_dot, min_eig: float = SUPPORT_TOL) -> float:
    """Fisher information ``tr(rho L^2)`` from the symmetric logarithmic derivative.

    Solves ``rho_dot = (L rho + rho L) / 2`` in the eigenbasis of ``rho``;
    only defined for full-rank states.
    """
    p, vecs = rho.spectral
    if p[-1] <= min_eig:
        raise ValueError(f"SLD Fisher information needs a full-rank state (min eigenvalue {p[-1]:.3e})")
    rd = vecs.conj().T @ np.asarray(rho_dot) @ vecs
    L_eig = 2.0 * rd / (p[:, None] + p[None, :])
    L = vecs @ L_eig @ vecs.conj().T
    return float(np.trace(rho.data @ L @ L).real)


def kernel_term(spec: Spectral, rho_dot, dF, rank_tol: float = SUPPORT_TOL) -> float:
    """``|sum dF_ab <b|rho_dot|a>|`` over pairs with ``p_a + p_b <= rank_tol``."""
    p = np.clip(np.asarray(spec.eigenvalues, dtype=float), 0.0, None)
    mask = ~_pair_mask(p, rank_tol)
    if not mask.any():
        return 0.0
    dF_e = to_eigenbasis(spec, dF)
    rd = to_eigenbasis(spec, rho_dot)
    return float(abs(np.sum(np.where(mask, dF_e * rd.T, 0.0))))


def rate_bound(
    rho: DensityMatrix,
    rho_dot,
    ctx: ThermoContext,
    reg: RegularizationPolicy = RegularizationPolicy(),
    rank_tol: float = SUPPORT_TOL,
    tol_violation: float = TOL_VIOLATION,
) -> BoundReport:
    """Open-system bound for a battery state and any traceless Hermitian derivative."""
    rho_dot = np.asarray(rho_dot)
    F = free_energy_operator(ctx, rho, reg)
    P = charging_power(rho, rho_dot, ctx, reg)
    d = rho.dim
    mean_F = np.sum(rho.data.T * F).real
    dF = F - mean_F * np.eye(d)
    spec = rho.spectral
    sigma2 = variance(rho, F)

    # sum_ab (p_a + p_b) |dF_ab|^2 over all pairs and over p_a + p_b > rank_tol
    p = np.clip(spec.eigenvalues, 0.0, None)
    weights = p[:, None] + p[None, :]
    dF2 = np.abs(to_eigenbasis(spec, dF)) ** 2
    full_sum = float(np.sum(weights * dF2))
    mask = _pair_mask(p, rank_tol)
    primed_sum = float(np.sum(np.where(mask, weights * dF2, 0.0)))
    # excluded pairs carry weight <= rank_tol each
    slack = 1e-9 * max(1.0, abs(full_sum))
    excluded_cap = rank_tol * float(np.sum(np.where(mask, 0.0, dF2)))
    if abs(full_sum - 2 * sigma2) > slack or abs(full_sum - primed_sum) > slack + excluded_cap:
        raise ArithmeticError(
            f"weighted dF identity failed: full {full_sum!r}, primed {primed_sum!r}, 2var {2 * sigma2!r}"
        )

    qfi = qfi_eigsum(spec, rho_dot, rank_tol)
    terms = {
        "sigma_F": math.sqrt(max(sigma2, 0.0)),
        "sqrt_qfi": math.sqrt(qfi.value),
        "kernel_term": kernel_term(spec, rho_dot, dF, rank_tol),
    }
    return BoundReport(
        "open",
        abs(P),
        terms,
        tol_violation,
        extras={
            "power": P,
            "qfi": qfi,
            "weighted_sum": full_sum,
            "weighted_sum_primed": primed_sum,
            "two_sigma2": 2 * sigma2,
        },
        regularization=reg.describe(),
        instance_meta={"dim": d, "rank_tol": rank_tol},
    )


def open_bound(
    model: LindbladModel,
    rho: DensityMatrix,
    ctx: ThermoContext,
    reg: RegularizationPolicy = RegularizationPolicy(),
    rank_tol: float = SUPPORT_TOL,
    tol_violation: float = TOL_VIOLATION,
) -> BoundReport:
    """``|P| <= sigma_F sqrt(I_Q) + kernel term`` under Lindblad dynamics."""
    return rate_bound(rho, lindblad_rhs(model, rho), ctx, reg, rank_tol, tol_violation)


def fluctuation_only(report: BoundReport) -> BoundReport:
    """Drop the kernel term from an open report.

    This is the fluctuation-only expression ``sigma_F sqrt(I_Q)``; it is *not*
    a valid bound and is provided to exhibit counterexamples.
    """
    terms = {k: report.rhs_terms[k] for k in ("sigma_F", "sqrt_qfi")}
    return BoundReport(
        "fluctuation-only",
        report.lhs,
        terms,
        report.tol_violation,
        extras=dict(report.extras),
        regularization=report.regularization,
        instance_meta=dict(report.instance_meta),
    )


def free_energy_deviation_spectrum(
    ctx: ThermoContext, rho_W: DensityMatrix, reg: RegularizationPolicy = RegularizationPolicy()
) -> Spectral:
    """Spectral decomposition of ``F - <F>`` for the state ``rho_W``."""
    F = free_energy_operator(ctx, rho_W, reg)
    mean_F = np.sum(rho_W.data.T * F).real
    return eig_hermitian(F - mean_F * np.eye(rho_W.dim))


def eigenstate_index(spec: Spectral, psi) -> int:
    """Index of the eigenvector of ``spec`` that matches ``psi`` up to phase."""
    psi = np.asarray(psi, dtype=complex).ravel()
    psi = psi / np.linalg.norm(psi)
    overlaps = np.abs(spec.eigenvectors.conj().T @ psi)
    k = int(np.argmax(overlaps))
    if overlaps[k] < 1 - 1e-9:
        raise ValueError(f"state is not an eigenvector (best overlap {overlaps[k]:.6f})")
    return k


def _eigenstate_terms(model: LindbladModel, dF_spec: Spectral, n: int, tol: float):
    w, vecs = dF_spec
    if not 0 <= n < len(w):
        raise ValueError(f"eigenstate index {n} out of range")
    if abs(w[n]) > tol:
        raise ValueError(f"eigenstate needs w_n = 0 (zero mean deviation), got w_n = {w[n]:.3e}")
    ket_n = vecs[:, n]
    others = np.arange(len(w)) != n
    weights = np.zeros(len(w))
    for gamma, L in model.channels:
        amp = vecs.conj().T @ (L @ ket_n)
        weights += gamma * np.abs(amp) ** 2
    return w[others], weights[others]


def eigenstate_open_bound(
    model: LindbladModel, dF_spec: Spectral, n: int, tol: float = 1e-9
) -> float:
    """``sum_j gamma_j sum_{m != n} |w_m| |<m|L_j|n>|^2``."""
    w, weights = _eigenstate_terms(model, dF_spec, n, tol)
    return float(np.sum(np.abs(w) * weights))


def cusumano_power(model: LindbladModel, dF_spec: Spectral, n: int, tol: float = 1e-9) -> float:
    """Signed power ``sum_j gamma_j sum_{m != n} w_m |<m|L_j|n>|^2`` at a pure eigenstate."""
    w, weights = _eigenstate_terms(model, dF_spec, n, tol)
    return float(np.sum(w * weights))


class PoorFitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProbeFit:
    """Least-squares fit ``P(eps) = a + b log(eps)``.

    ``a_kernel`` is the intercept against the kernel eigenvalue ``eps / d``
    of the mixed state, i.e. ``a + b log d``.
    """

    eps: np.ndarray
    powers: np.ndarray
    a: float
    b: float
    residual: float
    a_kernel: float
    poor_fit: bool


def _check_eps_grid(eps_grid) -> np.ndarray:
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size < 4:
        raise ValueError("eps grid needs at least 4 points")
    if np.any(eps <= 0) or np.any(eps > 0.1):
        raise ValueError("eps grid must lie in (0, 0.1]")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps grid must be strictly descending")
    ratios = eps[1:] / eps[:-1]
    if np.max(np.abs(ratios / ratios[0] - 1)) > 1e-6:
        raise ValueError("eps grid must be geometrically spaced")
    return eps


def singularity_probe(model: LindbladModel, ctx: ThermoContext, n: int, eps_grid) -> ProbeFit:
    """Track how the power at the pure basis state ``|n><n|`` depends on regularization.

    For each ``eps`` the power is evaluated with ``F`` built from
    ``(1 - eps)|n><n| + eps 1/d`` and fitted to ``a + b log(eps)``.  A
    nonzero ``b`` means population leaks into the kernel of the state, where
    the free energy operator is unbounded.  A fit residual above
    ``0.05 |b log(eps_min)|`` emits :class:`PoorFitWarning`.
    """
    eps = _check_eps_grid(eps_grid)
    rho = DensityMatrix.basis(model.dim, n)
    powers = np.array(
        [power_open(model, rho, ctx, RegularizationPolicy(EPSILON_MIX, e)) for e in eps]
    )
    X = np.column_stack([np.ones_like(eps), np.log(eps)])
    (a, b), *_ = np.linalg.lstsq(X, powers, rcond=None)
    residual = float(np.max(np.abs(X @ np.array([a, b]) - powers)))
    threshold = 0.05 * abs(b * np.log(eps[-1]))
    poor = bool(residual > max(threshold, 1e-12))
    if poor:
        warnings.warn(
            f"log fit residual {residual:.3e} exceeds {threshold:.3e}", PoorFitWarning, stacklevel=2
        )
    return ProbeFit(eps, powers, float(a), float(b), residual, float(a + b * np.log(model.dim)), poor)
