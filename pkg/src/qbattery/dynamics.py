"""Closed (unitary) and open (Lindblad) battery dynamics and charging power.

Charging power is ``tr(d rho_W/dt F)`` with ``F`` the free energy operator
built from the instantaneous battery state.  The derivative is always the
analytic right-hand side (commutator or GKLS generator); numerical
differences only appear in :func:`power_finite_difference`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import (
    CompositeSpace,
    DensityMatrix,
    as_hermitian,
    commutator,
    eig_hermitian,
    embed_battery_operator,
    embed_local,
    op_norm,
    partial_trace,
    partial_trace_array,
    to_eigenbasis,
)
from .thermo import (
    RegularizationPolicy,
    ThermoContext,
    free_energy_operator,
    max_extractable_work,
)

STABILITY_LIMIT = 0.1
NEGATIVITY_ABORT = 1e-8


class IntegratorFailure(RuntimeError):
    """Positivity was lost during integration."""

    def __init__(self, time: float, eigenvalue: float):
        self.time = float(time)
        self.eigenvalue = float(eigenvalue)
        super().__init__(f"state lost positivity at t={self.time:.6g} (eigenvalue {self.eigenvalue:.3e})")


@dataclass(frozen=True)
class LindbladModel:
    """Battery Hamiltonian plus dissipative channels ``(gamma_j, L_j)``."""

    H: np.ndarray
    channels: tuple = ()

    def __post_init__(self):
        H = as_hermitian(self.H)
        d = H.shape[0]
        chans = []
        for gamma, L in self.channels:
            gamma = float(gamma)
            if not (gamma >= 0 and math.isfinite(gamma)):
                raise ValueError(f"channel rates must be finite and >= 0, got {gamma!r}")
            L = np.asarray(L, dtype=complex)
            if L.shape != (d, d):
                raise ValueError(f"jump operator shape {L.shape} does not match H dim {d}")
            chans.append((gamma, L))
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "channels", tuple(chans))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def rate_scale(self) -> float:
        """Largest generator scale, ``max(||H||, gamma_j ||L_j||^2)``."""
        scales = [op_norm(self.H)]
        scales += [g * op_norm(L) ** 2 for g, L in self.channels]
        return max(scales)


@dataclass(frozen=True)
class ClosedModel:
    """Time-independent ``H0 + V`` on a composite space.

    ``H0`` must be a sum of local terms; ``V`` is the battery coupling.
    """

    space: CompositeSpace
    H0: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        n = self.space.total_dim
        H0 = as_hermitian(self.H0)
        V = as_hermitian(self.V)
        if H0.shape != (n, n) or V.shape != (n, n):
            raise ValueError(f"H0 and V must be {n}x{n} for dims {self.space.dims}")
        object.__setattr__(self, "H0", H0)
        object.__setattr__(self, "V", V)

    @classmethod
    def from_local(cls, space: CompositeSpace, local_hamiltonians: Sequence, V) -> ClosedModel:
        """Build ``H0`` as the sum of per-subsystem Hamiltonians (``None`` to skip one)."""
        n = space.total_dim
        H0 = np.zeros((n, n), dtype=complex)
        for idx, h in enumerate(local_hamiltonians):
            if h is not None:
                H0 += embed_local(h, space, idx)
        return cls(space, H0, V)

    @property
    def H(self) -> np.ndarray:
        return self.H0 + self.V


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    full_states: Optional[list] = None
    records: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.states) != len(self.times):
            raise ValueError("one state per time point is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a non-empty 1-D grid")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def evolve_closed(model: ClosedModel, rho0: DensityMatrix, times) -> Trajectory:
    """Exact unitary evolution via the spectral decomposition of ``H0 + V``."""
    times = _check_times(times)
    if rho0.dim != model.space.total_dim:
        raise ValueError(f"initial state dim {rho0.dim} != total dim {model.space.total_dim}")
    spec = eig_hermitian(model.H)
    lam, vecs = spec
    r_eig = to_eigenbasis(spec, rho0.data)
    full, reduced = [], []
    keep = model.space.battery_index
    for t in times:
        ph = np.exp(-1j * lam * (t - times[0]))
        r_t = vecs @ (np.outer(ph, ph.conj()) * r_eig) @ vecs.conj().T
        state = DensityMatrix.from_drifted(r_t, neg_tol=1e-12)
        full.append(state)
        reduced.append(partial_trace(state, model.space, keep))
    return Trajectory(times, reduced, full_states=full)


def lindblad_rhs(model: LindbladModel, rho) -> np.ndarray:
    """GKLS generator ``-i[H, rho] + sum_j gamma_j (L rho L^+ - {L^+ L, rho}/2)``."""
    r = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    out = -1j * commutator(model.H, r)
    for gamma, L in model.channels:
        if gamma == 0:
            continue
        Ld = L.conj().T
        LdL = Ld @ L
        out = out + gamma * (L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL))
    return out


def _rk4_step(model: LindbladModel, r: np.ndarray, h: float) -> np.ndarray:
    k1 = lindblad_rhs(model, r)
    k2 = lindblad_rhs(model, r + 0.5 * h * k1)
    k3 = lindblad_rhs(model, r + 0.5 * h * k2)
    k4 = lindblad_rhs(model, r + h * k3)
    return r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_lindblad(model: LindbladModel, rho0: DensityMatrix, times, step: float) -> Trajectory:
    """Fixed-step classical RK4 integration of the Lindblad equation.

    Each sample interval is split into equal sub-steps no longer than
    ``step``.  After every sub-step the state is re-Hermitized and its trace
    renormalised; an eigenvalue below -1e-8 raises :class:`IntegratorFailure`.
    """
    times = _check_times(times)
    if rho0.dim != model.dim:
        raise ValueError(f"initial state dim {rho0.dim} != model dim {model.dim}")
    if not step > 0:
        raise ValueError("step must be positive")
    if times.size > 1 and step > np.min(np.diff(times)) * (1 + 1e-12):
        raise ValueError("step must not exceed the sample spacing")
    guard = step * model.rate_scale()
    if guard > STABILITY_LIMIT:
        raise ValueError(
            f"step * rate scale = {guard:.3g} exceeds stability limit {STABILITY_LIMIT}"
        )
    r = rho0.data.copy()
    states = [rho0]
    for t0, t1 in zip(times[:-1], times[1:]):
        n = max(1, math.ceil((t1 - t0) / step - 1e-9))
        h = (t1 - t0) / n
        for k in range(n):
            r = _rk4_step(model, r, h)
            r = 0.5 * (r + r.conj().T)
            r = r / np.trace(r).real
            lo = np.linalg.eigvalsh(r)[0]
            if lo < -NEGATIVITY_ABORT:
                raise IntegratorFailure(t0 + (k + 1) * h, lo)
        states.append(DensityMatrix.from_drifted(r, neg_tol=NEGATIVITY_ABORT))
    return Trajectory(times, states)


def _power_paths(rho_W: DensityMatrix, rho_dot: np.ndarray, F: np.ndarray, rtol: float = 1e-9):
    direct = np.sum(rho_dot.T * F)
    # eigenbasis double sum over dF_ab <b|rho_dot|a>
    mean_F = np.sum(rho_W.data.T * F).real
    spec = rho_W.spectral
    dF = to_eigenbasis(spec, F - mean_F * np.eye(F.shape[0]))
    rd = to_eigenbasis(spec, rho_dot)
    double_sum = np.sum(dF * rd.T)
    scale = max(1.0, float(np.linalg.norm(F - mean_F * np.eye(F.shape[0])) * np.linalg.norm(rho_dot)))
    if abs(direct - double_sum) > rtol * scale:
        raise ArithmeticError(f"power paths disagree: {direct!r} vs {double_sum!r}")
    if abs(direct.imag) > rtol * scale:
        raise ArithmeticError(f"power has imaginary residue {direct.imag:.3e}")
    return float(direct.real)


def charging_power(
    rho_W: DensityMatrix,
    rho_dot,
    ctx: ThermoContext,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> float:
    """``tr(rho_dot F)`` for a battery state and its time derivative.

    Evaluated both directly and as the eigenbasis double sum
    ``sum_ab dF_ab <b|rho_dot|a>``; the two must agree to 1e-9.
    """
    F = free_energy_operator(ctx, rho_W, reg)
    return _power_paths(rho_W, np.asarray(rho_dot), F)


def power_open(
    model: LindbladModel,
    rho: DensityMatrix,
    ctx: ThermoContext,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> float:
    return charging_power(rho, lindblad_rhs(model, rho), ctx, reg)


def reduced_rate(model: ClosedModel, rho_full) -> np.ndarray:
    """Exact battery derivative ``tr_SBA(-i[H0 + V, rho])``."""
    r = rho_full.data if isinstance(rho_full, DensityMatrix) else np.asarray(rho_full)
    full_dot = -1j * commutator(model.H, r)
    return partial_trace_array(full_dot, model.space.dims, model.space.battery_index)


def battery_free_energy_operator(
    rho_full: DensityMatrix, ctx: ThermoContext, reg: RegularizationPolicy, model: ClosedModel
):
    """Return the battery state, ``F`` on the battery, and ``F ⊗ 1`` on the full space."""
    rho_W = partial_trace(rho_full, model.space, model.space.battery_index)
    F = free_energy_operator(ctx, rho_W, reg)
    return rho_W, F, embed_battery_operator(F, model.space)


def power_closed(
    rho_full: DensityMatrix,
    ctx: ThermoContext,
    reg: RegularizationPolicy,
    model: ClosedModel,
    imag_tol: float = 1e-9,
) -> float:
    """``-i tr([rho, F ⊗ 1] V)`` on the full composite state."""
    _, _, F_full = battery_free_energy_operator(rho_full, ctx, reg, model)
    val = -1j * np.sum(commutator(rho_full.data, F_full).T * model.V)
    scale = max(1.0, float(np.linalg.norm(F_full) * np.linalg.norm(model.V)))
    if abs(val.imag) > imag_tol * scale:
        raise ArithmeticError(f"closed power has imaginary residue {val.imag:.3e}")
    return float(val.real)


def power_closed_centered(
    rho_full: DensityMatrix, ctx: ThermoContext, reg: RegularizationPolicy, model: ClosedModel
) -> complex:
    """``-i tr(rho [dF, dV])`` with both operators centred on their means."""
    r = rho_full.data
    _, _, F_full = battery_free_energy_operator(rho_full, ctx, reg, model)
    n = r.shape[0]
    dF = F_full - np.sum(r.T * F_full).real * np.eye(n)
    dV = model.V - np.sum(r.T * model.V).real * np.eye(n)
    return complex(-1j * np.trace(r @ commutator(dF, dV)))


def power_finite_difference(traj: Trajectory, ctx: ThermoContext) -> np.ndarray:
    """Numerical ``dW_max/dt``: central differences inside, one-sided at the ends."""
    t = traj.times
    if t.size < 3:
        raise ValueError("need at least 3 samples")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
        raise ValueError("finite differences need a uniformly spaced time grid")
    w = traj.records.get("W_max")
    if w is None:
        w = np.array([max_extractable_work(ctx, s) for s in traj.states])
    return np.gradient(np.asarray(w, dtype=float), dt[0], edge_order=2)
