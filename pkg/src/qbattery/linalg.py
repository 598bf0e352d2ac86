"""Dense Hermitian operator algebra.

Operators are plain complex ``numpy`` arrays checked for Hermiticity at the
boundary; density matrices get a thin immutable wrapper that caches their
spectral decomposition.  Composite spaces are laid out as ``S ⊗ B ⊗ A ⊗ W``
with the battery as the last tensor factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

TOL_HERM = 1e-12
TOL_TRACE = 1e-12
CLAMP_NEG = 1e-12
SUPPORT_TOL = 1e-10
MAX_TOTAL_DIM = 4096

SUPPORT_TRUNCATE = "support-truncate"
REJECT = "reject"


class NotHermitianError(ValueError):
    pass


class SingularLogarithm(ValueError):
    """A logarithm was requested on an eigenvalue at or below the support cutoff."""

    def __init__(self, eigenvalue: float, support_tol: float):
        self.eigenvalue = float(eigenvalue)
        self.support_tol = support_tol
        super().__init__(
            f"eigenvalue {self.eigenvalue:.3e} is not above support_tol={support_tol:.1e}"
        )


class Spectral(NamedTuple):
    """Eigenvalues in descending order and the matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    return a


def hermiticity_error(a: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    return float(np.max(np.abs(a - a.conj().T)) / scale)


def as_hermitian(a, tol: float = TOL_HERM) -> np.ndarray:
    """Validate ``a`` as Hermitian and return an exactly Hermitian copy."""
    a = _as_square(a)
    err = hermiticity_error(a)
    if err > tol:
        raise NotHermitianError(f"matrix deviates from Hermitian by {err:.2e} (tol {tol:.0e})")
    return 0.5 * (a + a.conj().T)


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    # first component with modulus > 1e-8 of each column made real positive
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-8)
        if idx.size:
            c = col[idx[0]]
            vecs[:, k] = col * (abs(c) / c)
    return vecs


def eig_hermitian(a) -> Spectral:
    """Spectral decomposition of a Hermitian matrix.

    Eigenvalues are returned in descending order.  Each eigenvector is
    phase-fixed so that its first component of modulus above 1e-8 is real
    and positive.  Inside a degenerate cluster the basis is whatever LAPACK
    returns after that phase fix, so it is not unique; nothing downstream
    depends on the choice.
    """
    a = as_hermitian(a)
    w, v = np.linalg.eigh(a)
    return Spectral(w[::-1].copy(), _fix_phases(v[:, ::-1]))


def matrix_function(
    a,
    f: Callable[[np.ndarray], np.ndarray],
    support_tol: float = SUPPORT_TOL,
    singular: str | None = None,
) -> np.ndarray:
    """Apply the scalar function ``f`` to the eigenvalues of Hermitian ``a``.

    ``singular`` selects how eigenvalues ``<= support_tol`` are handled:
    ``None`` passes every eigenvalue to ``f``; ``"support-truncate"`` maps
    them to 0 (the function is restricted to the support); ``"reject"``
    raises :class:`SingularLogarithm`.  Use one of the latter two for
    functions such as ``np.log`` that diverge at 0.
    """
    spec = a if isinstance(a, Spectral) else eig_hermitian(a)
    lam, vecs = spec
    if singular is None:
        fl = np.asarray(f(lam), dtype=float)
    else:
        on_support = lam > support_tol
        if singular == REJECT:
            if not on_support.all():
                raise SingularLogarithm(lam[~on_support][0], support_tol)
        elif singular != SUPPORT_TRUNCATE:
            raise ValueError(f"unknown singular-value policy {singular!r}")
        fl = np.zeros_like(lam)
        fl[on_support] = f(lam[on_support])
    return (vecs * fl) @ vecs.conj().T


def logm_h(a, support_tol: float = SUPPORT_TOL, singular: str = SUPPORT_TRUNCATE) -> np.ndarray:
    return matrix_function(a, np.log, support_tol, singular)


def sqrtm_psd(a) -> np.ndarray:
    return matrix_function(a, lambda x: np.sqrt(np.clip(x, 0.0, None)))


def tensor(*ops, max_dim: int = MAX_TOTAL_DIM) -> np.ndarray:
    """Kronecker product, leftmost factor outermost."""
    total = int(np.prod([np.shape(o)[0] for o in ops]))
    if total > max_dim:
        raise ValueError(f"tensor product dimension {total} exceeds max_dim={max_dim}")
    out = np.ones((1, 1), dtype=complex)
    for o in ops:
        out = np.kron(out, np.asarray(o, dtype=complex))
    return out


@dataclass(frozen=True)
class CompositeSpace:
    """Subsystem dimensions in ``(S, B, A, W)`` order; a 1 marks an absent factor."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 1, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def battery_dim(self) -> int:
        return self.dims[-1]

    @property
    def battery_index(self) -> int:
        return len(self.dims) - 1

    @property
    def env_dim(self) -> int:
        return self.total_dim // self.battery_dim


def embed_battery_operator(a, space: CompositeSpace) -> np.ndarray:
    """Return ``1_SBA ⊗ a`` on the full composite space."""
    a = _as_square(a)
    if a.shape[0] != space.battery_dim:
        raise ValueError(
            f"operator dim {a.shape[0]} does not match battery dim {space.battery_dim}"
        )
    return np.kron(np.eye(space.env_dim, dtype=complex), a)


def embed_local(a, space: CompositeSpace, index: int) -> np.ndarray:
    """Embed an operator acting on subsystem ``index`` into the full space."""
    a = _as_square(a)
    if not 0 <= index < len(space.dims):
        raise ValueError(f"subsystem index {index} out of range for {space.dims}")
    if a.shape[0] != space.dims[index]:
        raise ValueError(f"operator dim {a.shape[0]} does not match subsystem dim {space.dims[index]}")
    left = int(np.prod(space.dims[:index]))
    right = int(np.prod(space.dims[index + 1:]))
    return np.kron(np.kron(np.eye(left), a), np.eye(right))


def partial_trace_array(a: np.ndarray, dims: Sequence[int], keep: int) -> np.ndarray:
    """Trace out every factor of ``a`` except ``keep``; works for any square operator."""
    dims = tuple(dims)
    n = len(dims)
    if not 0 <= keep < n:
        raise ValueError(f"subsystem index {keep} out of range for dims {dims}")
    a = np.asarray(a)
    if a.shape != (int(np.prod(dims)),) * 2:
        raise ValueError(f"operator shape {a.shape} does not match dims {dims}")
    before = int(np.prod(dims[:keep]))
    after = int(np.prod(dims[keep + 1:]))
    t = a.reshape(before, dims[keep], after, before, dims[keep], after)
    return np.einsum("iajibj->ab", t)


class DensityMatrix:
    """Immutable positive semidefinite, unit-trace Hermitian matrix.

    Eigenvalues in ``[-1e-12, 0)`` are clamped to zero on read; anything more
    negative is rejected at construction.
    """

    def __init__(self, data, check: bool = True):
        data = as_hermitian(data) if check else np.asarray(data, dtype=complex)
        if check:
            tr = np.trace(data).real
            if abs(tr - 1.0) > TOL_TRACE * max(1, data.shape[0]):
                raise ValueError(f"trace is {tr!r}, expected 1")
        data = data.copy()
        data.setflags(write=False)
        self._data = data
        if check:
            lam = self.spectral.eigenvalues
            if lam[-1] < -CLAMP_NEG:
                raise ValueError(f"density matrix has eigenvalue {lam[-1]:.3e} < -{CLAMP_NEG:.0e}")

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @cached_property
    def spectral(self) -> Spectral:
        w, v = eig_hermitian(self._data)
        w = np.where((w < 0) & (w >= -CLAMP_NEG), 0.0, w)
        return Spectral(w, v)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectral.eigenvalues

    def rank(self, tol: float = SUPPORT_TOL) -> int:
        return int(np.sum(self.eigenvalues > tol))

    def purity(self) -> float:
        return float(np.sum(np.abs(self._data) ** 2))

    @classmethod
    def pure(cls, psi) -> DensityMatrix:
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def basis(cls, dim: int, index: int) -> DensityMatrix:
        psi = np.zeros(dim, dtype=complex)
        psi[index] = 1.0
        return cls.pure(psi)

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityMatrix:
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_spectral(cls, eigenvalues, eigenvectors) -> DensityMatrix:
        """Build from a known decomposition and keep it as the spectral cache.

        Useful when the eigenvalues are known more accurately than a fresh
        diagonalisation would return them (e.g. Gibbs weights spanning many
        orders of magnitude).
        """
        w = np.asarray(eigenvalues, dtype=float)
        v = np.asarray(eigenvectors, dtype=complex)
        order = np.argsort(-w, kind="stable")
        w, v = w[order], v[:, order]
        rho = cls((v * w) @ v.conj().T)
        rho.__dict__["spectral"] = Spectral(np.where((w < 0) & (w >= -CLAMP_NEG), 0.0, w), v)
        return rho

    @classmethod
    def from_drifted(cls, data, neg_tol: float = 1e-8) -> DensityMatrix:
        """Re-project an almost-valid state (after numerical drift) onto the state space.

        Negative eigenvalues down to ``-neg_tol`` are clipped to zero and the
        trace renormalised; larger negativity raises ``ValueError``.
        """
        data = _as_square(data)
        data = 0.5 * (data + data.conj().T)
        data = data / np.trace(data).real
        w, v = np.linalg.eigh(data)
        if w[0] < -neg_tol:
            raise ValueError(f"eigenvalue {w[0]:.3e} below -{neg_tol:.0e}")
        if w[0] < -CLAMP_NEG:
            w = np.clip(w, 0.0, None)
            w = w / w.sum()
            data = (v * w) @ v.conj().T
        return cls(data)

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, rank={self.rank()})"


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, DensityMatrix) else np.asarray(x)


def partial_trace(rho, space: CompositeSpace, keep: int):
    """Reduced state on subsystem ``keep``.

    Returns a :class:`DensityMatrix` when given one, otherwise a plain array
    (useful for reducing traceless operators such as a state derivative).
    """
    red = partial_trace_array(_data(rho), space.dims, keep)
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(red)
    return red


def expectation(rho, a, imag_tol: float = 1e-10) -> float:
    """``tr(rho a)`` for Hermitian ``a``; the imaginary residue is checked and dropped."""
    r = _data(rho)
    a = np.asarray(a)
    if r.shape != a.shape:
        raise ValueError(f"dimension mismatch: state {r.shape} vs operator {a.shape}")
    val = np.sum(r.T * a)
    scale = max(1.0, float(np.linalg.norm(a)))
    if abs(val.imag) > imag_tol * scale:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def to_eigenbasis(spec: Spectral, a) -> np.ndarray:
    v = spec.eigenvectors
    return v.conj().T @ np.asarray(a) @ v


def op_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a), 2))


# single-qubit operators in the (|e>, |g>) basis: sigma_z = diag(1, -1)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |g><e|
SIGMA_PLUS = SIGMA_MINUS.T.copy()  # |e><g|
