"""Random instances, named toy models and YAML scenario documents.

Random numbers come from ``numpy.random.Generator`` with the PCG64 bit
generator seeded directly by the user seed (see :data:`RNG_ALGORITHM`), so
every generator here is a pure function of its arguments and seed.

Qubits use the basis ``(|e>, |g>)``: ``sigma_z = diag(1, -1)`` and
``sigma_- = |g><e|``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .linalg import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_Z,
    SUPPORT_TOL,
    CompositeSpace,
    DensityMatrix,
)
from .dynamics import ClosedModel, LindbladModel
from .thermo import POLICY_MODES, RegularizationPolicy, ThermoContext, thermal_state

RNG_ALGORITHM = f"numpy-{np.__version__.split('.')[0]}.PCG64/default_rng(seed)"


def rng(seed) -> np.random.Generator:
    """PCG64 generator for an unsigned 64-bit seed; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def _ginibre(gen: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (gen.standard_normal((rows, cols)) + 1j * gen.standard_normal((rows, cols))) / math.sqrt(2)


def random_density(dim: int, rank: Optional[int] = None, seed: int = 0) -> DensityMatrix:
    """Hilbert-Schmidt-induced random state ``G G^+ / tr(G G^+)`` with ``G`` of shape dim x rank."""
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must be in [1, {dim}], got {rank}")
    g = _ginibre(rng(seed), dim, rank)
    r = g @ g.conj().T
    return DensityMatrix(r / np.trace(r).real)


def haar_unitary(dim: int, seed: int = 0) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    q, r = np.linalg.qr(_ginibre(rng(seed), dim, dim))
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """GUE-style ``(A + A^+)/2`` with complex Gaussian entries of width ``scale``."""
    if not scale >= 0:
        raise ValueError("scale must be >= 0")
    a = scale * _ginibre(rng(seed), dim, dim)
    return 0.5 * (a + a.conj().T)


def random_lindblad(
    dim: int, n_channels: int, gamma_max: float, seed: int = 0, h_scale: float = 1.0
) -> LindbladModel:
    """Random Hamiltonian plus complex-Gaussian jump operators with rates in (0, gamma_max]."""
    if not gamma_max > 0:
        raise ValueError("gamma_max must be > 0")
    gen = rng(seed)
    a = h_scale * _ginibre(gen, dim, dim)
    H = 0.5 * (a + a.conj().T)
    channels = []
    for _ in range(n_channels):
        gamma = gamma_max * (1.0 - gen.random())
        channels.append((gamma, _ginibre(gen, dim, dim)))
    return LindbladModel(H, tuple(channels))


def random_closed_model(dims, scale: float = 1.0, seed: int = 0):
    """Random local Hamiltonians plus a random full-space coupling.

    Returns ``(model, H_W)`` where ``H_W`` is the battery's local Hamiltonian.
    """
    space = CompositeSpace(tuple(dims))
    gen = rng(seed)
    locals_ = []
    for d in space.dims:
        a = scale * _ginibre(gen, d, d)
        locals_.append(0.5 * (a + a.conj().T))
    n = space.total_dim
    a = scale * _ginibre(gen, n, n)
    V = 0.5 * (a + a.conj().T)
    return ClosedModel.from_local(space, locals_, V), locals_[-1]


# --- named models ----------------------------------------------------------

NAMED_DEFAULTS = {
    "two-qubit-exchange": {"omega": 1.0, "g": 0.1},
    "qubit-amplitude-damping": {"omega": 1.0, "gamma": 1.0},
    "qubit-dephasing": {"omega": 1.0, "gamma": 1.0},
    "qubit-pumping": {"omega": 1.0, "gamma": 1.0},
}
NAMED_KIND = {
    "two-qubit-exchange": "closed",
    "qubit-amplitude-damping": "open",
    "qubit-dephasing": "open",
    "qubit-pumping": "open",
}
OPEN_NAMED = tuple(k for k, v in NAMED_KIND.items() if v == "open")


def _named_params(name: str, params: Optional[dict]) -> dict:
    if name not in NAMED_DEFAULTS:
        raise ValueError(f"unknown model {name!r}; valid names: {', '.join(NAMED_DEFAULTS)}")
    out = dict(NAMED_DEFAULTS[name])
    for k, v in (params or {}).items():
        if k not in out:
            raise ValueError(f"model {name!r} has no parameter {k!r} (valid: {', '.join(out)})")
        out[k] = float(v)
    return out


def build_named(name: str, params: Optional[dict] = None):
    """Return ``(model, H_W)`` for a named model."""
    p = _named_params(name, params)
    H_W = 0.5 * p["omega"] * SIGMA_Z
    if name == "two-qubit-exchange":
        space = CompositeSpace((2, 1, 1, 2))
        V = p["g"] * (np.kron(SIGMA_PLUS, SIGMA_MINUS) + np.kron(SIGMA_MINUS, SIGMA_PLUS))
        return ClosedModel.from_local(space, [H_W, None, None, H_W], V), H_W
    jump = {
        "qubit-amplitude-damping": SIGMA_MINUS,
        "qubit-dephasing": SIGMA_Z,
        "qubit-pumping": SIGMA_PLUS,
    }[name]
    return LindbladModel(H_W, ((p["gamma"], jump),)), H_W


# --- scenario documents ------------------------------------------------------


class ConfigError(ValueError):
    pass


_TOP_KEYS = {
    "kind", "beta", "model", "initial_state", "times", "regularization", "rank_tol", "step", "seed",
}
_TIME_KEYS = {"t_start", "t_end", "n_samples"}
_REG_KEYS = {"mode", "epsilon", "support_tol"}
_STATE_KEYS = {
    "basis": {"kind", "index"},
    "random": {"kind", "rank"},
    "thermal": {"kind"},
    "matrix": {"kind", "matrix"},
}

TIME_DEFAULTS = {"t_start": 0.0, "t_end": 5.0, "n_samples": 101}
REG_DEFAULTS = {"mode": "support-truncate", "epsilon": None, "support_tol": SUPPORT_TOL}


@dataclass(frozen=True)
class Scenario:
    """A fully validated simulation request.

    All fields hold plain Python data so scenarios compare, hash and
    serialise exactly; models are built on demand.
    """

    kind: str
    beta: float
    model: dict
    initial_state: dict
    times: dict = field(default_factory=lambda: dict(TIME_DEFAULTS))
    regularization: dict = field(default_factory=lambda: dict(REG_DEFAULTS))
    rank_tol: float = SUPPORT_TOL
    step: float = 0.01
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta,
            "model": copy.deepcopy(self.model),
            "initial_state": copy.deepcopy(self.initial_state),
            "times": dict(self.times),
            "regularization": dict(self.regularization),
            "rank_tol": self.rank_tol,
            "step": self.step,
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def time_grid(self) -> np.ndarray:
        t = self.times
        return np.linspace(t["t_start"], t["t_end"], t["n_samples"])

    @property
    def policy(self) -> RegularizationPolicy:
        r = self.regularization
        return RegularizationPolicy(r["mode"], r["epsilon"], r["support_tol"])

    def build(self):
        """Return ``(model, H_W)``: a ClosedModel or LindbladModel and the battery Hamiltonian."""
        m = self.model
        if "name" in m:
            return build_named(m["name"], m.get("params"))
        if "random" in m:
            r = m["random"]
            if self.kind == "open":
                model = random_lindblad(r["dim"], r["n_channels"], r["gamma_max"], self.seed, r["scale"])
                return model, model.H
            return random_closed_model(r["dims"], r["scale"], self.seed)
        if self.kind == "open":
            chans = tuple((c["gamma"], _matrix(c["operator"])) for c in m["channels"])
            model = LindbladModel(_matrix(m["hamiltonian"]), chans)
            return model, model.H
        space = CompositeSpace(tuple(m["dims"]))
        return ClosedModel(space, _matrix(m["h0"]), _matrix(m["v"])), _matrix(m["battery_hamiltonian"])

    @property
    def closed_model(self) -> Optional[ClosedModel]:
        return self.build()[0] if self.kind == "closed" else None

    @property
    def lindblad_model(self) -> Optional[LindbladModel]:
        return self.build()[0] if self.kind == "open" else None

    def context(self) -> ThermoContext:
        return ThermoContext(self.beta, self.build()[1])

    def initial_density(self) -> DensityMatrix:
        model, H_W = self.build()
        dim = model.space.total_dim if self.kind == "closed" else model.dim
        s = self.initial_state
        if s["kind"] == "basis":
            if not 0 <= s["index"] < dim:
                raise ConfigError(f"initial_state.index must be in [0, {dim})")
            return DensityMatrix.basis(dim, s["index"])
        if s["kind"] == "random":
            rank = s.get("rank") or dim
            if not 1 <= rank <= dim:
                raise ConfigError(f"initial_state.rank must be in [1, {dim}]")
            return random_density(dim, rank, self.seed + 1)
        if s["kind"] == "thermal":
            if self.kind != "open":
                raise ConfigError("initial_state.kind 'thermal' is only available for open scenarios")
            return thermal_state(ThermoContext(self.beta, H_W))
        try:
            return DensityMatrix(_matrix(s["matrix"]))
        except ValueError as exc:
            raise ConfigError(f"initial_state.matrix: {exc}") from exc


def _matrix(spec) -> np.ndarray:
    re = np.asarray(spec["re"], dtype=float)
    im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
    return re + 1j * im


def matrix_spec(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def named_model(name: str, params: Optional[dict] = None) -> Scenario:
    """Scenario for a named model with its documented defaults.

    ``two-qubit-exchange`` starts from ``|e>_S |g>_W``; the open models
    start from ``|e>`` except ``qubit-pumping``, which starts from ``|g>``.
    """
    p = _named_params(name, params)
    kind = NAMED_KIND[name]
    if name == "two-qubit-exchange":
        init = {"kind": "basis", "index": 1}
        times = {"t_start": 0.0, "t_end": 20.0, "n_samples": 201}
    else:
        init = {"kind": "basis", "index": 1 if name == "qubit-pumping" else 0}
        times = dict(TIME_DEFAULTS)
    return Scenario(kind, 1.0, {"name": name, "params": p}, init, times)


def _fail(key: str, msg: str):
    raise ConfigError(f"{key}: {msg}")


def _strict(d: Any, allowed: set, where: str) -> dict:
    if not isinstance(d, dict):
        _fail(where, "expected a mapping")
    extra = sorted(set(d) - allowed)
    if extra:
        _fail(f"{where}.{extra[0]}" if where else extra[0], f"unknown key (allowed: {', '.join(sorted(allowed))})")
    return d


def _num(d: dict, key: str, where: str, default=None, *, positive=False, nonneg=False, integer=False):
    name = f"{where}.{key}" if where else key
    if key not in d or d[key] is None:
        if default is None:
            _fail(name, "is required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(name, f"expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            _fail(name, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            _fail(name, "must be finite")
    if positive and not v > 0:
        _fail(name, f"must be > 0, got {v!r}")
    if nonneg and not v >= 0:
        _fail(name, f"must be >= 0, got {v!r}")
    return v


def _check_matrix(spec, where: str, dim: Optional[int] = None) -> dict:
    _strict(spec, {"re", "im"}, where)
    if "re" not in spec:
        _fail(f"{where}.re", "is required")
    try:
        m = _matrix(spec)
    except (TypeError, ValueError) as exc:
        _fail(where, f"not a numeric matrix ({exc})")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        _fail(where, f"must be square, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        _fail(where, f"must be {dim}x{dim}")
    return matrix_spec(m)


def _check_model(m, kind: str) -> dict:
    if not isinstance(m, dict):
        _fail("model", "expected a mapping")
    if "name" in m:
        _strict(m, {"name", "params"}, "model")
        name = m["name"]
        if name not in NAMED_KIND:
            _fail("model.name", f"unknown model {name!r}; valid names: {', '.join(NAMED_KIND)}")
        if NAMED_KIND[name] != kind:
            _fail("model.name", f"model {name!r} is {NAMED_KIND[name]}, scenario kind is {kind}")
        params = _strict(m.get("params") or {}, set(NAMED_DEFAULTS[name]), "model.params")
        p = dict(NAMED_DEFAULTS[name])
        for k in params:
            p[k] = _num(params, k, "model.params", nonneg=(k != "omega"))
        return {"name": name, "params": p}
    if "random" in m:
        _strict(m, {"random"}, "model")
        r = m["random"]
        if kind == "open":
            _strict(r, {"dim", "n_channels", "gamma_max", "scale"}, "model.random")
            return {"random": {
                "dim": _num(r, "dim", "model.random", positive=True, integer=True),
                "n_channels": _num(r, "n_channels", "model.random", 1, nonneg=True, integer=True),
                "gamma_max": _num(r, "gamma_max", "model.random", 1.0, positive=True),
                "scale": _num(r, "scale", "model.random", 1.0, positive=True),
            }}
        _strict(r, {"dims", "scale"}, "model.random")
        dims = r.get("dims")
        if not isinstance(dims, list) or not dims or any(not isinstance(d, int) or d < 1 for d in dims):
            _fail("model.random.dims", "must be a list of integers >= 1")
        return {"random": {"dims": list(dims), "scale": _num(r, "scale", "model.random", 1.0, positive=True)}}
    if kind == "open":
        _strict(m, {"hamiltonian", "channels"}, "model")
        if "hamiltonian" not in m:
            _fail("model", "needs one of 'name', 'random' or 'hamiltonian'")
        H = _check_matrix(m["hamiltonian"], "model.hamiltonian")
        dim = len(H["re"])
        chans = []
        for i, c in enumerate(m.get("channels") or []):
            where = f"model.channels[{i}]"
            _strict(c, {"gamma", "operator"}, where)
            chans.append({
                "gamma": _num(c, "gamma", where, nonneg=True),
                "operator": _check_matrix(c.get("operator"), f"{where}.operator", dim),
            })
        return {"hamiltonian": H, "channels": chans}
    _strict(m, {"dims", "h0", "v", "battery_hamiltonian"}, "model")
    dims = m.get("dims")
    if not isinstance(dims, list) or not dims or any(not isinstance(d, int) or d < 1 for d in dims):
        _fail("model.dims", "must be a list of integers >= 1")
    n = int(np.prod(dims))
    return {
        "dims": list(dims),
        "h0": _check_matrix(m.get("h0"), "model.h0", n),
        "v": _check_matrix(m.get("v"), "model.v", n),
        "battery_hamiltonian": _check_matrix(m.get("battery_hamiltonian"), "model.battery_hamiltonian", dims[-1]),
    }


def validate_scenario(doc: Any) -> Scenario:
    """Validate a parsed document (a mapping) and fill defaults."""
    d = _strict(doc, _TOP_KEYS, "")
    kind = d.get("kind")
    if kind not in ("closed", "open"):
        _fail("kind", f"must be 'closed' or 'open', got {kind!r}")
    beta = _num(d, "beta", "", 1.0, positive=True)
    if "model" not in d:
        _fail("model", "is required")
    model = _check_model(d["model"], kind)

    st = d.get("initial_state") or {"kind": "random"}
    if not isinstance(st, dict) or st.get("kind") not in _STATE_KEYS:
        _fail("initial_state.kind", f"must be one of {', '.join(_STATE_KEYS)}")
    _strict(st, _STATE_KEYS[st["kind"]], "initial_state")
    init = {"kind": st["kind"]}
    if st["kind"] == "basis":
        init["index"] = _num(st, "index", "initial_state", 0, nonneg=True, integer=True)
    elif st["kind"] == "random":
        if st.get("rank") is not None:
            init["rank"] = _num(st, "rank", "initial_state", positive=True, integer=True)
    elif st["kind"] == "matrix":
        init["matrix"] = _check_matrix(st.get("matrix"), "initial_state.matrix")

    tm = _strict(d.get("times") or {}, _TIME_KEYS, "times")
    times = {
        "t_start": _num(tm, "t_start", "times", TIME_DEFAULTS["t_start"], nonneg=True),
        "t_end": _num(tm, "t_end", "times", TIME_DEFAULTS["t_end"]),
        "n_samples": _num(tm, "n_samples", "times", TIME_DEFAULTS["n_samples"], integer=True),
    }
    if times["n_samples"] < 2:
        _fail("times.n_samples", f"must be >= 2, got {times['n_samples']}")
    if not times["t_end"] > times["t_start"]:
        _fail("times.t_end", "must be > t_start")

    rg = _strict(d.get("regularization") or {}, _REG_KEYS, "regularization")
    mode = rg.get("mode", REG_DEFAULTS["mode"])
    if mode not in POLICY_MODES:
        _fail("regularization.mode", f"must be one of {', '.join(POLICY_MODES)}")
    reg = {
        "mode": mode,
        "epsilon": None,
        "support_tol": _num(rg, "support_tol", "regularization", REG_DEFAULTS["support_tol"], nonneg=True),
    }
    if mode == "epsilon-mix":
        eps = _num(rg, "epsilon", "regularization", positive=True)
        if not eps < 1:
            _fail("regularization.epsilon", "must be in (0, 1)")
        reg["epsilon"] = eps
    elif rg.get("epsilon") is not None:
        _fail("regularization.epsilon", "only allowed with mode 'epsilon-mix'")

    seed = _num(d, "seed", "", 0, nonneg=True, integer=True)
    if seed >= 2**64:
        _fail("seed", "must fit in an unsigned 64-bit integer")
    scen = Scenario(
        kind=kind,
        beta=beta,
        model=model,
        initial_state=init,
        times=times,
        regularization=reg,
        rank_tol=_num(d, "rank_tol", "", SUPPORT_TOL, nonneg=True),
        step=_num(d, "step", "", 0.01, positive=True),
        seed=seed,
    )
    try:
        built, H_W = scen.build()
        ThermoContext(beta, H_W)
        if kind == "closed" and H_W.shape[0] != built.space.battery_dim:
            _fail("model.battery_hamiltonian", "must match the last entry of dims")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    scen.initial_density()
    return scen


def load_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"parse error: {where}{getattr(exc, 'problem', exc)}") from exc
    return validate_scenario(doc)


def serialize_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)
