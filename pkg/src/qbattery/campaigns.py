"""Randomised verification campaigns behind the command-line tools.

Instance ``i`` of a campaign draws everything from the PCG64 stream seeded
with ``seed + i``, so results do not depend on how instances are spread
over worker processes.  Reports are plain JSON-ready dicts; violating
instances carry their full matrices (row-major, real/imaginary
interleaved) so they can be replayed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bounds import (
    closed_bound,
    fluctuation_only,
    qfi_eigsum,
    qfi_sld,
    rate_bound,
    singularity_probe,
)
from .dynamics import (
    ClosedModel,
    LindbladModel,
    evolve_closed,
    evolve_lindblad,
    lindblad_rhs,
    reduced_rate,
)
from .linalg import SUPPORT_TOL, CompositeSpace, DensityMatrix
from .scenarios import (
    NAMED_KIND,
    RNG_ALGORITHM,
    build_named,
    named_model,
    random_closed_model,
    random_density,
    random_lindblad,
    rng,
)
from .thermo import RegularizationPolicy, ThermoContext

VARIANTS = ("corrected", "fluctuation-only")
OPEN_MODELS = tuple(NAMED_KIND) + ("random",)


def encode_matrix(a) -> dict:
    a = np.asarray(a, dtype=complex)
    flat = np.empty(2 * a.size)
    flat[0::2] = a.real.ravel()
    flat[1::2] = a.imag.ravel()
    return {"shape": list(a.shape), "data": flat.tolist()}


def decode_matrix(d: dict) -> np.ndarray:
    flat = np.asarray(d["data"], dtype=float)
    return (flat[0::2] + 1j * flat[1::2]).reshape(d["shape"])


def _complex(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _summary(reports: list) -> dict:
    slacks = [r["slack"] for r in reports]
    worst = int(np.argmin(slacks)) if slacks else None
    return {
        "evaluations": len(reports),
        "passed": sum(not r["violated"] for r in reports),
        "violations": sum(r["violated"] for r in reports),
        "worst_slack": float(slacks[worst]) if slacks else None,
        "worst_index": worst,
    }


# --- closed campaign --------------------------------------------------------


def closed_instance(seed: int, dims, rank=None):
    """Random closed instance: ``(model, ctx, rho_full)`` drawn from one stream."""
    gen = rng(seed)
    model, H_W = random_closed_model(dims, 1.0, gen)
    beta = float(10 ** gen.uniform(-1, 1))
    rho = random_density(model.space.total_dim, rank, gen)
    return model, ThermoContext(beta, H_W), rho


def _closed_job(args):
    index, seed, dims, rank, rank_tol, tol = args
    model, ctx, rho = closed_instance(seed, dims, rank)
    reg = RegularizationPolicy(support_tol=rank_tol)
    rep = closed_bound(rho, ctx, reg, model, tol)
    rep.instance_meta.update({"index": index, "seed": seed, "beta": ctx.beta})
    out = rep.to_dict()
    out["conj_pair_error"] = float(rep.extras["conj_pair_error"])
    if rep.violated:
        out["instance"] = {
            "kind": "closed",
            "dims": list(dims),
            "beta": ctx.beta,
            "H0": encode_matrix(model.H0),
            "V": encode_matrix(model.V),
            "H_W": encode_matrix(ctx.H),
            "rho": encode_matrix(rho.data),
        }
    return out


def verify_closed(
    instances: int,
    dims: Sequence[int],
    seed: int,
    tol: float = 1e-9,
    rank_tol: float = SUPPORT_TOL,
    rank=None,
    jobs: int = 1,
) -> dict:
    """Fuzz the closed-system bound over random full composite states."""
    CompositeSpace(tuple(dims))
    args = [(i, seed + i, tuple(dims), rank, rank_tol, tol) for i in range(instances)]
    reports = _map(_closed_job, args, jobs)
    return {
        "command": "verify",
        "kind": "closed",
        "parameters": {
            "instances": instances, "dims": list(dims), "seed": seed, "tol": tol,
            "rank_tol": rank_tol, "rank": rank,
        },
        "tool_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "bounds": {"closed": _summary(reports)},
        "checks": {
            "min_rhs": min((r["rhs"] for r in reports), default=None),
            "max_conj_pair_error": max((r["conj_pair_error"] for r in reports), default=None),
        },
        "violations": [r for r in reports if r["violated"]],
    }


# --- open campaign ------------------------------------------------------------


def _open_model(name: str, gen, dim: int):
    if name == "random":
        model = random_lindblad(dim, 2, 1.0, gen)
        return model, model.H
    return build_named(name)


def _open_job(args):
    name, inst, seed, points, t_end, rank, dim, rank_tol, tol, variant = args
    gen = rng(seed)
    model, H_W = _open_model(name, gen, dim)
    ctx = ThermoContext(1.0, H_W)
    reg = RegularizationPolicy(support_tol=rank_tol)
    times = np.linspace(0.0, t_end, points)
    if isinstance(model, ClosedModel):
        rho0 = random_density(model.space.total_dim, rank, gen)
        traj = evolve_closed(model, rho0, times)
        rates = [reduced_rate(model, f) for f in traj.full_states]
    else:
        rho0 = random_density(model.dim, rank, gen)
        step = min(times[1] - times[0], 0.1 / model.rate_scale(), 0.01)
        traj = evolve_lindblad(model, rho0, times, step)
        rates = [lindblad_rhs(model, s) for s in traj.states]

    out, identity_err = [], 0.0
    for k, (t, rho, rd) in enumerate(zip(times, traj.states, rates)):
        rep = rate_bound(rho, rd, ctx, reg, rank_tol, tol)
        ex = rep.extras
        identity_err = max(
            identity_err,
            abs(ex["weighted_sum"] - ex["two_sigma2"]) / max(1.0, abs(ex["weighted_sum"])),
        )
        if variant == "fluctuation-only":
            rep = fluctuation_only(rep)
        rep.instance_meta.update({"model": name, "instance": inst, "seed": seed, "t": float(t)})
        d = rep.to_dict()
        if rep.violated:
            d["instance"] = {
                "kind": "open",
                "beta": ctx.beta,
                "H_W": encode_matrix(ctx.H),
                "rho": encode_matrix(rho.data),
                "rho_dot": encode_matrix(rd),
            }
        out.append(d)
    return out, identity_err


def verify_open(
    models: Sequence[str],
    instances: int,
    seed: int,
    points: int = 100,
    t_end: float = 5.0,
    tol: float = 1e-9,
    rank_tol: float = SUPPORT_TOL,
    rank=None,
    dim: int = 3,
    variant: str = "corrected",
    jobs: int = 1,
) -> dict:
    """Check the open-system bound along trajectories from random initial states.

    ``variant="fluctuation-only"`` drops the kernel term; that expression is
    not a bound and the campaign then reports its counterexamples.
    """
    for m in models:
        if m not in OPEN_MODELS:
            raise ValueError(f"unknown model {m!r}; valid: {', '.join(OPEN_MODELS)}")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if points < 2:
        raise ValueError("points must be >= 2")
    args = []
    for mi, name in enumerate(models):
        for i in range(instances):
            args.append((name, i, seed + mi * instances + i, points, t_end, rank, dim, rank_tol, tol, variant))
    results = _map(_open_job, args, jobs)
    reports = [r for rs, _ in results for r in rs]
    per_model = {}
    for name in models:
        per_model[name] = _summary([r for r in reports if r["instance_meta"]["model"] == name])
    bound_name = "open" if variant == "corrected" else "fluctuation-only"
    return {
        "command": "verify",
        "kind": "open",
        "parameters": {
            "models": list(models), "instances": instances, "seed": seed, "points": points,
            "t_end": t_end, "tol": tol, "rank_tol": rank_tol, "rank": rank, "dim": dim,
            "variant": variant,
        },
        "tool_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "bounds": {bound_name: _summary(reports), "per_model": per_model},
        "checks": {"max_weighted_identity_error": max((e for _, e in results), default=0.0)},
        "violations": [r for r in reports if r["violated"]],
    }


def replay(report: dict) -> list:
    """Re-evaluate every serialised violating instance; return the fresh reports."""
    out = []
    for v in report.get("violations", []):
        inst = v["instance"]
        tol = v["tol_violation"]
        reg = RegularizationPolicy(**{k: v["regularization"][k] for k in v["regularization"]})
        ctx = ThermoContext(inst["beta"], decode_matrix(inst["H_W"]))
        rho = DensityMatrix(decode_matrix(inst["rho"]))
        if inst["kind"] == "closed":
            space = CompositeSpace(tuple(inst["dims"]))
            model = ClosedModel(space, decode_matrix(inst["H0"]), decode_matrix(inst["V"]))
            rep = closed_bound(rho, ctx, reg, model, tol)
        else:
            rank_tol = v["instance_meta"].get("rank_tol", SUPPORT_TOL)
            rep = rate_bound(rho, decode_matrix(inst["rho_dot"]), ctx, reg, rank_tol, tol)
            if v["name"] == "fluctuation-only":
                rep = fluctuation_only(rep)
        out.append(rep)
    return out


# --- QFI cross-check ------------------------------------------------------------


def _qfi_job(args):
    index, seed, dim, rank_tol = args
    gen = rng(seed)
    rho = random_density(dim, dim, gen)
    model = random_lindblad(dim, 2, 1.0, gen)
    rd = lindblad_rhs(model, rho)
    eig = qfi_eigsum(rho.spectral, rd, rank_tol)
    sld = qfi_sld(rho, rd)
    scale = max(abs(eig.value), abs(sld))
    dev = 0.0 if scale == 0 else abs(eig.value - sld) / scale
    # rank-deficient companion instance
    deficient = None
    if dim >= 2:
        rho_d = random_density(dim, dim - 1, gen)
        q = qfi_eigsum(rho_d.spectral, lindblad_rhs(model, rho_d), rank_tol)
        deficient = {"value": q.value, "finite": math.isfinite(q.value), "excluded_pairs": q.excluded_pairs}
    return {"index": index, "dim": dim, "eigsum": eig.value, "sld": sld, "rel_dev": dev, "deficient": deficient}


def qfi_check(
    instances: int,
    dims: Sequence[int],
    seed: int,
    rtol: float = 1e-8,
    rank_tol: float = SUPPORT_TOL,
    jobs: int = 1,
) -> dict:
    """Compare the eigenvalue-sum and SLD forms of the Fisher information."""
    args = [(i, seed + i, dims[i % len(dims)], rank_tol) for i in range(instances)]
    rows = _map(_qfi_job, args, jobs)
    devs = [r["rel_dev"] for r in rows]
    deficient = [r["deficient"] for r in rows if r["deficient"] is not None]
    failures = [r for r in rows if r["rel_dev"] >= rtol]
    return {
        "command": "qfi-check",
        "parameters": {"instances": instances, "dims": list(dims), "seed": seed, "rtol": rtol, "rank_tol": rank_tol},
        "tool_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "full_rank": {
            "evaluations": len(rows),
            "max_rel_dev": max(devs, default=0.0),
            "failures": len(failures),
            "dim1_values": [[r["eigsum"], r["sld"]] for r in rows if r["dim"] == 1][:1],
        },
        "rank_deficient": {
            "evaluations": len(deficient),
            "all_finite": all(d["finite"] for d in deficient),
            "min_excluded_pairs": min((d["excluded_pairs"] for d in deficient), default=None),
            "max_value": max((d["value"] for d in deficient), default=None),
        },
        "violations": failures,
    }


# --- singularity probe ----------------------------------------------------------


def probe(model_name: str, eps_grid: Sequence[float], state: int | None = None, beta: float = 1.0) -> dict:
    """Run the log-singularity probe on a named open model from a pure basis state."""
    if NAMED_KIND.get(model_name) != "open":
        raise ValueError(f"probe needs an open named model, got {model_name!r}")
    model, H_W = build_named(model_name)
    n = named_model(model_name).initial_state["index"] if state is None else state
    if not 0 <= n < model.dim:
        raise ValueError(f"state index must be in [0, {model.dim})")
    fit = singularity_probe(model, ThermoContext(beta, H_W), n, eps_grid)
    return {
        "command": "probe-singularity",
        "parameters": {"model": model_name, "state": n, "beta": beta, "eps_grid": [float(e) for e in fit.eps]},
        "tool_version": __version__,
        "table": [{"eps": float(e), "P": float(p)} for e, p in zip(fit.eps, fit.powers)],
        "fit": {"a": fit.a, "b": fit.b, "residual": fit.residual, "a_kernel": fit.a_kernel},
        "poor_fit": bool(fit.poor_fit),
    }
