import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qbattery.dynamics import ClosedModel, LindbladModel, STABILITY_LIMIT
from qbattery.linalg import DensityMatrix
from qbattery.scenarios import (
    NAMED_KIND,
    ConfigError,
    Scenario,
    build_named,
    haar_unitary,
    load_scenario,
    named_model,
    random_density,
    random_hermitian,
    random_lindblad,
    rng,
    serialize_scenario,
)
from qbattery.simulate import run_scenario

seeds = st.integers(0, 2**63)

MINIMAL_OPEN = """
kind: open
model:
  name: qubit-amplitude-damping
"""


# --- generators -----------------------------------------------------------------------


def test_random_density_scalar():
    assert np.allclose(random_density(1, 1, 0).data, [[1.0]])


def test_random_density_pure():
    rho = random_density(5, 1, 3)
    assert abs(rho.purity() - 1) < 1e-12


def test_random_density_deterministic():
    a = random_density(3, 2, 42).data
    b = random_density(3, 2, 42).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, random_density(3, 2, 43).data)


def test_random_density_rank_range():
    with pytest.raises(ValueError):
        random_density(3, 0, 1)
    with pytest.raises(ValueError):
        random_density(3, 4, 1)


def test_random_density_ten_thousand():
    gen = rng(2024)
    for _ in range(10_000):
        dim = int(gen.integers(2, 9))
        rank = int(gen.integers(1, dim + 1))
        rho = random_density(dim, rank, gen)
        assert rho.rank(1e-12) == rank
        assert abs(np.trace(rho.data).real - 1) < 1e-12
        assert rho.eigenvalues[-1] >= 0


def test_generator_accepts_stream():
    gen = rng(5)
    a = random_hermitian(3, 1.0, gen)
    b = random_hermitian(3, 1.0, gen)
    assert not np.array_equal(a, b)
    assert np.array_equal(random_hermitian(3, 1.0, 5), a)


def test_haar_small_and_unitary():
    u = haar_unitary(1, 0)
    assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) < 1e-15
    U = haar_unitary(8, 1)
    assert np.allclose(U.conj().T @ U, np.eye(8), atol=1e-12)


def test_haar_eigenphases_uniform():
    phases = np.concatenate([np.angle(np.linalg.eigvals(haar_unitary(8, s))) for s in range(1000)])
    res = stats.kstest((phases + np.pi) / (2 * np.pi), "uniform")
    assert res.statistic < 0.05


def test_random_hermitian_scale_zero():
    assert np.array_equal(random_hermitian(4, 0.0, 1), np.zeros((4, 4)))


@given(seeds, st.integers(1, 6), st.integers(0, 4))
def test_random_lindblad_valid(seed, dim, n):
    model = random_lindblad(dim, n, 2.0, seed)
    assert np.allclose(model.H, model.H.conj().T)
    assert len(model.channels) == n
    for gamma, L in model.channels:
        assert 0 < gamma <= 2.0 and L.shape == (dim, dim)
    again = random_lindblad(dim, n, 2.0, seed)
    assert np.array_equal(model.H, again.H)


# --- named models ----------------------------------------------------------------------


def test_named_unknown():
    with pytest.raises(ValueError, match="valid names"):
        named_model("qubit-teleporter")


@pytest.mark.parametrize("name", list(NAMED_KIND))
def test_named_defaults_pass_preconditions(name):
    scen = named_model(name)
    assert scen.beta == 1.0
    model, H_W = scen.build()
    if NAMED_KIND[name] == "open":
        assert isinstance(model, LindbladModel)
        assert scen.step * model.rate_scale() <= STABILITY_LIMIT
        assert scen.step <= np.diff(scen.time_grid).min()
    else:
        assert isinstance(model, ClosedModel)
    assert scen.initial_density().dim in (2, 4)


def test_named_exchange_rabi_energy():
    scen = named_model("two-qubit-exchange")
    traj = run_scenario(scen)
    t = traj.records["t"]
    assert np.allclose(traj.records["energy"], np.sin(0.1 * t) ** 2, atol=1e-12)


def test_named_pumping_charges():
    traj = run_scenario(named_model("qubit-pumping"))
    e = traj.records["energy"]
    # rate equation from |g>: excited population (1 - exp(-gamma t)), energy above ground = population
    assert np.allclose(e, 1 - np.exp(-traj.records["t"]), atol=1e-7)
    assert np.all(np.diff(e) > 0)


def test_named_dephasing_stationary():
    traj = run_scenario(named_model("qubit-dephasing"))
    for col in ("energy", "entropy", "W_max", "P_direct", "sigma_F", "qfi"):
        vals = traj.records[col]
        assert np.allclose(vals, vals[0], atol=1e-12), col


def test_named_params_override():
    model, _ = build_named("qubit-amplitude-damping", {"gamma": 0.25})
    assert model.channels[0][0] == 0.25
    with pytest.raises(ValueError):
        build_named("qubit-amplitude-damping", {"g": 1.0})


# --- config documents --------------------------------------------------------------------


def test_load_minimal_open():
    scen = load_scenario(MINIMAL_OPEN)
    assert scen.kind == "open" and scen.beta == 1.0
    assert scen.times == {"t_start": 0.0, "t_end": 5.0, "n_samples": 101}
    assert scen.regularization["mode"] == "support-truncate"
    assert scen.model["params"] == {"omega": 1.0, "gamma": 1.0}


def test_load_negative_beta():
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL_OPEN + "beta: -1\n")
    assert "beta" in str(info.value) and "> 0" in str(info.value)


@pytest.mark.parametrize(
    "extra,key",
    [
        ("colour: blue\n", "colour"),
        ("times: {n_samples: 1}\n", "times.n_samples"),
        ("times: {t_start: 2, t_end: 1}\n", "times.t_end"),
        ("times: {t_start: -1}\n", "times.t_start"),
        ("regularization: {mode: epsilon-mix}\n", "regularization.epsilon"),
        ("regularization: {mode: epsilon-mix, epsilon: 1.5}\n", "regularization.epsilon"),
        ("regularization: {mode: wild}\n", "regularization.mode"),
        ("seed: -3\n", "seed"),
        ("step: 0\n", "step"),
        ("initial_state: {kind: basis, index: 7}\n", "initial_state.index"),
        ("initial_state: {kind: basis, colour: 1}\n", "initial_state.colour"),
        ("rank_tol: nope\n", "rank_tol"),
    ],
)
def test_load_rejections_name_the_field(extra, key):
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL_OPEN + extra)
    assert key in str(info.value)


def test_load_kind_model_mismatch():
    with pytest.raises(ConfigError, match="model.name"):
        load_scenario("kind: closed\nmodel: {name: qubit-dephasing}\n")


def test_load_parse_error_has_position():
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        load_scenario("kind: open\nmodel: [unclosed\n")


def test_load_explicit_matrices():
    doc = """
kind: open
beta: 2.0
model:
  hamiltonian: {re: [[0.5, 0], [0, -0.5]]}
  channels:
    - gamma: 0.3
      operator: {re: [[0, 0], [1, 0]]}
initial_state:
  kind: matrix
  matrix: {re: [[0.5, 0], [0, 0.5]], im: [[0, 0.1], [-0.1, 0]]}
times: {t_end: 1.0, n_samples: 11}
"""
    scen = load_scenario(doc)
    model = scen.lindblad_model
    assert model.channels[0][0] == 0.3
    assert np.allclose(scen.initial_density().data, [[0.5, 0.1j], [-0.1j, 0.5]])


def test_load_explicit_closed_and_random():
    H = [[0.0] * 4 for _ in range(4)]
    doc = {
        "kind": "closed",
        "model": {
            "dims": [2, 1, 1, 2],
            "h0": {"re": np.diag([1.0, 0.0, 0.0, -1.0]).tolist()},
            "v": {"re": H},
            "battery_hamiltonian": {"re": [[0.5, 0], [0, -0.5]]},
        },
        "initial_state": {"kind": "random", "rank": 2},
        "seed": 9,
    }
    import yaml

    scen = load_scenario(yaml.safe_dump(doc))
    assert scen.initial_density().rank() == 2
    rand = load_scenario("kind: open\nmodel: {random: {dim: 3, n_channels: 2}}\nseed: 4\n")
    assert rand.lindblad_model.dim == 3
    assert np.array_equal(rand.lindblad_model.H, random_lindblad(3, 2, 1.0, 4).H)


@pytest.mark.parametrize("name", list(NAMED_KIND))
def test_round_trip(name):
    scen = named_model(name)
    again = load_scenario(serialize_scenario(scen))
    assert again == scen
    assert again.digest() == scen.digest()
    assert load_scenario(serialize_scenario(again)) == again


def test_round_trip_with_matrix_state():
    doc = MINIMAL_OPEN + "initial_state: {kind: matrix, matrix: {re: [[0.25, 0], [0, 0.75]]}}\n" \
        "regularization: {mode: epsilon-mix, epsilon: 0.001}\nseed: 18446744073709551615\n"
    scen = load_scenario(doc)
    assert load_scenario(serialize_scenario(scen)) == scen


def test_scenario_is_immutable():
    scen = named_model("qubit-dephasing")
    with pytest.raises(Exception):
        scen.beta = 2.0
