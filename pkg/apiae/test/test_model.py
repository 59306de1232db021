import numpy as np
import pytest
from scipy import special
from scipy import stats
from apiae import graph
from apiae import helpers
from apiae import model as model_mod
from apiae.exceptions import NonFiniteError, ShapeError
from apiae.inference import ControlSchedule
from apiae.model import (
    LatentModel,
    QuadraticCost,
    StateCost,
    LocallyLinearDynamics,
)


def tiny_model(decoder="mlp", M=3, seed=0):
    return LatentModel(2, 2, 3, 4, 0.1, M=M, hidden=5, decoder=decoder, seed=seed)


def test_mixture_sums_to_one():
    m = tiny_model(M=5)
    rng = np.random.default_rng(0)
    for z in 10 * rng.standard_normal((20, 2)):
        alpha = model_mod.mixture_weights(m, z)
        assert alpha.shape == (5,)
        assert abs(alpha.sum() - 1) < 1e-12
        assert np.all(alpha >= 0)


def test_single_component_is_linear():
    m = tiny_model(M=1)
    A = m.dynamics.params["dynamics.A"][0]
    c = np.array([0.3, -0.2])
    m.dynamics.params["dynamics.c"][0] = c
    z = np.array([1.5, -0.5])
    assert np.allclose(model_mod.drift(m, z), A @ z + c)
    assert np.allclose(model_mod.diffusion(m, z), m.dynamics.params["dynamics.B"][0])


def test_batched_drift_matches_single():
    m = tiny_model(M=4)
    Z = np.random.default_rng(1).standard_normal((6, 2))
    tape = graph.Tape()
    batch = m.dynamics.drift(m.bind(tape, constant=True), tape.constant(Z)).value
    assert batch.shape == (6, 2)
    for z, row in zip(Z, batch):
        assert np.allclose(model_mod.drift(m, z), row)


def test_diffuse_matches_diffusion_matrix():
    m = tiny_model(M=3)
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((4, 2))
    V = rng.standard_normal((4, 2))
    tape = graph.Tape()
    P = m.bind(tape, constant=True)
    out = m.dynamics.diffuse(P, tape.constant(Z), tape.constant(V)).value
    for z, v, row in zip(Z, V, out):
        assert np.allclose(model_mod.diffusion(m, z) @ v, row)


def test_sixteen_component_drift_and_diffusion_match_mixture_sum():
    m = LatentModel(3, 2, 4, 4, 0.1, M=16, hidden=5, seed=3)
    params = m.dynamics.params
    rng = np.random.default_rng(4)
    params["dynamics.c"][:] = rng.standard_normal((16, 3))
    params["dynamics.mixer_b"][:] = rng.standard_normal(16)
    for z in 2 * rng.standard_normal((5, 3)):
        alpha = special.softmax(params["dynamics.mixer_W"] @ z + params["dynamics.mixer_b"])
        f = sum(a * (A @ z + c) for a, A, c in zip(alpha, params["dynamics.A"], params["dynamics.c"]))
        sigma = sum(a * B for a, B in zip(alpha, params["dynamics.B"]))
        assert np.allclose(model_mod.mixture_weights(m, z), alpha, atol=1e-14)
        assert np.allclose(model_mod.drift(m, z), f, atol=1e-12)
        assert np.allclose(model_mod.diffusion(m, z), sigma, atol=1e-12)


def test_opposite_components_cancel():
    m = tiny_model(M=2)
    params = m.dynamics.params
    params["dynamics.A"][:] = [np.eye(2), -np.eye(2)]
    params["dynamics.c"][:] = 0.0
    params["dynamics.mixer_W"][:] = 0.0
    params["dynamics.mixer_b"][:] = 0.0
    for z in np.random.default_rng(5).standard_normal((4, 2)):
        assert np.allclose(model_mod.drift(m, z), 0.0, atol=1e-14)


def test_dominant_mixer_bias_selects_one_component():
    m = tiny_model(M=3)
    params = m.dynamics.params
    params["dynamics.mixer_W"][:] = 0.0
    params["dynamics.mixer_b"][:] = [0.0, 40.0, 5.0]
    z = np.array([0.7, -1.2])
    assert np.allclose(model_mod.diffusion(m, z), params["dynamics.B"][1], atol=1e-12)
    A, c = params["dynamics.A"][1], params["dynamics.c"][1]
    assert np.allclose(model_mod.drift(m, z), A @ z + c, atol=1e-12)


def test_obs_loglik_matches_scipy():
    m = tiny_model(decoder="linear")
    m.decoder.params["decoder.log_std"] = np.array([0.1, -0.3, 0.5])
    z = np.array([0.4, -1.0])
    x = np.array([0.2, 0.1, -0.4])
    p = m.decoder.params
    expected = stats.multivariate_normal(
        p["decoder.C"] @ z + p["decoder.b"], np.diag(np.exp(2 * p["decoder.log_std"]))
    ).logpdf(x)
    assert np.isclose(model_mod.obs_loglik(m, x, z), expected)


def test_mlp_decoder_shapes():
    m = tiny_model()
    tape = graph.Tape()
    P = m.bind(tape)
    mean, log_std = m.decoder.moments(P, tape.constant(np.zeros((7, 2))))
    assert mean.shape == (7, 3)
    assert log_std.shape == (7, 3)


def test_init_logratio_is_zero_when_q0_is_prior():
    m = tiny_model()
    z0 = np.array([0.3, -0.7])
    assert abs(model_mod.init_logratio(m.prior, m.prior.mean, m.prior.chol, z0)) < 1e-12


def test_set_params_rejects_wrong_shape():
    m = tiny_model()
    with pytest.raises(ShapeError):
        m.set_params({"dynamics.A": np.zeros((1, 1))})


def _zero_schedule(tape, m, steps=None):
    steps = m.K - 1 if steps is None else steps
    return ControlSchedule.zeros(tape, steps, m.d_u, m.d_z)


def test_rollout_is_deterministic_given_noise():
    m = tiny_model()
    rng = np.random.default_rng(3)
    noise = {"eps0": rng.standard_normal(2), "dw": 0.3 * rng.standard_normal((3, 2))}
    x = rng.standard_normal((4, 3))
    paths = []
    for _ in range(2):
        tape = graph.Tape()
        q0 = (np.zeros(2), np.eye(2))
        paths.append(
            model_mod.rollout(m, q0, _zero_schedule(tape, m), StateCost.learning(x), noise)
        )
    assert np.array_equal(paths[0].states, paths[1].states)
    assert paths[0].action == paths[1].action
    assert paths[0].states.shape == (4, 2)
    assert np.array_equal(paths[0].noise, noise["dw"])


def test_action_by_hand():
    # one step, M=1, u=0 feed-forward plus a constant control
    m = LatentModel(1, 1, 1, 2, 0.5, M=1, decoder="linear", seed=0)
    m.dynamics.params["dynamics.A"][:] = -0.2
    m.dynamics.params["dynamics.B"][:] = 0.7
    m.decoder.params["decoder.C"][:] = 1.3
    x = np.array([[0.4], [-0.1]])
    eps0 = np.array([0.8])
    dw = np.array([[0.25]])
    u = 0.6

    tape = graph.Tape()
    schedule = ControlSchedule.from_arrays(tape, [[u]], np.zeros((1, 1, 1)))
    path = model_mod.rollout(
        m, (np.zeros(1), np.eye(1)), schedule, StateCost.learning(x), {"eps0": eps0, "dw": dw}
    )

    z0 = 0.8
    z1 = z0 + (-0.2 * z0) * 0.5 + 0.7 * (u * 0.5 + 0.25)
    loglik = lambda xk, z: stats.norm(1.3 * z, 1.0).logpdf(xk)
    expected = (
        -loglik(0.4, z0)
        - loglik(-0.1, z1)
        + 0.5 * u**2 * 0.5
        + u * 0.25
    )
    assert np.allclose(path.states[:, 0], [z0, z1])
    assert np.isclose(path.action, expected)


def test_simulate_shapes_and_bookkeeping():
    m = tiny_model()
    rng = np.random.default_rng(4)
    L = 5
    x = rng.standard_normal((4, 3))
    tape = graph.Tape()
    P = m.bind(tape)
    q0 = (tape.constant(np.zeros(2)), tape.constant(np.eye(2)))
    out = model_mod.simulate(
        m,
        P,
        q0,
        _zero_schedule(tape, m),
        StateCost.learning(x),
        rng.standard_normal((L, 2)),
        np.sqrt(0.1) * rng.standard_normal((3, L, 2)),
    )
    assert out.L == L
    assert len(out.states) == 4
    assert len(out.controls) == 3
    assert out.action.shape == (L,)
    # with q0 = p0, the action is state cost plus control cost
    assert np.allclose(out.action.value, out.state_cost.value + out.control_cost.value)
    assert np.allclose(out.control_cost.value, 0)


def test_simulate_rejects_bad_noise_shape():
    m = tiny_model()
    tape = graph.Tape()
    P = m.bind(tape)
    q0 = (tape.constant(np.zeros(2)), tape.constant(np.eye(2)))
    with pytest.raises(ShapeError):
        model_mod.simulate(
            m, P, q0, _zero_schedule(tape, m), StateCost.learning(np.zeros((4, 3))),
            np.zeros((3, 2)), np.zeros((3, 4, 2)),
        )
    with pytest.raises(ShapeError):
        model_mod.simulate(
            m, P, q0, _zero_schedule(tape, m), StateCost.learning(np.zeros((5, 3))),
            np.zeros((3, 2)), np.zeros((3, 3, 2)),
        )


def test_simulate_reports_failing_step():
    m = LatentModel(1, 1, 1, 4, 1.0, M=1, decoder="linear")
    m.dynamics.params["dynamics.A"][:] = 1e200
    tape = graph.Tape()
    P = m.bind(tape)
    q0 = (tape.constant(np.zeros(1)), tape.constant(np.eye(1)))
    with pytest.raises(NonFiniteError) as e:
        model_mod.simulate(
            m, P, q0, _zero_schedule(tape, m), StateCost.learning(np.zeros((4, 1))),
            np.ones((2, 1)), np.ones((3, 2, 1)),
        )
    assert e.value.step is not None and e.value.step >= 1


def test_planning_cost_only_where_given():
    m = tiny_model()
    target = np.array([1.0, 0.0, -1.0])
    cost = StateCost.planning({3: QuadraticCost(target, weight=2.0)}, temperature=0.5)
    assert cost.mode == "planning"
    tape = graph.Tape()
    P = m.bind(tape, constant=True)
    Z = tape.constant(np.zeros((2, 2)))
    assert cost.at(m, P, 0, Z) is None
    assert cost.at(m, P, 1, Z) is None
    value = cost.at(m, P, 2, Z).value
    mean = m.decode(P, Z).value
    assert np.allclose(value, 0.5 * 2.0 * np.sum((mean - target) ** 2, axis=1))


def test_state_cost_needs_one_source():
    with pytest.raises(ValueError):
        StateCost()
    with pytest.raises(ValueError):
        StateCost(observations=np.zeros((2, 1)), costs={})


def test_dynamics_params_are_namespaced():
    d = LocallyLinearDynamics(2, 2, M=3)
    assert all(k.startswith("dynamics.") for k in d.params)
    assert d.params["dynamics.A"].shape == (3, 2, 2)
    assert d.params["dynamics.B"].shape == (3, 2, 2)


def test_init_logratio_matches_gaussians():
    m = tiny_model()
    mean = np.array([0.5, -0.5])
    chol = np.array([[0.7, 0.0], [0.2, 1.1]])
    z0 = np.array([0.1, 0.2])
    q = stats.multivariate_normal(mean, chol @ chol.T).logpdf(z0)
    p = stats.multivariate_normal(np.zeros(2), np.eye(2)).logpdf(z0)
    assert np.isclose(model_mod.init_logratio(m.prior, mean, chol, z0), q - p)
    assert np.isclose(helpers.gaussian_logpdf(z0, mean, chol), q)
