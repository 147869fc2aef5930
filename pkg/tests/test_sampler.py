import numpy as np
import pytest

from rolem.errors import InvalidParameterError, NumericalError
from rolem.grassmann import principal_angles
from rolem.inference import frobenius_error
from rolem.sampler import (
    PriorSpec,
    TuningSpec,
    initialize,
    make_frame,
    reflect_nu,
    reflect_rho,
    refresh_frame,
    run_chain,
)
from rolem.simgen import SimDesign, generate

from oracles import conditional_spreads, oracle_problem

TOL = 1e-8


@pytest.mark.parametrize("corr_kind", ["uncor", "cs", "ar1"])
@pytest.mark.parametrize("error_model", ["t", "normal"])
def test_conditionals_match_joint_posterior(corr_kind, error_model):
    spreads = conditional_spreads(7, corr_kind=corr_kind, error_model=error_model)
    assert max(spreads.values()) < TOL, spreads


def test_alpha_conditional_with_proper_prior():
    spreads = conditional_spreads(9, alpha_prior=True)
    assert spreads["alpha"] < TOL


def _draw_moments(draw, get, n=20000):
    xs = []
    for _ in range(n):
        draw()
        xs.append(np.ravel(get()).copy())
    xs = np.array(xs)
    return xs.mean(axis=0), np.cov(xs.T)


def test_eta_draws_follow_their_conditional():
    s, _ = oracle_problem(1)
    mean, row, col = s.eta_conditional()
    m, c = _draw_moments(s.gibbs_eta, lambda: s.state.eta)
    assert np.allclose(m, mean.ravel(), atol=0.03)
    assert np.allclose(c, np.kron(row, col), atol=0.03 * np.abs(np.kron(row, col)).max())


def test_alpha_draws_follow_their_conditional():
    s, _ = oracle_problem(2)
    mean, cov = s.alpha_conditional()
    m, c = _draw_moments(s.gibbs_alpha, lambda: s.state.alpha)
    assert np.allclose(m, mean, atol=0.05 * np.sqrt(np.diag(cov)).max() + 1e-3)
    assert np.allclose(c, cov, atol=0.05 * np.abs(cov).max())


def test_omega_draws_follow_their_conditional():
    s, _ = oracle_problem(3)
    dof, scale = s.omega_conditional()
    m, _ = _draw_moments(s.gibbs_omega, lambda: s.state.omega, n=20000)
    want = scale / (dof - scale.shape[0] - 1)
    assert np.allclose(m, want.ravel(), rtol=0.05, atol=0.02 * np.abs(want).max())


def test_tau_draws_follow_their_conditional():
    s, _ = oracle_problem(4)
    shape, rate = s.tau_conditional()
    m, _ = _draw_moments(s.gibbs_tau, lambda: s.state.tau, n=20000)
    assert np.allclose(m, shape / rate, rtol=0.03)


def test_reflections():
    assert reflect_rho(-0.2) == pytest.approx(0.2)
    assert reflect_rho(1.3) == pytest.approx(0.7)
    assert reflect_rho(0.4) == pytest.approx(0.4)
    assert reflect_nu(1.5) == pytest.approx(2.5)
    assert reflect_nu(7.0) == 7.0


def test_prior_and_tuning_validation():
    pr = PriorSpec.default(4, 3, 2)
    pr.validate(4, 3, 2)
    assert pr.k == 3 and pr.k0 == 3 and pr.a == 1.4 and pr.b == 0.04
    with pytest.raises(InvalidParameterError):
        pr.validate(5, 3, 2)
    bad = PriorSpec.default(4, 3, 2)
    bad.psi = -np.eye(2)
    with pytest.raises(InvalidParameterError):
        bad.validate(4, 3, 2)
    with pytest.raises(InvalidParameterError):
        TuningSpec(delta_rho=1.5).validate()
    with pytest.raises(InvalidParameterError):
        TuningSpec(sigma2_p=0.0).validate()
    assert PriorSpec.from_dict(pr.to_dict()).to_dict() == pr.to_dict()


def test_initialize_and_frames(small_sim):
    ds, truth = small_sim
    state, frames = initialize(ds, 2, "ar1")
    assert 0.001 <= state.rho <= 0.999
    assert state.nu == 10.0 and np.all(state.tau == 1.0)
    q = frames["qr"]
    assert np.allclose(q.T @ q, np.eye(4), atol=1e-12)
    assert np.array_equal(frames["used"], q)
    with pytest.raises(InvalidParameterError):
        initialize(ds, 4, "ar1")
    with pytest.raises(InvalidParameterError):
        make_frame(np.ones((4, 4)), 4)


@pytest.fixture(scope="module")
def short_chain(small_sim):
    ds, _ = small_sim
    return run_chain(ds, 2, "ar1", tuning=TuningSpec(burn_in=600, n_samples=400, seed=5))


def test_chain_shapes_and_bookkeeping(short_chain, small_sim):
    ds, _ = small_sim
    ch = short_chain
    assert ch.n_draws == 400 and ch.r == 4 and ch.p == 3 and ch.n == ds.n
    assert ch.beta.shape == (400, 4, 3) and ch.pointwise.shape == (400, ds.n)
    assert np.allclose(ch.loglik, ch.pointwise.sum(axis=1))
    for b, (acc, tot) in ch.accept.items():
        assert 0 <= acc <= tot == 400
    assert set(ch.scalar_draws()) >= {"rho", "nu", "beta[1,1]", "sigma_eps[4,4]"}
    assert np.all((ch.rho > 0) & (ch.rho < 1)) and np.all(ch.nu > 2)


def test_envelope_structure_holds_in_every_draw(short_chain):
    ch = short_chain
    for s in range(0, ch.n_draws, 50):
        P = ch.gamma[s] @ ch.gamma[s].T
        assert np.allclose((np.eye(4) - P) @ ch.beta[s], 0.0, atol=1e-10)


def test_autotune_lands_in_band(short_chain):
    rates = short_chain.acceptance_rates()
    for block in ("nu", "P", "rho"):
        assert 0.1 < rates[block] < 0.65, rates


def test_posterior_recovers_truth(short_chain, small_sim):
    _, truth = small_sim
    ch = short_chain
    assert frobenius_error(ch.beta.mean(axis=0), truth.beta) < 0.25 * np.linalg.norm(truth.beta)
    assert principal_angles(ch.gamma.mean(axis=0), truth.gamma).max() < 0.3
    assert abs(ch.rho.mean() - truth.rho) < 0.15


def test_same_seed_same_chain(small_sim):
    ds, _ = small_sim
    tn = TuningSpec(burn_in=50, n_samples=30, seed=3)
    a = run_chain(ds, 2, "cs", tuning=tn)
    b = run_chain(ds, 2, "cs", tuning=tn)
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.pointwise, b.pointwise)
    c = run_chain(ds, 2, "cs", tuning=TuningSpec(burn_in=50, n_samples=30, seed=4))
    assert not np.array_equal(a.beta, c.beta)


def test_normal_mode_pins_tau(small_sim):
    ds, _ = small_sim
    pr = PriorSpec.default(4, 3, 2, error_model="normal")
    ch = run_chain(ds, 2, "ar1", pr, TuningSpec(burn_in=30, n_samples=30, seed=1))
    assert np.all(ch.tau == 1.0) and np.all(np.isinf(ch.nu))
    assert "nu" not in ch.scalar_draws()
    assert ch.accept["nu"] == (0, 0)


def test_uncorrelated_fit_has_no_rho(small_sim):
    ds, _ = small_sim
    ch = run_chain(ds, 2, "uncor", tuning=TuningSpec(burn_in=20, n_samples=20, seed=1))
    assert "rho" not in ch.scalar_draws() and np.all(ch.rho == 0.0)


def test_refresh_frame_is_orthogonal(short_chain, small_sim):
    f = refresh_frame(short_chain)
    assert np.allclose(f.T @ f, np.eye(4), atol=1e-12)
    ds, _ = small_sim
    ch = run_chain(ds, 2, "ar1", frame="refresh", tuning=TuningSpec(burn_in=30, n_samples=30, seed=1))
    assert ch.n_draws == 30


def test_thinning(small_sim):
    ds, _ = small_sim
    ch = run_chain(ds, 2, "ar1", tuning=TuningSpec(burn_in=10, n_samples=40, thin=4, seed=1))
    assert ch.n_draws == 10


def test_numerical_failure_is_raised_with_state(small_sim):
    ds, _ = small_sim
    s, _ = oracle_problem(0)
    s.state.alpha = np.full(s.state.alpha.shape, np.nan)
    with pytest.raises(NumericalError, match="state"):
        s.gibbs_tau()


def test_informative_prior_start_honours_prior_directions():
    from rolem.simgen import structured_a_matrix, structured_gammas, structured_prior_design
    ds, truth = generate(SimDesign(r=8, p=4, u=3, n=15, J=3, seed=2, fixed_A=structured_a_matrix(8)))
    m = structured_prior_design(4, r=8)
    state, _ = initialize(ds, 3, "ar1", m_prior=m)
    # the data term only tilts the start slightly inside a strongly separated prior
    assert principal_angles(state.gamma, structured_gammas(8)).max() < 1e-3
