import numpy as np
import pytest

from rolem.grassmann import basis_from_coord
from rolem.model import LongitudinalDataset, ParameterState, assemble
from rolem.sampler import ChainOutput, TuningSpec
from rolem.simgen import SimDesign, generate


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T / d + 0.5 * np.eye(d))


def random_state(rng, r, p, u, n, rho=0.4, nu=5.0, frame=None):
    frame = np.eye(r) if frame is None else frame
    basis = basis_from_coord(rng.uniform(-1, 1, size=(r - u, u)), frame)
    return ParameterState(
        alpha=rng.standard_normal(r),
        eta=rng.standard_normal((u, p)),
        basis=basis,
        omega=random_spd(rng, u),
        omega0=random_spd(rng, r - u),
        rho=rho,
        nu=nu,
        tau=rng.gamma(2.0, 0.5, size=n),
    )


def fixed_chain(state, n, s=25, corr_kind="ar1", error_model="t", pointwise=None):
    """A ChainOutput that repeats one parameter state ``s`` times."""
    asm = assemble(state)
    rep = lambda a: np.repeat(np.asarray(a, dtype=float)[None], s, axis=0)
    pw = np.zeros((s, n)) if pointwise is None else pointwise
    return ChainOutput(
        alpha=rep(state.alpha), eta=rep(state.eta), a_coord=rep(state.basis.a_coord),
        gamma=rep(state.gamma), gamma0=rep(state.gamma0), omega=rep(state.omega), omega0=rep(state.omega0),
        beta=rep(asm.beta), sigma_eps=rep(asm.sigma_eps), rho=np.full(s, state.rho), nu=np.full(s, state.nu),
        tau=rep(np.ones(n)), loglik=pw.sum(axis=1), pointwise=pw,
        accept={"nu": (0, 0), "P": (0, 0), "rho": (0, 0)}, accept_burnin={"nu": (0, 0), "P": (0, 0), "rho": (0, 0)},
        frame=state.basis.frame, u=state.u, corr_kind=corr_kind, error_model=error_model, tuning=TuningSpec(),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def small_sim():
    return generate(SimDesign(r=4, p=3, u=2, n=40, J=4, seed=11))


@pytest.fixture
def unbalanced(rng):
    r, p = 3, 2
    js = [1, 3, 2, 4, 3]
    ys = [rng.standard_normal((r, j)) for j in js]
    xs = [rng.standard_normal((p, j)) for j in js]
    return LongitudinalDataset(ys, xs)
