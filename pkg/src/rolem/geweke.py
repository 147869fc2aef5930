"""Joint-distribution ("getting it right") check of the sampler.

Two ways of drawing from the joint law of parameters and data are compared:

* forward: parameters from the prior, then data given parameters;
* successive-conditional: one sampler sweep given the current data, then
  fresh data given the new parameters, repeated.

If every conditional update is correct both produce the same marginal law,
so the means of any scalar summary must agree up to Monte Carlo error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .corrstruct import CorrelationSpec, corr_matrix
from .grassmann import basis_from_span, sample_langevin
from .matvar import InvWishartParams, MatNormalParams, invwishart_sample, mn_sample
from .model import LongitudinalDataset, ParameterState
from .sampler import PriorSpec, RolemSampler, TuningSpec
from .inference import effective_sample_size

__all__ = ["GewekeSetup", "GewekeResult", "sample_prior", "simulate_responses", "summaries", "geweke_test"]


@dataclass
class GewekeSetup:
    r: int = 3
    p: int = 2
    u: int = 1
    n: int = 5
    J: int = 2
    corr_kind: str = "ar1"
    error_model: str = "t"

    def prior(self) -> PriorSpec:
        """A proper prior with enough moments for stable Monte Carlo comparisons."""
        r, p, u = self.r, self.p, self.u
        return PriorSpec(
            xi=np.zeros((r, p)),
            h=np.eye(p),
            k=u + 6.0,
            psi=4.0 * np.eye(u),
            k0=r - u + 6.0,
            psi0=4.0 * np.eye(r - u),
            m_prior=np.diag(np.linspace(1.0, 0.0, r)),
            a=6.0,
            b=1.0,
            error_model=self.error_model,
            alpha_cov=np.eye(r),
        )


@dataclass
class GewekeResult:
    names: list
    forward_mean: np.ndarray
    chain_mean: np.ndarray
    z: np.ndarray
    pvalues: np.ndarray
    threshold: float
    n_forward: int
    n_rounds: int

    @property
    def passed(self) -> bool:
        return bool(np.all(self.pvalues > self.threshold))

    def report(self) -> str:
        lines = [f"{'summary':<14}{'forward':>11}{'chain':>11}{'z':>8}{'p':>9}"]
        for nm, f, c, z, pv in zip(self.names, self.forward_mean, self.chain_mean, self.z, self.pvalues):
            lines.append(f"{nm:<14}{f:>11.4f}{c:>11.4f}{z:>8.2f}{pv:>9.4f}")
        return "\n".join(lines)


def _truncated_gamma(a, b, rng, lower=2.0):
    while True:
        nu = rng.gamma(a, 1.0 / b)
        if nu > lower:
            return float(nu)


def sample_prior(setup: GewekeSetup, prior: PriorSpec, frame, rng) -> ParameterState:
    r, p, u, n = setup.r, setup.p, setup.u, setup.n
    proj = sample_langevin(prior.m_prior, u, rng)
    basis = basis_from_span(proj.basis(), frame)
    omega = invwishart_sample(InvWishartParams(prior.k, prior.psi), rng)
    omega0 = invwishart_sample(InvWishartParams(prior.k0, prior.psi0), rng)
    eta = mn_sample(MatNormalParams(basis.gamma.T @ prior.xi, omega, np.linalg.inv(prior.h)), rng)
    alpha = np.linalg.cholesky(prior.alpha_cov) @ rng.standard_normal(r)
    rho = float(rng.uniform()) if setup.corr_kind != "uncor" else 0.0
    if setup.error_model == "t":
        nu = _truncated_gamma(prior.a, prior.b, rng)
        tau = rng.gamma(0.5 * nu, 2.0 / nu, size=n)
    else:
        nu, tau = np.inf, np.ones(n)
    return ParameterState(alpha=alpha, eta=eta, basis=basis, omega=omega, omega0=omega0, rho=rho, nu=nu, tau=tau)


def simulate_responses(state: ParameterState, X, corr_kind: str, rng) -> LongitudinalDataset:
    """Draw ``Y_i ~ MN(alpha 1^T + beta X_i, Sigma / tau_i, R(rho))`` for every subject."""
    g, g0 = state.gamma, state.gamma0
    sigma = g @ state.omega @ g.T + g0 @ state.omega0 @ g0.T
    L = np.linalg.cholesky(0.5 * (sigma + sigma.T))
    n, p, J = X.shape
    B = np.linalg.cholesky(corr_matrix(CorrelationSpec(corr_kind, state.rho), J))
    z = rng.standard_normal((n, L.shape[0], J)) / np.sqrt(state.tau)[:, None, None]
    beta = g @ state.eta
    Y = state.alpha[None, :, None] + np.matmul(beta, X) + np.matmul(np.matmul(L, z), B.T)
    return LongitudinalDataset.from_arrays(Y, X)


def summary_names(setup: GewekeSetup) -> list:
    r, p = setup.r, setup.p
    names = [f"alpha[{i + 1}]" for i in range(r)]
    names += [f"beta[{i + 1},{j + 1}]" for i in range(r) for j in range(p)]
    names += [f"alpha[{i + 1}]^2" for i in range(r)]
    names += [f"beta[{i + 1},{j + 1}]^2" for i in range(r) for j in range(p)]
    if setup.corr_kind != "uncor":
        names.append("rho")
    if setup.error_model == "t":
        names += ["nu", "mean tau"]
    names += [f"log eig{i + 1}(Sigma)" for i in range(r)]
    names += [f"P[{i + 1},{i + 1}]" for i in range(r)]
    return names


def summaries(state: ParameterState, setup: GewekeSetup) -> np.ndarray:
    g, g0 = state.gamma, state.gamma0
    beta = (g @ state.eta).ravel()
    sigma = g @ state.omega @ g.T + g0 @ state.omega0 @ g0.T
    out = [state.alpha, beta, state.alpha ** 2, beta ** 2]
    if setup.corr_kind != "uncor":
        out.append([state.rho])
    if setup.error_model == "t":
        out.append([state.nu, state.tau.mean()])
    out.append(np.log(np.linalg.eigvalsh(0.5 * (sigma + sigma.T))))
    out.append(np.diag(g @ g.T))
    return np.concatenate([np.ravel(o) for o in out])


def geweke_test(setup: GewekeSetup | None = None, n_forward: int = 10_000, n_rounds: int = 10_000,
                alpha: float = 0.01, seed: int = 0, tuning: TuningSpec | None = None,
                prior: PriorSpec | None = None) -> GewekeResult:
    """Compare forward and successive-conditional means of every summary.

    The z statistic uses the ESS of each successive-conditional series; the
    per-summary two-sided p-values are compared with ``alpha / K`` (Bonferroni
    over the K summaries).
    """
    setup = setup or GewekeSetup()
    prior = prior or setup.prior()
    prior.validate(setup.r, setup.p, setup.u)
    tuning = tuning or TuningSpec(delta_rho=0.3, delta_nu=3.0, sigma2_p=0.5, autotune=False)
    rng = np.random.default_rng(seed)
    frame = np.eye(setup.r)
    X = rng.standard_normal((setup.n, setup.p, setup.J))

    fwd = np.empty((n_forward, len(summary_names(setup))))
    for m in range(n_forward):
        fwd[m] = summaries(sample_prior(setup, prior, frame, rng), setup)

    state = sample_prior(setup, prior, frame, rng)
    data = simulate_responses(state, X, setup.corr_kind, rng)
    sampler = RolemSampler(data, setup.u, setup.corr_kind, prior, tuning, state, rng)
    chain = np.empty((n_rounds, fwd.shape[1]))
    for t in range(n_rounds):
        sampler.sweep()
        sampler.set_data(simulate_responses(sampler.state, X, setup.corr_kind, rng))
        chain[t] = summaries(sampler.state, setup)

    fm, cm = fwd.mean(axis=0), chain.mean(axis=0)
    ess = np.array([effective_sample_size(chain[:, k]) for k in range(chain.shape[1])])
    se = np.sqrt(fwd.var(axis=0, ddof=1) / n_forward + chain.var(axis=0, ddof=1) / ess)
    z = (fm - cm) / se
    pv = 2.0 * sps.norm.sf(np.abs(z))
    return GewekeResult(summary_names(setup), fm, cm, z, pv, alpha / len(z), n_forward, n_rounds)
