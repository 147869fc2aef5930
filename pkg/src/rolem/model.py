"""The robust longitudinal envelope model.

Subject ``i`` contributes ``Y_i`` (r x J_i) and ``X_i`` (p x J_i) with

    Y_i | tau_i ~ MN(alpha 1^T + beta X_i, Sigma / tau_i, R_i(rho)),
    beta = Gamma eta,  Sigma = Gamma Omega Gamma^T + Gamma0 Omega0 Gamma0^T,

and ``tau_i ~ Gamma(nu/2, rate=nu/2)`` (t errors) or ``tau_i = 1`` (normal
errors). The latent precision sits on ``Sigma`` so ``R_i`` stays a
correlation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import gammaln

from .corrstruct import CorrelationSpec, corr_inverse_logdet
from .errors import DataError, InvalidParameterError, NumericalError
from .grassmann import EnvelopeBasis

LOG_2PI = np.log(2.0 * np.pi)
ERROR_MODELS = ("t", "normal")

__all__ = [
    "LongitudinalDataset",
    "ParameterState",
    "EnvelopeAssembly",
    "SufficientStats",
    "assemble",
    "precision",
    "delta_i",
    "subject_deltas",
    "pointwise_loglik",
    "loglik_conditional",
    "loglik_marginal",
    "parse_error_model",
]


def parse_error_model(name: str) -> str:
    key = str(name).strip().lower()
    key = {"mt": "t", "student": "t", "rolem": "t", "lem": "normal", "gaussian": "normal"}.get(key, key)
    if key not in ERROR_MODELS:
        raise InvalidParameterError(f"unknown error model {name!r}; expected 't' or 'normal'")
    return key


@dataclass
class _Group:
    J: int
    index: np.ndarray
    Y: np.ndarray  # (n_g, r, J)
    X: np.ndarray  # (n_g, p, J)


@dataclass
class LongitudinalDataset:
    """Per-subject response and covariate matrices; unequal J_i allowed."""

    ys: list
    xs: list
    subject_ids: list | None = None
    groups: list = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.ys) != len(self.xs):
            raise DataError(f"{len(self.ys)} response matrices but {len(self.xs)} covariate matrices")
        if not self.ys:
            raise DataError("dataset has no subjects")
        ys = [np.atleast_2d(np.asarray(y, dtype=float)) for y in self.ys]
        xs = [np.atleast_2d(np.asarray(x, dtype=float)) for x in self.xs]
        r, p = ys[0].shape[0], xs[0].shape[0]
        for i, (y, x) in enumerate(zip(ys, xs)):
            if y.shape[0] != r or x.shape[0] != p:
                raise DataError(f"subject {i}: expected {r} responses and {p} covariates")
            if y.shape[1] != x.shape[1] or y.shape[1] < 1:
                raise DataError(f"subject {i}: Y has {y.shape[1]} columns, X has {x.shape[1]}")
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
                raise DataError(f"subject {i}: non-finite values")
        self.ys, self.xs = ys, xs
        if self.subject_ids is None:
            self.subject_ids = list(range(len(ys)))
        elif len(self.subject_ids) != len(ys):
            raise DataError("subject_ids length does not match number of subjects")
        js = np.array([y.shape[1] for y in ys])
        self.groups = []
        for J in np.unique(js):
            idx = np.flatnonzero(js == J)
            self.groups.append(_Group(int(J), idx, np.stack([ys[i] for i in idx]), np.stack([xs[i] for i in idx])))

    @classmethod
    def from_arrays(cls, Y, X, subject_ids=None):
        """Balanced data: ``Y`` (n, r, J), ``X`` (n, p, J)."""
        return cls(list(np.asarray(Y, dtype=float)), list(np.asarray(X, dtype=float)), subject_ids)

    @property
    def n(self) -> int:
        return len(self.ys)

    @property
    def r(self) -> int:
        return self.ys[0].shape[0]

    @property
    def p(self) -> int:
        return self.xs[0].shape[0]

    @property
    def J(self) -> tuple:
        return tuple(y.shape[1] for y in self.ys)

    @property
    def n_obs(self) -> int:
        return int(sum(self.J))

    def subset(self, index) -> "LongitudinalDataset":
        index = [int(i) for i in index]
        return LongitudinalDataset([self.ys[i] for i in index], [self.xs[i] for i in index],
                                   [self.subject_ids[i] for i in index])

    def stacked(self):
        """All observations as rows: (n_obs, r) responses and (n_obs, p) covariates."""
        return np.concatenate([y.T for y in self.ys]), np.concatenate([x.T for x in self.xs])


@dataclass
class ParameterState:
    alpha: np.ndarray
    eta: np.ndarray
    basis: EnvelopeBasis
    omega: np.ndarray
    omega0: np.ndarray
    rho: float
    nu: float
    tau: np.ndarray

    @property
    def gamma(self):
        return self.basis.gamma

    @property
    def gamma0(self):
        return self.basis.gamma0

    @property
    def projection(self):
        return self.basis.projection

    @property
    def u(self) -> int:
        return self.basis.u

    @property
    def r(self) -> int:
        return self.basis.r

    def copy(self) -> "ParameterState":
        return replace(self, alpha=self.alpha.copy(), eta=self.eta.copy(), omega=self.omega.copy(),
                       omega0=self.omega0.copy(), tau=self.tau.copy())


@dataclass(frozen=True)
class EnvelopeAssembly:
    beta: np.ndarray
    sigma_eps: np.ndarray


def assemble(state: ParameterState) -> EnvelopeAssembly:
    """``beta = Gamma eta`` and ``Sigma = Gamma Omega Gamma^T + Gamma0 Omega0 Gamma0^T``."""
    g, g0 = state.gamma, state.gamma0
    sigma = g @ state.omega @ g.T + g0 @ state.omega0 @ g0.T
    return EnvelopeAssembly(g @ state.eta, 0.5 * (sigma + sigma.T))


def precision(gamma, gamma0, omega, omega0):
    """``Sigma^{-1}`` using the block structure; also returns ``log|Sigma|``."""
    try:
        lo = np.linalg.cholesky(omega)
        lo0 = np.linalg.cholesky(omega0)
    except np.linalg.LinAlgError:
        raise NumericalError("Omega or Omega0 is not positive definite") from None
    wi = gamma @ cho_solve((lo, True), gamma.T)
    wi0 = gamma0 @ cho_solve((lo0, True), gamma0.T)
    s = wi + wi0
    logdet = 2.0 * (np.sum(np.log(np.diag(lo))) + np.sum(np.log(np.diag(lo0))))
    return 0.5 * (s + s.T), float(logdet)


def _chol_inv(sigma):
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NumericalError("Sigma_eps is singular or not positive definite") from None
    inv = cho_solve((L, True), np.eye(sigma.shape[0]))
    return 0.5 * (inv + inv.T), 2.0 * float(np.sum(np.log(np.diag(L))))


def delta_i(y, x, assembly: EnvelopeAssembly, alpha, corr_inv) -> float:
    """``tr(Sigma^{-1} E R^{-1} E^T)`` with ``E = Y - alpha 1^T - beta X``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = y - np.asarray(alpha, dtype=float)[:, None] - assembly.beta @ x
    sinv, _ = _chol_inv(assembly.sigma_eps)
    return float(np.sum((sinv @ e) * (e @ np.asarray(corr_inv, dtype=float))))


def _rinv_table(dataset, corr: CorrelationSpec):
    return {g.J: corr_inverse_logdet(corr, g.J) for g in dataset.groups}


def subject_deltas(dataset, alpha, beta, sigma_inv, corr: CorrelationSpec, rinv=None) -> np.ndarray:
    """Vector of ``Delta_i`` for every subject, in dataset order."""
    rinv = rinv or _rinv_table(dataset, corr)
    out = np.empty(dataset.n)
    for g in dataset.groups:
        e = g.Y - alpha[None, :, None] - np.matmul(beta, g.X)
        ri = rinv[g.J][0]
        out[g.index] = np.einsum("nrj,nrj->n", np.matmul(sigma_inv, e), np.matmul(e, ri))
    return out


def _logdet_r(dataset, corr, rinv=None):
    rinv = rinv or _rinv_table(dataset, corr)
    out = np.empty(dataset.n)
    for g in dataset.groups:
        out[g.index] = rinv[g.J][1]
    return out


def pointwise_loglik(dataset, alpha, beta, sigma_eps, corr: CorrelationSpec, nu=np.inf,
                     error_model="t", rinv=None) -> np.ndarray:
    """Per-subject marginal log density of ``Y_i`` (matrix t or matrix normal)."""
    error_model = parse_error_model(error_model)
    sinv, logdet_s = _chol_inv(np.asarray(sigma_eps, dtype=float))
    return _pointwise(dataset, np.asarray(alpha, float), np.asarray(beta, float), sinv, logdet_s,
                      corr, nu, error_model, rinv)


def _pointwise(dataset, alpha, beta, sinv, logdet_s, corr, nu, error_model, rinv=None):
    rinv = rinv or _rinv_table(dataset, corr)
    deltas = subject_deltas(dataset, alpha, beta, sinv, corr, rinv)
    js = np.asarray(dataset.J, dtype=float)
    r = dataset.r
    base = -0.5 * js * logdet_s - 0.5 * r * _logdet_r(dataset, corr, rinv)
    d = r * js
    if error_model == "normal":
        return base - 0.5 * d * LOG_2PI - 0.5 * deltas
    if not nu > 0:
        raise InvalidParameterError(f"nu must be positive, got {nu}")
    return (base + gammaln(0.5 * (d + nu)) - gammaln(0.5 * nu) - 0.5 * d * np.log(nu * np.pi)
            - 0.5 * (d + nu) * np.log1p(deltas / nu))


def loglik_conditional(dataset, state: ParameterState, corr_kind: str) -> float:
    """Complete-data log-likelihood ``sum_i log MN(Y_i; mu_i, Sigma / tau_i, R_i)``."""
    corr = CorrelationSpec(corr_kind, state.rho)
    asm = assemble(state)
    sinv, logdet_s = _chol_inv(asm.sigma_eps)
    rinv = _rinv_table(dataset, corr)
    deltas = subject_deltas(dataset, state.alpha, asm.beta, sinv, corr, rinv)
    js = np.asarray(dataset.J, dtype=float)
    r = dataset.r
    tau = np.asarray(state.tau, dtype=float)
    terms = (-0.5 * r * js * LOG_2PI - 0.5 * js * (logdet_s - r * np.log(tau))
             - 0.5 * r * _logdet_r(dataset, corr, rinv) - 0.5 * tau * deltas)
    return float(np.sum(terms))


def loglik_marginal(dataset, state: ParameterState, corr_kind: str, error_model: str = "t") -> float:
    """Observed-data log-likelihood with ``tau`` integrated out (ignores ``state.tau``)."""
    corr = CorrelationSpec(corr_kind, state.rho)
    asm = assemble(state)
    return float(np.sum(pointwise_loglik(dataset, state.alpha, asm.beta, asm.sigma_eps, corr,
                                         state.nu, error_model)))


class SufficientStats:
    """Precision-weighted cross products that every conditional needs.

    For weights ``tau`` and correlation ``corr``::

        c1   = sum tau_i 1^T R_i^{-1} 1
        ysum = sum tau_i Y_i R_i^{-1} 1        xsum = sum tau_i X_i R_i^{-1} 1
        syy  = sum tau_i Y_i R_i^{-1} Y_i^T    sxy  = sum tau_i X_i R_i^{-1} Y_i^T
        sxx  = sum tau_i X_i R_i^{-1} X_i^T

    With these, ``sum tau_i E_i R_i^{-1} E_i^T`` for any ``(alpha, beta)`` costs
    O(r^2 p), independent of the number of subjects.
    """

    def __init__(self, dataset: LongitudinalDataset, tau, corr: CorrelationSpec):
        tau = np.asarray(tau, dtype=float)
        r, p = dataset.r, dataset.p
        self.corr = corr
        self.rinv = _rinv_table(dataset, corr)
        self.c1 = 0.0
        self.ysum = np.zeros(r)
        self.xsum = np.zeros(p)
        self.syy = np.zeros((r, r))
        self.sxy = np.zeros((p, r))
        self.sxx = np.zeros((p, p))
        self.logdet_r = 0.0
        for g in dataset.groups:
            ri, ld = self.rinv[g.J]
            w = tau[g.index]
            self.logdet_r += ld * g.index.size
            yr = np.matmul(g.Y, ri) * w[:, None, None]
            xr = np.matmul(g.X, ri) * w[:, None, None]
            self.c1 += float(ri.sum() * w.sum())
            self.ysum += yr.sum(axis=(0, 2))
            self.xsum += xr.sum(axis=(0, 2))
            self.syy += np.tensordot(yr, g.Y, axes=([0, 2], [0, 2]))
            self.sxy += np.tensordot(xr, g.Y, axes=([0, 2], [0, 2]))
            self.sxx += np.tensordot(xr, g.X, axes=([0, 2], [0, 2]))
        self.syy = 0.5 * (self.syy + self.syy.T)
        self.sxx = 0.5 * (self.sxx + self.sxx.T)

    def centered(self, alpha):
        """``(sum tau Yc R^{-1} Yc^T, sum tau X R^{-1} Yc^T)`` with ``Yc = Y - alpha 1^T``."""
        t = np.outer(alpha, self.ysum)
        syc = self.syy - t - t.T + self.c1 * np.outer(alpha, alpha)
        return syc, self.sxy - np.outer(self.xsum, alpha)

    def residual(self, alpha, beta):
        """``sum tau_i E_i R_i^{-1} E_i^T`` with ``E_i = Y_i - alpha 1^T - beta X_i``."""
        syc, sxyc = self.centered(alpha)
        t = beta @ sxyc
        s = syc - t - t.T + beta @ self.sxx @ beta.T
        return 0.5 * (s + s.T)
