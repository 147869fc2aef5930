"""Metropolis-within-Gibbs sampler for the robust longitudinal envelope model.

One sweep updates, in order: ``tau``, ``nu``, ``Omega``, ``Omega0``, ``P``,
``rho``, ``alpha``, ``eta``. ``tau``, ``Omega``, ``Omega0``, ``alpha`` and
``eta`` have closed-form conditionals; ``nu``, ``P`` and ``rho`` use symmetric
random-walk Metropolis steps, so acceptance only involves the target ratio.

Normal-error fits (``error_model="normal"``) pin ``tau = 1`` and skip the
``tau`` and ``nu`` updates; everything else runs through the same code.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln

from .corrstruct import CorrelationSpec, parse_kind
from .errors import FrameError, InvalidParameterError, NumericalError
from .grassmann import basis_from_span, propose_span
from .matvar import InvWishartParams, invwishart_sample
from .model import (
    LongitudinalDataset,
    ParameterState,
    SufficientStats,
    _pointwise,
    parse_error_model,
    precision,
    subject_deltas,
)

log = logging.getLogger(__name__)

BLOCKS = ("nu", "P", "rho")
TUNE_BAND = (0.2, 0.5)
MAX_DELTA_RHO = 0.5

__all__ = [
    "PriorSpec",
    "TuningSpec",
    "ChainOutput",
    "RolemSampler",
    "initialize",
    "make_frame",
    "refresh_frame",
    "run_chain",
    "reflect_rho",
    "reflect_nu",
]


@dataclass
class PriorSpec:
    """Hyperparameters.

    ``eta | Gamma, Omega ~ MN(Gamma^T xi, Omega, H^{-1})``,
    ``Omega ~ IW(k, psi)``, ``Omega0 ~ IW(k0, psi0)``, ``pi(P) ~ etr(M P)``,
    ``rho ~ U(0, 1)``, ``nu ~ Gamma(a, rate=b)`` restricted to ``nu > 2``, and a
    flat prior on ``alpha``. ``alpha_cov`` optionally replaces the flat prior
    by ``N(0, alpha_cov)``; it exists so that the whole prior is proper when
    simulating from it (joint-distribution tests).
    """

    xi: np.ndarray
    h: np.ndarray
    k: float
    psi: np.ndarray
    k0: float
    psi0: np.ndarray
    m_prior: np.ndarray
    a: float = 1.4
    b: float = 0.04
    error_model: str = "t"
    alpha_cov: np.ndarray | None = None

    @classmethod
    def default(cls, r: int, p: int, u: int, scale: float = 1e-3, error_model: str = "t") -> "PriorSpec":
        """Vague defaults: ``xi = 0``, ``H = scale I``, ``k = u + 1``, ``psi = scale I``,
        ``k0 = r - u + 1``, ``psi0 = scale I``, ``M = scale I``, ``a = 1.4``, ``b = 0.04``.

        ``scale=1e-6`` gives the nearly non-informative variant.
        """
        return cls(
            xi=np.zeros((r, p)),
            h=scale * np.eye(p),
            k=u + 1.0,
            psi=scale * np.eye(u),
            k0=r - u + 1.0,
            psi0=scale * np.eye(r - u),
            m_prior=scale * np.eye(r),
            error_model=error_model,
        )

    def validate(self, r: int, p: int, u: int) -> None:
        self.error_model = parse_error_model(self.error_model)
        shapes = {"xi": (r, p), "h": (p, p), "psi": (u, u), "psi0": (r - u, r - u), "m_prior": (r, r)}
        for name, shape in shapes.items():
            val = np.asarray(getattr(self, name), dtype=float)
            if val.shape != shape:
                raise InvalidParameterError(f"prior {name} has shape {val.shape}, expected {shape}")
            setattr(self, name, val)
        if not (self.k > 0 and self.k0 > 0 and self.a > 0 and self.b > 0):
            raise InvalidParameterError("k, k0, a and b must be positive")
        for name in ("psi", "psi0"):
            try:
                np.linalg.cholesky(getattr(self, name))
            except np.linalg.LinAlgError:
                raise InvalidParameterError(f"{name} must be positive definite") from None
        if not np.allclose(self.m_prior, self.m_prior.T, atol=1e-10 * max(1.0, np.abs(self.m_prior).max())):
            raise InvalidParameterError("M must be symmetric")
        if np.linalg.eigvalsh(0.5 * (self.h + self.h.T)).min() < -1e-10:
            raise InvalidParameterError("H must be positive semidefinite")
        if self.alpha_cov is not None:
            self.alpha_cov = np.asarray(self.alpha_cov, dtype=float)
            if self.alpha_cov.shape != (r, r):
                raise InvalidParameterError("alpha_cov must be r x r")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        kw = {}
        for f in fields(cls):
            if f.name in d:
                v = d[f.name]
                kw[f.name] = np.asarray(v, dtype=float) if isinstance(v, list) else v
        return cls(**kw)


@dataclass
class TuningSpec:
    """Random-walk step sizes and chain-length settings.

    ``autotune`` rescales each step size every ``tune_every`` burn-in sweeps
    when the windowed acceptance rate leaves (0.2, 0.5): halve/double, or
    divide/multiply by 10 when the rate is below 0.05 or above 0.9. Tuning is
    frozen once sampling starts.
    """

    delta_rho: float = 0.1
    delta_nu: float = 2.0
    sigma2_p: float = 0.1
    burn_in: int = 1000
    n_samples: int = 2000
    thin: int = 1
    seed: int = 0
    autotune: bool = True
    tune_every: int = 100

    def validate(self) -> None:
        if not (self.delta_rho > 0 and self.delta_nu > 0 and self.sigma2_p > 0):
            raise InvalidParameterError("step sizes must be positive")
        if self.delta_rho > 1:
            raise InvalidParameterError("delta_rho must not exceed 1 (single reflection)")
        if self.burn_in < 0 or self.n_samples < 1 or self.thin < 1 or self.tune_every < 1:
            raise InvalidParameterError("burn_in >= 0, n_samples >= 1, thin >= 1, tune_every >= 1 required")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ChainOutput:
    """Thinned posterior draws plus bookkeeping.

    Array-valued fields carry a leading draw axis. ``pointwise`` holds the
    per-subject marginal log densities used by WAIC; ``loglik`` is their sum.
    """

    alpha: np.ndarray
    eta: np.ndarray
    a_coord: np.ndarray
    gamma: np.ndarray
    gamma0: np.ndarray
    omega: np.ndarray
    omega0: np.ndarray
    beta: np.ndarray
    sigma_eps: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    tau: np.ndarray
    loglik: np.ndarray
    pointwise: np.ndarray
    accept: dict
    accept_burnin: dict
    frame: np.ndarray
    u: int
    corr_kind: str
    error_model: str
    tuning: TuningSpec
    frame_failures: int = 0
    wall_time: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    @property
    def r(self) -> int:
        return self.alpha.shape[1]

    @property
    def p(self) -> int:
        return self.eta.shape[2]

    @property
    def n(self) -> int:
        return self.pointwise.shape[1]

    def acceptance_rates(self) -> dict:
        return {k: (a / t if t else float("nan")) for k, (a, t) in self.accept.items()}

    def scalar_draws(self) -> dict:
        """Flattened parameter draws keyed by column name, in a fixed order."""
        out = {}

        def add_matrix(name, arr):
            for idx in np.ndindex(*arr.shape[1:]):
                label = ",".join(str(i + 1) for i in idx)
                out[f"{name}[{label}]"] = arr[(slice(None),) + idx]

        add_matrix("alpha", self.alpha)
        add_matrix("beta", self.beta)
        add_matrix("sigma_eps", self.sigma_eps)
        add_matrix("eta", self.eta)
        add_matrix("A", self.a_coord)
        add_matrix("omega", self.omega)
        add_matrix("omega0", self.omega0)
        if self.corr_kind != "uncor":
            out["rho"] = self.rho
        if self.error_model == "t":
            out["nu"] = self.nu
        return out


def reflect_rho(x):
    """Fold a proposal back into (0, 1): ``|x|`` below 0, ``2 - x`` above 1."""
    x = np.abs(x)
    return np.where(x > 1.0, 2.0 - x, x)


def reflect_nu(x):
    """Fold a proposal back into (2, inf) via ``4 - x`` below 2."""
    return np.where(x < 2.0, 4.0 - x, x)


def _sign_fixed_qr(m):
    q, r = np.linalg.qr(m, mode="complete")
    d = np.sign(np.diag(r))
    d = np.concatenate([d, np.ones(q.shape[1] - d.size)])
    d[d == 0] = 1.0
    return q * d


def make_frame(kind, r: int, beta0=None) -> np.ndarray:
    """Reference frame: ``"identity"`` or ``"qr"`` (complete QR of ``beta0``)."""
    if isinstance(kind, np.ndarray):
        frame = np.asarray(kind, dtype=float)
        if frame.shape != (r, r) or not np.allclose(frame.T @ frame, np.eye(r), atol=1e-8):
            raise InvalidParameterError("frame must be an r x r orthogonal matrix")
        return frame
    if kind == "identity":
        return np.eye(r)
    if kind == "qr":
        if beta0 is None:
            raise InvalidParameterError("qr frame needs an initial beta estimate")
        return _sign_fixed_qr(np.asarray(beta0, dtype=float))
    raise InvalidParameterError(f"unknown frame kind {kind!r}")


def refresh_frame(chain: ChainOutput) -> np.ndarray:
    """Frame ``(Gamma_hat, Gamma0_hat)`` from posterior means, re-orthonormalized."""
    g = chain.gamma.mean(axis=0)
    g0 = chain.gamma0.mean(axis=0)
    return _sign_fixed_qr(np.hstack([g, g0]))


def _least_squares(dataset: LongitudinalDataset):
    yy, xx = dataset.stacked()
    design = np.hstack([np.ones((xx.shape[0], 1)), xx])
    coef, _, rank, _ = np.linalg.lstsq(design, yy, rcond=None)
    if rank < design.shape[1]:
        warnings.warn("rank-deficient design; least-squares start uses the pseudo-inverse", stacklevel=3)
    return coef[0], coef[1:].T


def _initial_span(beta0, u, m_prior=None):
    """Leading left singular vectors of ``beta0``; with a non-isotropic ``M``,
    the top-u eigenvectors of ``M + beta0 beta0^T / ||beta0||_2^2`` instead, so
    sharply informative prior directions are honoured from the first sweep."""
    if m_prior is not None:
        m = np.asarray(m_prior, dtype=float)
        iso = np.allclose(m, m[0, 0] * np.eye(m.shape[0]), rtol=0.0, atol=1e-12 * max(1.0, np.abs(m).max()))
        if not iso:
            bb = beta0 @ beta0.T
            top = np.linalg.eigvalsh(bb)[-1]
            target = 0.5 * (m + m.T) + (bb / top if top > 0 else 0.0)
            w, v = np.linalg.eigh(target)
            return v[:, np.argsort(w)[::-1][:u]]
    return np.linalg.svd(beta0, full_matrices=True)[0][:, :u]


def initialize(dataset: LongitudinalDataset, u: int, corr_kind: str, frame="qr", error_model: str = "t",
               m_prior=None):
    """Least-squares starting point under a normal working model.

    Returns ``(state, frames)`` where ``frames`` maps candidate names
    (``"identity"``, ``"qr"``) to orthogonal matrices and ``frames["used"]`` is
    the one the state was resolved in. If the requested frame cannot resolve
    the initial subspace, the identity frame is used instead.
    """
    corr_kind = parse_kind(corr_kind)
    error_model = parse_error_model(error_model)
    r, n = dataset.r, dataset.n
    if not 1 <= u < r:
        raise InvalidParameterError(f"envelope dimension must satisfy 1 <= u <= r - 1, got {u}")
    alpha0, beta0 = _least_squares(dataset)
    resid = [y - alpha0[:, None] - beta0 @ x for y, x in zip(dataset.ys, dataset.xs)]
    allres = np.concatenate([e.T for e in resid])
    sigma0 = np.atleast_2d(np.cov(allres, rowvar=False))
    sigma0 = 0.5 * (sigma0 + sigma0.T)
    gamma_init = _initial_span(beta0, u, m_prior)
    frames = {"identity": np.eye(r), "qr": make_frame("qr", r, beta0)}
    chosen = make_frame(frame, r, beta0) if not isinstance(frame, str) or frame not in frames else frames[frame]
    try:
        basis = basis_from_span(gamma_init, chosen)
    except FrameError:
        log.warning("initial subspace not resolvable in requested frame; falling back to identity")
        chosen = frames["identity"]
        basis = basis_from_span(gamma_init, chosen)
    frames["used"] = chosen
    g, g0 = basis.gamma, basis.gamma0
    omega = g.T @ sigma0 @ g
    omega0 = g0.T @ sigma0 @ g0
    if corr_kind == "uncor":
        rho = 0.0
    else:
        sd = np.sqrt(np.diag(sigma0))
        lead, lag = [], []
        for e in resid:
            if e.shape[1] > 1:
                z = e / sd[:, None]
                lead.append(z[:, :-1].ravel())
                lag.append(z[:, 1:].ravel())
        rho = float(np.corrcoef(np.concatenate(lead), np.concatenate(lag))[0, 1]) if lead else 0.5
        rho = float(np.clip(rho if np.isfinite(rho) else 0.5, 0.001, 0.999))
    state = ParameterState(
        alpha=np.asarray(alpha0, dtype=float),
        eta=g.T @ beta0,
        basis=basis,
        omega=0.5 * (omega + omega.T),
        omega0=0.5 * (omega0 + omega0.T),
        rho=rho,
        nu=10.0 if error_model == "t" else np.inf,
        tau=np.ones(n),
    )
    return state, frames


class RolemSampler:
    """Holds one chain's state and performs the individual block updates.

    The ``*_conditional`` methods return the parameters of each closed-form
    conditional and the ``*_logtarget`` methods the unnormalized log density
    of each Metropolis target, so they can be checked independently of the
    random draws.
    """

    def __init__(self, dataset: LongitudinalDataset, u: int, corr_kind: str, prior: PriorSpec,
                 tuning: TuningSpec, state: ParameterState, rng: np.random.Generator):
        self.u = int(u)
        self.corr_kind = parse_kind(corr_kind)
        prior.validate(dataset.r, dataset.p, self.u)
        tuning.validate()
        self.prior = prior
        self.tuning = tuning
        self.t_mode = prior.error_model == "t"
        self.rng = rng
        self.state = state
        self.frame = state.basis.frame
        self.delta_rho = float(tuning.delta_rho)
        self.delta_nu = float(tuning.delta_nu)
        self.sigma2_p = float(tuning.sigma2_p)
        self.accept = {b: [0, 0] for b in BLOCKS}
        self.frame_failures = 0
        if not self.t_mode:
            self.state.tau = np.ones(dataset.n)
            self.state.nu = np.inf
        self.set_data(dataset)

    # ------------------------------------------------------------------ caches
    def set_data(self, dataset: LongitudinalDataset) -> None:
        if dataset.n != self.state.tau.size:
            raise InvalidParameterError("dataset size does not match tau")
        self.dataset = dataset
        self.n_obs = dataset.n_obs
        self._refresh_sigma()
        self._refresh_stats()

    def _corr(self, rho=None):
        return CorrelationSpec(self.corr_kind, self.state.rho if rho is None else rho)

    def _refresh_stats(self):
        self.stats = SufficientStats(self.dataset, self.state.tau, self._corr())

    def _refresh_sigma(self):
        s = self.state
        self.sigma_inv, self.logdet_sigma = precision(s.gamma, s.gamma0, s.omega, s.omega0)
        self.beta = s.gamma @ s.eta

    def _abort(self, what, value):
        s = self.state
        raise NumericalError(
            f"non-finite {what} ({value}); state: alpha={s.alpha}, rho={s.rho}, nu={s.nu}, "
            f"eig(Omega)={np.linalg.eigvalsh(s.omega)}, eig(Omega0)={np.linalg.eigvalsh(s.omega0)}, "
            f"tau range=({s.tau.min():.3g}, {s.tau.max():.3g})"
        )

    # --------------------------------------------------------------------- tau
    def deltas(self) -> np.ndarray:
        s = self.state
        return subject_deltas(self.dataset, s.alpha, self.beta, self.sigma_inv, self._corr(), self.stats.rinv)

    def tau_conditional(self):
        """Shape and rate vectors: ``Gamma((nu + J_i r)/2, (nu + Delta_i)/2)``."""
        nu = self.state.nu
        js = np.asarray(self.dataset.J, dtype=float)
        return 0.5 * (nu + js * self.dataset.r), 0.5 * (nu + self.deltas())

    def gibbs_tau(self) -> None:
        if not self.t_mode:
            return
        shape, rate = self.tau_conditional()
        if not np.all(np.isfinite(rate)):
            self._abort("Delta_i", rate)
        self.state.tau = self.rng.gamma(shape, 1.0 / rate)
        self._refresh_stats()

    # ---------------------------------------------------------------------- nu
    def nu_logtarget(self, nu: float) -> float:
        if not nu > 2.0:
            return -np.inf
        tau = self.state.tau
        n = tau.size
        pr = self.prior
        return float(0.5 * n * nu * np.log(0.5 * nu) - n * gammaln(0.5 * nu)
                     + (0.5 * nu - 1.0) * np.sum(np.log(tau)) - 0.5 * nu * np.sum(tau)
                     + (pr.a - 1.0) * np.log(nu) - pr.b * nu)

    def mh_nu(self) -> bool:
        if not self.t_mode:
            return False
        cur = self.state.nu
        prop = float(reflect_nu(cur + self.rng.uniform(-self.delta_nu, self.delta_nu)))
        return self._mh("nu", self.nu_logtarget(cur), self.nu_logtarget(prop),
                        lambda: setattr(self.state, "nu", prop))

    def _mh(self, block, cur, prop, on_accept) -> bool:
        if not np.isfinite(cur):
            self._abort(f"log target for {block}", cur)
        if np.isnan(prop) or prop == np.inf:
            self._abort(f"proposed log target for {block}", prop)
        self.accept[block][1] += 1
        if np.log(self.rng.uniform()) < prop - cur:
            self.accept[block][0] += 1
            on_accept()
            return True
        return False

    # ------------------------------------------------------------ Omega, Omega0
    def omega_conditional(self):
        """``(dof, scale)`` of the inverse-Wishart conditional of ``Omega``."""
        s, pr = self.state, self.prior
        g = s.gamma
        dev = s.eta - g.T @ pr.xi
        res = self.stats.residual(s.alpha, self.beta)
        scale = pr.psi + dev @ pr.h @ dev.T + g.T @ res @ g
        return pr.k + self.dataset.p + self.n_obs, 0.5 * (scale + scale.T)

    def omega0_conditional(self):
        """``(dof, scale)`` of the inverse-Wishart conditional of ``Omega0``."""
        s, pr = self.state, self.prior
        g0 = s.gamma0
        syc, _ = self.stats.centered(s.alpha)
        scale = pr.psi0 + g0.T @ syc @ g0
        return pr.k0 + self.n_obs, 0.5 * (scale + scale.T)

    def _draw_iw(self, dof, scale, name):
        try:
            return invwishart_sample(InvWishartParams(dof, scale), self.rng)
        except InvalidParameterError:
            raise NumericalError(f"accumulated {name} scale matrix is not positive definite") from None

    def gibbs_omega(self) -> None:
        self.state.omega = self._draw_iw(*self.omega_conditional(), "Omega")
        self._refresh_sigma()

    def gibbs_omega0(self) -> None:
        self.state.omega0 = self._draw_iw(*self.omega0_conditional(), "Omega0")
        self._refresh_sigma()

    # ----------------------------------------------------------------------- P
    def projection_logtarget(self, basis) -> float:
        """``-1/2 sum tau_i Delta_i - 1/2 tr(Omega^{-1} D H D^T) + tr(M P)`` with
        ``D = eta - Gamma^T xi``, evaluated at the basis of a candidate ``P``."""
        s, pr = self.state, self.prior
        g, g0 = basis.gamma, basis.gamma0
        sinv, _ = precision(g, g0, s.omega, s.omega0)
        beta = g @ s.eta
        res = self.stats.residual(s.alpha, beta)
        dev = s.eta - g.T @ pr.xi
        lo = np.linalg.cholesky(s.omega)
        eta_term = np.sum(dev * cho_solve((lo, True), dev @ pr.h))
        return float(-0.5 * np.sum(sinv * res) - 0.5 * eta_term + np.sum(pr.m_prior * (g @ g.T)))

    def mh_projection(self) -> bool:
        s = self.state
        z = propose_span(s.gamma, self.sigma2_p, self.rng)
        try:
            cand = basis_from_span(z, self.frame)
        except FrameError:
            self.frame_failures += 1
            self.accept["P"][1] += 1
            return False

        def accept():
            s.basis = cand
            self._refresh_sigma()

        return self._mh("P", self.projection_logtarget(s.basis), self.projection_logtarget(cand), accept)

    # --------------------------------------------------------------------- rho
    def rho_logtarget(self, rho: float, stats: SufficientStats | None = None) -> float:
        """``-(r/2) sum log|R_i| - 1/2 sum tau_i Delta_i`` as a function of ``rho``."""
        if self.corr_kind != "uncor" and not 0.0 < rho < 1.0:
            return -np.inf
        if stats is None:
            stats = SufficientStats(self.dataset, self.state.tau, self._corr(rho))
        res = stats.residual(self.state.alpha, self.beta)
        return float(-0.5 * self.dataset.r * stats.logdet_r - 0.5 * np.sum(self.sigma_inv * res))

    def mh_rho(self) -> bool:
        if self.corr_kind == "uncor":
            return False
        cur = self.state.rho
        prop = float(reflect_rho(cur + self.rng.uniform(-self.delta_rho, self.delta_rho)))
        if not 0.0 < prop < 1.0:
            self.accept["rho"][1] += 1
            return False
        prop_stats = SufficientStats(self.dataset, self.state.tau, self._corr(prop))

        def accept():
            self.state.rho = prop
            self.stats = prop_stats

        return self._mh("rho", self.rho_logtarget(cur, self.stats), self.rho_logtarget(prop, prop_stats), accept)

    # ------------------------------------------------------------------- alpha
    def alpha_conditional(self):
        """Mean and covariance of the normal conditional of ``alpha``."""
        st = self.stats
        s_vec = st.ysum - self.beta @ st.xsum
        sigma = np.linalg.inv(self.sigma_inv)
        sigma = 0.5 * (sigma + sigma.T)
        if self.prior.alpha_cov is None:
            if not st.c1 > 0:
                raise NumericalError("degenerate alpha precision (sum of tau_i 1'R^{-1}1 is zero)")
            return s_vec / st.c1, sigma / st.c1
        vinv = np.linalg.inv(self.prior.alpha_cov)
        prec = st.c1 * self.sigma_inv + vinv
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.T)
        return cov @ (self.sigma_inv @ s_vec), cov

    def gibbs_alpha(self) -> None:
        mean, cov = self.alpha_conditional()
        L = np.linalg.cholesky(cov)
        self.state.alpha = mean + L @ self.rng.standard_normal(mean.size)

    # --------------------------------------------------------------------- eta
    def eta_conditional(self):
        """``(mean, row_cov, col_cov)`` of the matrix-normal conditional of ``eta``:
        ``MN(Gamma^T xi_tilde, Omega, H_tilde^{-1})``."""
        s, pr, st = self.state, self.prior, self.stats
        h_t = pr.h + st.sxx
        _, sxyc = st.centered(s.alpha)
        try:
            L = np.linalg.cholesky(h_t)
        except np.linalg.LinAlgError:
            raise NumericalError("H + sum tau X R^{-1} X' is singular (rank-deficient covariates with H = 0)") from None
        xi_t = cho_solve((L, True), (pr.xi @ pr.h + sxyc.T).T).T
        col = cho_solve((L, True), np.eye(h_t.shape[0]))
        return s.gamma.T @ xi_t, s.omega, 0.5 * (col + col.T)

    def gibbs_eta(self) -> None:
        s, pr, st = self.state, self.prior, self.stats
        h_t = pr.h + st.sxx
        mean, omega, _ = self.eta_conditional()
        Lh = np.linalg.cholesky(h_t)
        Lo = np.linalg.cholesky(omega)
        z = self.rng.standard_normal(mean.shape)
        # column factor F with F F^T = H_tilde^{-1} is Lh^{-T}, so draw z F^T = z Lh^{-1}
        s.eta = mean + Lo @ solve_triangular(Lh, z.T, lower=True, trans="T").T
        self._refresh_sigma()

    # ------------------------------------------------------------------- sweep
    def sweep(self) -> None:
        self.gibbs_tau()
        self.mh_nu()
        self.gibbs_omega()
        self.gibbs_omega0()
        self.mh_projection()
        self.mh_rho()
        self.gibbs_alpha()
        self.gibbs_eta()

    def pointwise(self) -> np.ndarray:
        s = self.state
        return _pointwise(self.dataset, s.alpha, self.beta, self.sigma_inv, self.logdet_sigma, self._corr(),
                          s.nu, "t" if self.t_mode else "normal", self.stats.rinv)

    def _tune(self, window):
        for block, attr, cap in (("nu", "delta_nu", np.inf), ("P", "sigma2_p", np.inf),
                                 ("rho", "delta_rho", MAX_DELTA_RHO)):
            acc, tot = (self.accept[block][0] - window[block][0], self.accept[block][1] - window[block][1])
            if tot == 0:
                continue
            rate = acc / tot
            if rate < TUNE_BAND[0]:
                factor = 0.1 if rate < 0.05 else 0.5
            elif rate > TUNE_BAND[1]:
                factor = 10.0 if rate > 0.9 else 2.0
            else:
                continue
            setattr(self, attr, min(getattr(self, attr) * factor, cap))

    def run(self, progress: bool = False) -> ChainOutput:
        """Burn in (with optional tuning), then sample and record thinned draws."""
        tn = self.tuning
        t0 = time.perf_counter()
        window = {b: list(v) for b, v in self.accept.items()}
        for it in range(1, tn.burn_in + 1):
            self.sweep()
            if tn.autotune and it % tn.tune_every == 0:
                self._tune(window)
                window = {b: list(v) for b, v in self.accept.items()}
        burn_acc = {b: tuple(v) for b, v in self.accept.items()}
        self.accept = {b: [0, 0] for b in BLOCKS}
        n_keep = tn.n_samples // tn.thin
        r, p, u, n = self.dataset.r, self.dataset.p, self.u, self.dataset.n
        rec = {
            "alpha": np.empty((n_keep, r)), "eta": np.empty((n_keep, u, p)),
            "a_coord": np.empty((n_keep, r - u, u)), "gamma": np.empty((n_keep, r, u)),
            "gamma0": np.empty((n_keep, r, r - u)), "omega": np.empty((n_keep, u, u)),
            "omega0": np.empty((n_keep, r - u, r - u)), "beta": np.empty((n_keep, r, p)),
            "sigma_eps": np.empty((n_keep, r, r)), "rho": np.empty(n_keep), "nu": np.empty(n_keep),
            "tau": np.empty((n_keep, n)), "pointwise": np.empty((n_keep, n)),
        }
        k = 0
        for it in range(1, n_keep * tn.thin + 1):
            self.sweep()
            if it % tn.thin == 0:
                s = self.state
                g, g0 = s.gamma, s.gamma0
                rec["alpha"][k] = s.alpha
                rec["eta"][k] = s.eta
                rec["a_coord"][k] = s.basis.a_coord
                rec["gamma"][k] = g
                rec["gamma0"][k] = g0
                rec["omega"][k] = s.omega
                rec["omega0"][k] = s.omega0
                rec["beta"][k] = self.beta
                sig = g @ s.omega @ g.T + g0 @ s.omega0 @ g0.T
                rec["sigma_eps"][k] = 0.5 * (sig + sig.T)
                rec["rho"][k] = s.rho
                rec["nu"][k] = s.nu
                rec["tau"][k] = s.tau
                pw = self.pointwise()
                if not np.all(np.isfinite(pw)):
                    self._abort("pointwise log density", pw)
                rec["pointwise"][k] = pw
                k += 1
                if progress and k % max(1, n_keep // 10) == 0:
                    log.info("recorded %d / %d draws", k, n_keep)
        final = TuningSpec(**{**tn.to_dict(), "delta_rho": self.delta_rho, "delta_nu": self.delta_nu,
                              "sigma2_p": self.sigma2_p})
        return ChainOutput(
            **rec,
            loglik=rec["pointwise"].sum(axis=1),
            accept={b: tuple(v) for b, v in self.accept.items()},
            accept_burnin=burn_acc,
            frame=self.frame.copy(),
            u=u,
            corr_kind=self.corr_kind,
            error_model="t" if self.t_mode else "normal",
            tuning=final,
            frame_failures=self.frame_failures,
            wall_time=time.perf_counter() - t0,
        )


def run_chain(dataset: LongitudinalDataset, u: int, corr_kind: str, prior: PriorSpec | None = None,
              tuning: TuningSpec | None = None, frame="qr", rng: np.random.Generator | None = None,
              state: ParameterState | None = None) -> ChainOutput:
    """Fit the model by MCMC.

    ``frame`` is ``"qr"`` (default), ``"identity"``, an explicit orthogonal
    matrix, or ``"refresh"``: a pilot chain in the QR frame whose posterior
    mean ``(Gamma, Gamma0)`` becomes the frame of the main run.
    """
    corr_kind = parse_kind(corr_kind)
    if prior is None:
        prior = PriorSpec.default(dataset.r, dataset.p, u)
    tuning = tuning or TuningSpec()
    rng = rng if rng is not None else np.random.default_rng(tuning.seed)
    if isinstance(frame, str) and frame == "refresh":
        pilot = run_chain(dataset, u, corr_kind, prior, tuning, "qr", rng)
        frame = refresh_frame(pilot)
    if state is None:
        state, _ = initialize(dataset, u, corr_kind, frame, prior.error_model, prior.m_prior)
    elif not isinstance(frame, str):
        state.basis = basis_from_span(state.gamma, make_frame(frame, dataset.r))
    sampler = RolemSampler(dataset, u, corr_kind, prior, tuning, state, rng)
    return sampler.run()
