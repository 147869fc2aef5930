"""Posterior summaries, information criteria, cross-validation and MCMC diagnostics.

Everything here is post-processing of a :class:`~rolem.sampler.ChainOutput`;
nothing touches the sampler state.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .corrstruct import CorrelationSpec
from .errors import InvalidParameterError
from .model import LongitudinalDataset, _pointwise, precision
from .sampler import ChainOutput

__all__ = [
    "ModelScore",
    "SummaryRow",
    "PosteriorSummary",
    "p_bic",
    "bic",
    "bayes_factor",
    "waic",
    "score_chain",
    "hpd_interval",
    "hpd_entrywise",
    "frobenius_error",
    "autocorrelation",
    "effective_sample_size",
    "rhat",
    "diagnostics",
    "summarize",
    "cv_folds",
    "predictive_logdensity",
    "prediction_mae",
    "cv_scores",
]

MAX_LAG = 50


@dataclass(frozen=True)
class ModelScore:
    bic: float
    waic: float
    lppd: float
    p_waic: float
    max_loglik: float
    p_bic: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SummaryRow:
    parameter: str
    index: str
    mean: float
    hpd_lower: float
    hpd_upper: float
    ess: float


@dataclass
class PosteriorSummary:
    rows: list
    autocorr: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    level: float = 0.95

    def find(self, name: str) -> SummaryRow:
        for row in self.rows:
            if _label(row) == name:
                return row
        raise KeyError(name)


def _label(row):
    return f"{row.parameter}[{row.index}]" if row.index else row.parameter


# ---------------------------------------------------------------- BIC / WAIC
def p_bic(r: int, p: int, u: int, error_model: str = "t", corr_kind: str = "ar1") -> int:
    """Parameter count behind BIC.

    ``r`` (alpha) + ``u p`` (eta) + ``(r - u) u`` (P) + the two covariance
    blocks + one for ``rho`` + one for ``nu``. Normal errors drop ``nu``; an
    uncorrelated working structure drops ``rho``.
    """
    if not 0 < u < r or p < 1:
        raise InvalidParameterError(f"need 0 < u < r and p >= 1, got r={r}, p={p}, u={u}")
    k = r + u * p + (r - u) * u + u * (u + 1) // 2 + (r - u) * (r - u + 1) // 2
    k += 0 if str(corr_kind).lower() == "uncor" else 1
    k += 1 if error_model == "t" else 0
    return int(k)


def bic(chain: ChainOutput, dims=None, n: int | None = None) -> float:
    """``-2 max_draw loglik + p_BIC log n``.

    The maximum runs over retained draws only, so it is a lower bound on the
    true maximized likelihood.
    """
    if chain.n_draws == 0:
        raise InvalidParameterError("empty chain")
    r, p, u = dims if dims is not None else (chain.r, chain.p, chain.u)
    n = chain.n if n is None else n
    k = p_bic(r, p, u, chain.error_model, chain.corr_kind)
    return float(-2.0 * np.max(chain.loglik) + k * math.log(n))


def bayes_factor(bic_a: float, bic_b: float) -> float:
    """Approximate Bayes factor of model a over model b, ``exp(-(bic_a - bic_b) / 2)``.

    A BIC difference of -6 gives about 20.
    """
    return float(np.exp(-0.5 * (bic_a - bic_b)))


def waic(pointwise) -> tuple:
    """``(waic, lppd, p_waic)`` from an ``(n_draws, n_subjects)`` array of log densities.

    The variance term uses the unbiased (``n_draws - 1``) divisor.
    """
    if isinstance(pointwise, ChainOutput):
        pointwise = pointwise.pointwise
    lp = np.asarray(pointwise, dtype=float)
    if lp.ndim != 2:
        raise InvalidParameterError("pointwise log densities must be (draws, subjects)")
    s = lp.shape[0]
    if s < 2:
        raise InvalidParameterError("WAIC needs at least two draws")
    lppd = float(np.sum(logsumexp(lp, axis=0) - math.log(s)))
    p_w = float(np.sum(np.var(lp, axis=0, ddof=1)))
    return -2.0 * lppd + 2.0 * p_w, lppd, p_w


def score_chain(chain: ChainOutput) -> ModelScore:
    w, lppd, p_w = waic(chain.pointwise)
    return ModelScore(
        bic=bic(chain),
        waic=w,
        lppd=lppd,
        p_waic=p_w,
        max_loglik=float(np.max(chain.loglik)),
        p_bic=p_bic(chain.r, chain.p, chain.u, chain.error_model, chain.corr_kind),
    )


# ----------------------------------------------------------------------- HPD
def hpd_interval(samples, level: float = 0.95) -> tuple:
    """Shortest window of ``ceil(level n)`` consecutive order statistics."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 20:
        raise InvalidParameterError(f"HPD interval needs at least 20 samples, got {n}")
    if not 0.0 < level < 1.0:
        raise InvalidParameterError(f"level must lie in (0, 1), got {level}")
    m = int(math.ceil(level * n))
    widths = x[m - 1:] - x[: n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def hpd_entrywise(draws, level: float = 0.95):
    """Entrywise HPD bounds for an array of draws with a leading draw axis."""
    draws = np.asarray(draws, dtype=float)
    lo = np.empty(draws.shape[1:])
    hi = np.empty(draws.shape[1:])
    for idx in np.ndindex(*draws.shape[1:]):
        lo[idx], hi[idx] = hpd_interval(draws[(slice(None),) + idx], level)
    return lo, hi


def frobenius_error(estimate, truth) -> float:
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise InvalidParameterError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.linalg.norm(estimate - truth))


# --------------------------------------------------------------- diagnostics
def _acf_full(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    if acov[0] <= 0:
        return None
    return acov / acov[0]


def autocorrelation(x, max_lag: int = MAX_LAG) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` (NaN for a constant series)."""
    x = np.asarray(x, dtype=float)
    max_lag = min(max_lag, x.size - 1)
    acf = _acf_full(x)
    if acf is None:
        out = np.full(max_lag + 1, np.nan)
        out[0] = 1.0
        return out
    return acf[: max_lag + 1]


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial positive sequence.

    Sums of adjacent autocorrelation pairs are accumulated until the first
    non-positive pair. A constant chain returns ``n``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    acf = _acf_full(x)
    if acf is None:
        return float(n)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n / tau, n * math.log10(n)))


def rhat(chains) -> float:
    """Potential scale reduction over an ``(m, n)`` array of parallel chains."""
    c = np.asarray(chains, dtype=float)
    if c.ndim != 2 or c.shape[0] < 2 or c.shape[1] < 2:
        raise InvalidParameterError("rhat needs at least two chains of length >= 2")
    m, n = c.shape
    w = c.var(axis=1, ddof=1).mean()
    b = n * c.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else np.inf
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


def diagnostics(chain: ChainOutput, max_lag: int = MAX_LAG) -> dict:
    """Per-scalar ESS and lag autocorrelations plus block acceptance rates."""
    out = {"acceptance": chain.acceptance_rates(), "ess": {}, "autocorr": {}}
    for name, x in chain.scalar_draws().items():
        out["ess"][name] = effective_sample_size(x)
        out["autocorr"][name] = autocorrelation(x, max_lag)
    out["frame_failures"] = chain.frame_failures
    return out


def summarize(chain: ChainOutput, level: float = 0.95, max_lag: int = MAX_LAG) -> PosteriorSummary:
    """Posterior mean, entrywise HPD interval and ESS for every scalar."""
    rows = []
    acf = {}
    for name, x in chain.scalar_draws().items():
        param, _, idx = name.partition("[")
        lo, hi = hpd_interval(x, level)
        rows.append(SummaryRow(param, idx.rstrip("]"), float(np.mean(x)), lo, hi, effective_sample_size(x)))
        acf[name] = autocorrelation(x, max_lag)
    return PosteriorSummary(rows=rows, autocorr=acf, acceptance=chain.acceptance_rates(), level=level)


# -------------------------------------------------------- cross-validation
def cv_folds(n: int, k: int, seed: int = 0) -> list:
    """Random partition of ``range(n)`` into ``k`` folds of near-equal size."""
    if k < 2:
        raise InvalidParameterError("need at least two folds")
    if k > n:
        raise InvalidParameterError(f"cannot split {n} subjects into {k} non-empty folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _draw_pointwise(chain: ChainOutput, dataset: LongitudinalDataset, s: int) -> np.ndarray:
    sinv, logdet = precision(chain.gamma[s], chain.gamma0[s], chain.omega[s], chain.omega0[s])
    rho = float(chain.rho[s]) if chain.corr_kind != "uncor" else 0.0
    corr = CorrelationSpec(chain.corr_kind, rho)
    return _pointwise(dataset, chain.alpha[s], chain.beta[s], sinv, logdet, corr,
                      float(chain.nu[s]), chain.error_model)


def predictive_logdensity(chain: ChainOutput, dataset: LongitudinalDataset) -> np.ndarray:
    """Per-subject log of the draw-averaged marginal density of held-out subjects."""
    if dataset.n == 0:
        raise InvalidParameterError("no test subjects")
    lp = np.vstack([_draw_pointwise(chain, dataset, s) for s in range(chain.n_draws)])
    return logsumexp(lp, axis=0) - math.log(chain.n_draws)


def prediction_mae(chain: ChainOutput, dataset: LongitudinalDataset) -> tuple:
    """``(sum of absolute errors, number of entries)`` of the posterior-mean fit ``alpha + beta x``."""
    a = chain.alpha.mean(axis=0)
    b = chain.beta.mean(axis=0)
    total, count = 0.0, 0
    for y, x in zip(dataset.ys, dataset.xs):
        total += float(np.abs(y - a[:, None] - b @ x).sum())
        count += y.size
    return total, count


def cv_scores(dataset: LongitudinalDataset, folds, fit: Callable[[LongitudinalDataset], ChainOutput]) -> tuple:
    """``(mlpd, mae)`` over K folds.

    ``fit`` maps a training dataset to a chain. MLPD averages the log
    predictive density over all held-out subjects; MAE averages absolute
    errors over all held-out response entries.
    """
    folds = [np.asarray(f, dtype=int) for f in folds]
    if len(folds) < 2:
        raise InvalidParameterError("need at least two folds")
    if any(f.size == 0 for f in folds):
        raise InvalidParameterError("fold with zero test subjects")
    allidx = np.sort(np.concatenate(folds))
    if not np.array_equal(allidx, np.arange(dataset.n)):
        raise InvalidParameterError("folds must partition the subjects")
    lpd_total, abs_total, n_entries = 0.0, 0.0, 0
    for f in folds:
        train = dataset.subset(np.setdiff1d(np.arange(dataset.n), f))
        test = dataset.subset(f)
        chain = fit(train)
        lpd_total += float(predictive_logdensity(chain, test).sum())
        a, c = prediction_mae(chain, test)
        abs_total += a
        n_entries += c
    return lpd_total / dataset.n, abs_total / n_entries
