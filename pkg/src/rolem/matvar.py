"""Matrix-variate normal / t densities, samplers, and inverse-Wishart draws.

Conventions
-----------
``MN(M, L1, L2)`` has row covariance ``L1`` (a x a) and column covariance
``L2`` (b x b), so that ``vec(Y) ~ N(vec(M), L2 kron L1)``.

The matrix t ``MT(nu, M, L1, L2)`` is the scale mixture
``Y | tau ~ MN(M, L1 / tau, L2)`` with ``tau ~ Gamma(nu/2, rate=nu/2)``.

The inverse-Wishart ``IW(k, Psi)`` has density proportional to
``|W|^{-(k + d + 1)/2} etr(-Psi W^{-1} / 2)``; its mean is
``Psi / (k - d - 1)`` when ``k > d + 1``. This is the scale-matrix
convention (the same one scipy uses), not the precision convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, multigammaln

from .errors import InvalidParameterError

LOG_2PI = np.log(2.0 * np.pi)

__all__ = [
    "MatNormalParams",
    "MatTParams",
    "InvWishartParams",
    "cholesky",
    "mn_logpdf",
    "mn_sample",
    "mt_logpdf",
    "mt_sample",
    "invwishart_logpdf",
    "invwishart_sample",
]


def cholesky(a, name="matrix"):
    """Lower Cholesky factor; raises InvalidParameterError when ``a`` is not SPD.

    No jitter is added.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
        raise InvalidParameterError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise InvalidParameterError(f"{name} is not positive definite") from None


def _logdet_from_chol(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True)
class MatNormalParams:
    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        row = np.atleast_2d(np.asarray(self.row_cov, dtype=float))
        col = np.atleast_2d(np.asarray(self.col_cov, dtype=float))
        a, b = mean.shape
        if row.shape != (a, a) or col.shape != (b, b):
            raise InvalidParameterError(
                f"inconsistent shapes: mean {mean.shape}, row_cov {row.shape}, col_cov {col.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "row_cov", row)
        object.__setattr__(self, "col_cov", col)

    @property
    def shape(self):
        return self.mean.shape


@dataclass(frozen=True)
class MatTParams:
    dof: float
    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.dof) or self.dof <= 0:
            raise InvalidParameterError(f"dof must be positive and finite, got {self.dof}")
        base = MatNormalParams(self.mean, self.row_cov, self.col_cov)
        object.__setattr__(self, "mean", base.mean)
        object.__setattr__(self, "row_cov", base.row_cov)
        object.__setattr__(self, "col_cov", base.col_cov)

    @property
    def shape(self):
        return self.mean.shape


@dataclass(frozen=True)
class InvWishartParams:
    dof: float
    scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        d = scale.shape[0]
        if not self.dof > d - 1:
            raise InvalidParameterError(f"inverse-Wishart dof must exceed dim - 1 = {d - 1}, got {self.dof}")
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self):
        return self.scale.shape[0]


def _kernel(y, mean, L1, L2):
    """tr(L1^{-1} E L2^{-1} E^T) with E = y - mean, via triangular solves."""
    e = np.atleast_2d(np.asarray(y, dtype=float)) - mean
    if e.shape != mean.shape:
        raise InvalidParameterError(f"observation shape {e.shape} does not match mean {mean.shape}")
    a = solve_triangular(L1, e, lower=True)
    b = solve_triangular(L2, a.T, lower=True)
    return float(np.sum(b * b))


def mn_logpdf(y, params: MatNormalParams) -> float:
    """Log density of the matrix-variate normal at ``y``."""
    L1 = cholesky(params.row_cov, "row_cov")
    L2 = cholesky(params.col_cov, "col_cov")
    a, b = params.shape
    q = _kernel(y, params.mean, L1, L2)
    return -0.5 * a * b * LOG_2PI - 0.5 * b * _logdet_from_chol(L1) - 0.5 * a * _logdet_from_chol(L2) - 0.5 * q


def mt_logpdf(y, params: MatTParams) -> float:
    """Log density of the matrix-variate t at ``y``."""
    L1 = cholesky(params.row_cov, "row_cov")
    L2 = cholesky(params.col_cov, "col_cov")
    a, b = params.shape
    nu = float(params.dof)
    ab = a * b
    q = _kernel(y, params.mean, L1, L2)
    return (
        gammaln(0.5 * (ab + nu))
        - gammaln(0.5 * nu)
        - 0.5 * ab * np.log(nu * np.pi)
        - 0.5 * b * _logdet_from_chol(L1)
        - 0.5 * a * _logdet_from_chol(L2)
        - 0.5 * (ab + nu) * np.log1p(q / nu)
    )


def mn_sample(params: MatNormalParams, rng: np.random.Generator) -> np.ndarray:
    """Draw ``M + L1 Z L2^T`` with ``Z`` iid standard normal."""
    L1 = cholesky(params.row_cov, "row_cov")
    L2 = cholesky(params.col_cov, "col_cov")
    z = rng.standard_normal(params.shape)
    return params.mean + L1 @ z @ L2.T


def mt_sample(params: MatTParams, rng: np.random.Generator) -> np.ndarray:
    """Draw from the matrix t through its Gamma scale-mixture representation."""
    L1 = cholesky(params.row_cov, "row_cov")
    L2 = cholesky(params.col_cov, "col_cov")
    nu = float(params.dof)
    tau = rng.gamma(0.5 * nu, 2.0 / nu)
    z = rng.standard_normal(params.shape)
    return params.mean + (L1 @ z @ L2.T) / np.sqrt(tau)


def invwishart_logpdf(w, params: InvWishartParams) -> float:
    """Normalized inverse-Wishart log density (scale-matrix convention)."""
    Lw = cholesky(w, "w")
    Ls = cholesky(params.scale, "scale")
    d = params.dim
    k = float(params.dof)
    winv_psi = solve_triangular(Lw, Ls, lower=True)
    return (
        0.5 * k * _logdet_from_chol(Ls)
        - 0.5 * k * d * np.log(2.0)
        - multigammaln(0.5 * k, d)
        - 0.5 * (k + d + 1) * _logdet_from_chol(Lw)
        - 0.5 * float(np.sum(winv_psi * winv_psi))
    )


def invwishart_sample(params: InvWishartParams, rng: np.random.Generator) -> np.ndarray:
    """Draw ``W ~ IW(dof, scale)`` by inverting a Bartlett-factored Wishart.

    If ``T T^T ~ Wishart(dof, I)`` and ``C C^T = scale`` then
    ``C (T T^T)^{-1} C^T`` is ``IW(dof, scale)``; rotation invariance of the
    standard Wishart makes any square-root factor ``C`` valid.
    """
    C = cholesky(params.scale, "scale")
    d = params.dim
    k = float(params.dof)
    T = np.zeros((d, d))
    T[np.diag_indices(d)] = np.sqrt(rng.chisquare(k - np.arange(d)))
    rows, cols = np.tril_indices(d, -1)
    T[rows, cols] = rng.standard_normal(rows.size)
    # C T^{-T}
    F = solve_triangular(T, C.T, lower=True).T
    w = F @ F.T
    return 0.5 * (w + w.T)
