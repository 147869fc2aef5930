"""Subspaces as projection matrices.

A ``u``-dimensional subspace of R^r is stored as its orthogonal projector
``P = Gamma Gamma^T``. Coordinates come from a fixed orthogonal frame
``U = (U1, U2)``: the subspace is the graph of ``A`` over ``span(U1)``,

    A      = (U2^T G)(U1^T G)^{-1}            (any basis G of the subspace)
    Gamma  = (U1 + U2 A)(I + A^T A)^{-1/2}
    Gamma0 = (-U1 A^T + U2)(I + A A^T)^{-1/2}

which picks one deterministic orthonormal basis per subspace, so ``Omega``
and ``Omega0`` are identifiable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameError, InvalidParameterError, NumericalError

FRAME_COND_LIMIT = 1e10
EIG_CLAMP_TOL = 1e-6
PROPOSAL_RETRIES = 5

__all__ = [
    "Projection",
    "EnvelopeBasis",
    "basis_from_projection",
    "basis_from_span",
    "basis_from_coord",
    "langevin_logdensity_unnorm",
    "induced_logdensity",
    "propose_projection",
    "propose_span",
    "projection_mode",
    "sample_uniform_projection",
    "sample_langevin",
    "principal_angles",
]


def _orthonormal(z):
    q, r = np.linalg.qr(z)
    # deterministic sign so that diag(R) >= 0
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s


@dataclass(frozen=True)
class Projection:
    """Symmetric idempotent ``r x r`` matrix of rank ``u``."""

    matrix: np.ndarray
    rank: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidParameterError(f"projection must be square, got {m.shape}")
        if not 0 <= self.rank <= m.shape[0]:
            raise InvalidParameterError(f"rank {self.rank} outside [0, {m.shape[0]}]")
        if np.max(np.abs(m - m.T), initial=0.0) >= 1e-10:
            raise InvalidParameterError("projection is not symmetric")
        if np.max(np.abs(m @ m - m), initial=0.0) >= 1e-8:
            raise InvalidParameterError("projection is not idempotent")
        if abs(np.trace(m) - self.rank) >= 1e-8:
            raise InvalidParameterError(f"trace {np.trace(m):.6g} does not match rank {self.rank}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_span(cls, z) -> "Projection":
        """Projector onto the column space of ``z`` (full column rank)."""
        q = _orthonormal(np.asarray(z, dtype=float))
        p = q @ q.T
        return cls(0.5 * (p + p.T), q.shape[1])

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def basis(self) -> np.ndarray:
        """Some orthonormal basis of the subspace (top-``rank`` eigenvectors)."""
        w, v = np.linalg.eigh(self.matrix)
        return v[:, ::-1][:, : self.rank]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class EnvelopeBasis:
    """Frame-resolved representative ``(Gamma, Gamma0, A)`` of a subspace."""

    gamma: np.ndarray
    gamma0: np.ndarray
    a_coord: np.ndarray
    frame: np.ndarray

    @property
    def u(self) -> int:
        return self.gamma.shape[1]

    @property
    def r(self) -> int:
        return self.gamma.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.gamma @ self.gamma.T

    @property
    def projection(self) -> Projection:
        p = self.matrix
        return Projection(0.5 * (p + p.T), self.u)


def _inv_sqrt_spd(s):
    w, v = np.linalg.eigh(s)
    return (v / np.sqrt(w)) @ v.T


def _split_frame(frame, u):
    frame = np.asarray(frame, dtype=float)
    r = frame.shape[0]
    if frame.shape != (r, r):
        raise InvalidParameterError(f"frame must be square, got {frame.shape}")
    if not 1 <= u < r:
        raise InvalidParameterError(f"envelope dimension must satisfy 1 <= u < r, got u={u}, r={r}")
    return frame, frame[:, :u], frame[:, u:]


def basis_from_coord(a_coord, frame) -> EnvelopeBasis:
    """``(Gamma, Gamma0)`` from the coordinate matrix ``A`` ((r-u) x u)."""
    a_coord = np.atleast_2d(np.asarray(a_coord, dtype=float))
    u = a_coord.shape[1]
    frame, U1, U2 = _split_frame(frame, u)
    iu = np.eye(u)
    iv = np.eye(frame.shape[0] - u)
    gamma = (U1 + U2 @ a_coord) @ _inv_sqrt_spd(iu + a_coord.T @ a_coord)
    gamma0 = (U2 - U1 @ a_coord.T) @ _inv_sqrt_spd(iv + a_coord @ a_coord.T)
    return EnvelopeBasis(gamma, gamma0, a_coord, frame)


def basis_from_span(z, frame) -> EnvelopeBasis:
    """Frame-resolved basis of ``span(z)``; ``z`` is any full-rank r x u matrix.

    ``A`` is invariant to ``z -> z G`` for invertible ``G``, so the result does
    not depend on which basis of the subspace is passed in.
    """
    z = np.asarray(z, dtype=float)
    u = z.shape[1]
    frame, U1, U2 = _split_frame(frame, u)
    q = _orthonormal(z)
    b1 = U1.T @ q
    cond = np.linalg.cond(b1)
    if not np.isfinite(cond) or cond > FRAME_COND_LIMIT:
        raise FrameError(f"U1^T Gamma is near-singular (condition number {cond:.3g}); choose another frame")
    a_coord = np.linalg.solve(b1.T, (U2.T @ q).T).T
    return basis_from_coord(a_coord, frame)


def basis_from_projection(P, frame) -> EnvelopeBasis:
    """Frame-resolved ``(Gamma, Gamma0, A)`` for the subspace with projector ``P``.

    Eigenvalues of ``P`` are snapped to {0, 1} (tolerance 1e-6) before the
    top eigenvectors are taken, absorbing round-off accumulated along a chain.
    """
    if isinstance(P, Projection):
        m, u = P.matrix, P.rank
    else:
        m = np.asarray(P, dtype=float)
        u = int(round(np.trace(m)))
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    near0 = np.abs(w) < EIG_CLAMP_TOL
    near1 = np.abs(w - 1.0) < EIG_CLAMP_TOL
    if not np.all(near0 | near1) or int(near1.sum()) != u:
        raise InvalidParameterError("matrix is not a rank-u projection within tolerance")
    return basis_from_span(v[:, near1], frame)


def _check_symmetric(m, name):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidParameterError(f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * scale:
        raise InvalidParameterError(f"{name} must be symmetric")
    return m


def langevin_logdensity_unnorm(P, M) -> float:
    """``tr(M P)``: matrix Langevin log density without its normalizer."""
    M = _check_symmetric(M, "M")
    return float(np.sum(M * np.asarray(P, dtype=float)))


def induced_logdensity(P, W) -> float:
    """Log density (w.r.t. the uniform measure) of ``span(Z)``, ``Z ~ MN(0, W, I_u)``.

    ``-(u/2) log|W| - (r/2) log|I - P + W^{-1} P|``.
    """
    if isinstance(P, Projection):
        m, u = P.matrix, P.rank
    else:
        m = np.asarray(P, dtype=float)
        u = int(round(np.trace(m)))
    W = _check_symmetric(W, "W")
    r = W.shape[0]
    try:
        L = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise InvalidParameterError("W is not positive definite") from None
    logdet_w = 2.0 * np.sum(np.log(np.diag(L)))
    k = np.eye(r) - m + np.linalg.solve(W, m)
    sign, logdet_k = np.linalg.slogdet(k)
    if sign <= 0 or not np.isfinite(logdet_k):
        raise NumericalError("I - P + W^{-1} P is singular")
    return float(-0.5 * u * logdet_w - 0.5 * r * logdet_k)


def propose_span(gamma, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``Z ~ MN(0, sigma2 I + gamma gamma^T, I_u)``; ``gamma`` orthonormal r x u.

    Uses ``Z = sigma G1 + gamma G2`` with iid normal ``G1`` (r x u), ``G2`` (u x u),
    which has exactly that row covariance.
    """
    if not sigma2 > 0:
        raise InvalidParameterError(f"sigma2 must be positive, got {sigma2}")
    r, u = gamma.shape
    sigma = np.sqrt(sigma2)
    for _ in range(PROPOSAL_RETRIES):
        g = rng.standard_normal((r + u, u))
        z = sigma * g[:r] + gamma @ g[r:]
        s = np.linalg.svd(z, compute_uv=False)
        if s[-1] > 1e-12 * max(s[0], 1.0):
            return z
    raise NumericalError("proposal draw repeatedly rank-deficient")


def propose_projection(P_current, sigma2: float, rng: np.random.Generator) -> Projection:
    """Random-walk proposal ``P* = Z (Z^T Z)^{-1} Z^T``, ``Z ~ MN(0, sigma2 I + P, I)``."""
    if not isinstance(P_current, Projection):
        m = np.asarray(P_current, dtype=float)
        P_current = Projection(m, int(round(np.trace(m))))
    return Projection.from_span(propose_span(P_current.basis(), sigma2, rng))


def _canonical_signs(v):
    out = v.copy()
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > 1e-12)
        if nz.size and out[nz[0], j] < 0:
            out[:, j] = -out[:, j]
    return out


def projection_mode(M, u: int, tol: float = 1e-10):
    """Mode ``U1 U1^T`` of the Langevin / induced densities with parameter ``M``.

    Returns ``(Projection, unique)``. ``unique`` is true iff ``rank(M) >= u``
    and ``lambda_u > lambda_{u+1}`` (relative tolerance ``tol``). Ties are
    broken by a stable descending sort and a first-nonzero-positive sign rule,
    so non-unique cases still give a deterministic representative.
    """
    M = _check_symmetric(M, "M")
    r = M.shape[0]
    if not 1 <= u <= r:
        raise InvalidParameterError(f"u must be in [1, {r}]")
    w, v = np.linalg.eigh(M)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], _canonical_signs(v[:, order])
    scale = max(1.0, float(np.max(np.abs(w))))
    rank = int(np.sum(np.abs(w) > tol * scale))
    gap = True if u == r else (w[u - 1] - w[u]) > tol * scale
    u1 = v[:, :u]
    p = u1 @ u1.T
    return Projection(0.5 * (p + p.T), u), bool(rank >= u and gap)


def sample_uniform_projection(r: int, u: int, rng: np.random.Generator) -> Projection:
    """Haar-uniform draw: span of an r x u standard normal matrix."""
    if not 1 <= u <= r:
        raise InvalidParameterError(f"need 1 <= u <= r, got u={u}, r={r}")
    return Projection.from_span(rng.standard_normal((r, u)))


def sample_langevin(M, u: int, rng: np.random.Generator, max_tries: int = 100_000) -> Projection:
    """Exact Langevin draw by rejection from the uniform distribution.

    The envelope is ``exp(sum of top-u eigenvalues of M)``; practical only for
    weakly concentrated ``M``.
    """
    M = _check_symmetric(M, "M")
    r = M.shape[0]
    top = float(np.sum(np.sort(np.linalg.eigvalsh(M))[::-1][:u]))
    for _ in range(max_tries):
        P = sample_uniform_projection(r, u, rng)
        if np.log(rng.uniform()) < langevin_logdensity_unnorm(P, M) - top:
            return P
    raise NumericalError("Langevin rejection sampler exceeded max_tries; M too concentrated")


def principal_angles(a, b) -> np.ndarray:
    """Principal angles (radians) between ``span(a)`` and ``span(b)``."""
    qa = _orthonormal(np.asarray(a, dtype=float))
    qb = _orthonormal(np.asarray(b, dtype=float))
    cross = qa.T @ qb
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), -1.0, 1.0)
    # arccos is ill-conditioned near 0; take small angles from the sines instead
    sin = np.sort(np.linalg.svd(qb - qa @ cross, compute_uv=False))[: cos.size]
    return np.where(cos * cos < 0.5, np.arccos(cos), np.arcsin(np.clip(sin, 0.0, 1.0)))
