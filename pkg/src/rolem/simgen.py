"""Synthetic longitudinal envelope data.

The default design follows the reference simulation: ``A`` entries
``U(-1, 1)`` resolved in the identity frame, diagonal ``Omega`` with
``U(0, 1)`` entries and ``Omega0`` with ``U(5, 10)`` entries, ``alpha`` and
``eta`` entries ``U(-5, 5)``, ``X`` entries ``N(0, 1)``, and AR(1) errors with
``rho = 0.5``. Three error laws share the covariance ``2 (R kron Sigma)``:

* ``t4``     -- matrix t with 4 degrees of freedom,
* ``normal`` -- ``L e B^T`` with ``e`` iid ``N(0, 2)``,
* ``mixture``-- ``L e B^T`` with ``e`` iid ``0.9 N(0, 1) + 0.1 N(0, 11)``,

where ``L L^T = Sigma`` and ``B B^T = R``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .corrstruct import CorrelationSpec, corr_matrix, parse_kind
from .errors import InvalidParameterError
from .grassmann import basis_from_coord
from .model import LongitudinalDataset

ERROR_KINDS = ("t4", "normal", "mixture")
MIXTURE = {"weights": [0.9, 0.1], "variances": [1.0, 11.0]}

__all__ = ["SimDesign", "GroundTruth", "generate", "structured_gammas", "structured_a_matrix",
           "structured_prior_design", "ERROR_KINDS", "MIXTURE"]


def _parse_error_kind(kind):
    k = str(kind).lower().replace("_var2", "").replace("-", "")
    k = {"t": "t4", "mt4": "t4", "norm": "normal"}.get(k, k)
    if k not in ERROR_KINDS:
        raise InvalidParameterError(f"unknown error kind {kind!r}; expected one of {ERROR_KINDS}")
    return k


@dataclass
class SimDesign:
    r: int = 20
    p: int = 30
    u: int = 3
    n: int = 100
    J: int = 5
    rho_true: float = 0.5
    corr_kind: str = "ar1"
    error_kind: str = "t4"
    seed: int = 0
    fixed_A: np.ndarray | None = None

    def __post_init__(self):
        self.corr_kind = parse_kind(self.corr_kind)
        self.error_kind = _parse_error_kind(self.error_kind)
        if not 1 <= self.u < self.r:
            raise InvalidParameterError(f"need 1 <= u < r, got u={self.u}, r={self.r}")
        if min(self.p, self.n, self.J) < 1:
            raise InvalidParameterError("p, n and J must be positive")
        if self.fixed_A is not None:
            self.fixed_A = np.asarray(self.fixed_A, dtype=float)
            if self.fixed_A.shape != (self.r - self.u, self.u):
                raise InvalidParameterError(f"fixed_A must be {(self.r - self.u, self.u)}")

    def to_dict(self):
        d = asdict(self)
        d["fixed_A"] = None if self.fixed_A is None else self.fixed_A.tolist()
        return d


@dataclass
class GroundTruth:
    alpha: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    sigma_eps: np.ndarray
    gamma: np.ndarray
    gamma0: np.ndarray
    a_coord: np.ndarray
    omega: np.ndarray
    omega0: np.ndarray
    rho: float
    nu: float | None
    design: dict = field(default_factory=dict)

    def to_json(self) -> str:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return json.dumps(out, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        for k in ("alpha", "beta", "eta", "sigma_eps", "gamma", "gamma0", "a_coord", "omega", "omega0"):
            d[k] = np.asarray(d[k], dtype=float)
        return cls(**d)


def _errors(design, L, B, rng):
    n, r, J = design.n, design.r, design.J
    z = rng.standard_normal((n, r, J))
    if design.error_kind == "t4":
        tau = rng.gamma(2.0, 0.5, size=n)
        z = z / np.sqrt(tau)[:, None, None]
    elif design.error_kind == "normal":
        z = np.sqrt(2.0) * z
    else:
        heavy = rng.uniform(size=(n, r, J)) < MIXTURE["weights"][1]
        z = z * np.where(heavy, np.sqrt(MIXTURE["variances"][1]), np.sqrt(MIXTURE["variances"][0]))
    return np.matmul(np.matmul(L, z), B.T)


def generate(design: SimDesign, rng: np.random.Generator | None = None):
    """Draw a fresh parameter set and dataset; returns ``(dataset, truth)``."""
    rng = rng if rng is not None else np.random.default_rng(design.seed)
    r, p, u, n, J = design.r, design.p, design.u, design.n, design.J
    a_coord = design.fixed_A if design.fixed_A is not None else rng.uniform(-1.0, 1.0, size=(r - u, u))
    basis = basis_from_coord(a_coord, np.eye(r))
    g, g0 = basis.gamma, basis.gamma0
    omega = np.diag(rng.uniform(0.0, 1.0, size=u))
    omega0 = np.diag(rng.uniform(5.0, 10.0, size=r - u))
    sigma = g @ omega @ g.T + g0 @ omega0 @ g0.T
    sigma = 0.5 * (sigma + sigma.T)
    alpha = rng.uniform(-5.0, 5.0, size=r)
    eta = rng.uniform(-5.0, 5.0, size=(u, p))
    beta = g @ eta
    X = rng.standard_normal((n, p, J))
    rho = design.rho_true if design.corr_kind != "uncor" else 0.0
    R = corr_matrix(CorrelationSpec(design.corr_kind, rho), J)
    eps = _errors(design, np.linalg.cholesky(sigma), np.linalg.cholesky(R), rng)
    Y = alpha[None, :, None] + np.matmul(beta, X) + eps
    truth = GroundTruth(alpha=alpha, beta=beta, eta=eta, sigma_eps=sigma, gamma=g, gamma0=g0,
                        a_coord=np.asarray(a_coord, dtype=float), omega=omega, omega0=omega0, rho=float(rho),
                        nu=4.0 if design.error_kind == "t4" else None, design=design.to_dict())
    return LongitudinalDataset.from_arrays(Y, X), truth


def structured_gammas(r: int = 20) -> np.ndarray:
    """Three orthonormal envelope directions ``1_{r/4} kron v / sqrt(r)`` with
    ``v`` in ``(1,1,1,1)``, ``(1,-1,1,-1)``, ``(1,1,-1,-1)``; columns of an r x 3 array."""
    if r % 4:
        raise InvalidParameterError("structured design needs r divisible by 4")
    base = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1]], dtype=float).T
    return np.kron(np.ones((r // 4, 1)), base) / np.sqrt(r)


def structured_a_matrix(r: int = 20) -> np.ndarray:
    """``A = (a, I3, a, I3, ..., a)^T`` with ``a = (-1, 1, 1)``, sized (r-3) x 3.

    With the identity frame its envelope is ``span(structured_gammas(r))``.
    For r = 20 this is the 17 x 3 reference matrix; other multiples of 4 tile
    the same 4-row block.
    """
    if r % 4 or r < 4:
        raise InvalidParameterError("structured design needs r divisible by 4")
    a = np.array([[-1.0, 1.0, 1.0]])
    blocks = [a]
    for _ in range(r // 4 - 1):
        blocks += [np.eye(3), a]
    return np.vstack(blocks)


def structured_prior_design(which: int, s1: float = 1e5, s0: float = 1e-6, r: int = 20) -> np.ndarray:
    """Langevin parameter ``M_which``: ``s0 I`` plus ``s1 gamma_j gamma_j^T`` for
    the first ``which - 1`` structured directions (``which`` in 1..4)."""
    if which not in (1, 2, 3, 4):
        raise InvalidParameterError("which must be 1, 2, 3 or 4")
    g = structured_gammas(r)[:, : which - 1]
    return s1 * g @ g.T + s0 * np.eye(r)
