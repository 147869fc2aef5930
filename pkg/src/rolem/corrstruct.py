"""Working correlation structures for repeated measures.

Kinds are ``"uncor"`` (identity), ``"cs"`` (compound symmetry,
``(1 - rho) I + rho 1 1^T``) and ``"ar1"`` (``rho^|s - l|``). Inverses and
log-determinants are closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

KINDS = ("uncor", "cs", "ar1")

__all__ = ["KINDS", "CorrelationSpec", "corr_matrix", "corr_inverse_logdet", "parse_kind"]


def parse_kind(kind: str) -> str:
    k = str(kind).strip().lower().replace("(", "").replace(")", "")
    if k not in KINDS:
        raise InvalidParameterError(f"unknown correlation kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class CorrelationSpec:
    kind: str
    rho: float = 0.0

    def __post_init__(self):
        kind = parse_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind != "uncor" and not 0.0 < self.rho < 1.0:
            raise InvalidParameterError(f"rho must lie in (0, 1) for {kind}, got {self.rho}")


def corr_matrix(spec: CorrelationSpec, J: int) -> np.ndarray:
    if J < 1:
        raise InvalidParameterError(f"J must be >= 1, got {J}")
    rho = spec.rho
    if spec.kind == "uncor" or J == 1:
        return np.eye(J)
    if spec.kind == "cs":
        return (1.0 - rho) * np.eye(J) + rho * np.ones((J, J))
    lag = np.abs(np.subtract.outer(np.arange(J), np.arange(J)))
    return rho ** lag


def corr_inverse_logdet(spec: CorrelationSpec, J: int):
    """Return ``(R^{-1}, log|R|)`` for ``R = corr_matrix(spec, J)``."""
    if J < 1:
        raise InvalidParameterError(f"J must be >= 1, got {J}")
    rho = spec.rho
    if spec.kind == "uncor" or J == 1:
        return np.eye(J), 0.0
    if spec.kind == "cs":
        denom = 1.0 + (J - 1) * rho
        inv = (np.eye(J) - (rho / denom) * np.ones((J, J))) / (1.0 - rho)
        return inv, (J - 1) * np.log1p(-rho) + np.log(denom)
    one_m = 1.0 - rho * rho
    inv = np.zeros((J, J))
    idx = np.arange(J)
    inv[idx, idx] = 1.0 + rho * rho
    inv[0, 0] = inv[-1, -1] = 1.0
    inv[idx[:-1], idx[1:]] = -rho
    inv[idx[1:], idx[:-1]] = -rho
    return inv / one_m, (J - 1) * np.log(one_m)
