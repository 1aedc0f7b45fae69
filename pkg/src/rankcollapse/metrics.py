"""Scalar observables of token geometry."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .numerics import DEFAULT_RANK_RTOL, singular_values


class ZeroRowError(ValueError):
    def __init__(self, row: int, what: str = "input"):
        self.row = row
        super().__init__(f"{what} has a zero row at token {row + 1}")


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroRowError(int(zero[0]))
    return x / norms[:, None]


def _min_offdiag(gram: np.ndarray) -> float:
    n = len(gram)
    g = gram + np.diag(np.full(n, np.inf))
    return float(np.clip(g.min(), -1.0, 1.0))


def _mean_abs_offdiag(gram: np.ndarray) -> float:
    n = len(gram)
    a = np.abs(gram)
    total = a.sum() - np.trace(a)
    return float(np.clip(total / (n * (n - 1)), 0.0, 1.0))


def mu(x: np.ndarray) -> float:
    """Frobenius distance from ``x`` to the matrix whose rows all equal the row mean."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - x.mean(axis=0, keepdims=True)))


def min_pairwise_cos(x: np.ndarray) -> float:
    """phi: smallest cosine between any two rows (1.0 for a single row)."""
    u = _unit_rows(np.asarray(x, dtype=float))
    if len(u) == 1:
        return 1.0
    return _min_offdiag(u @ u.T)


def mean_abs_cos(x: np.ndarray) -> float:
    u = _unit_rows(np.asarray(x, dtype=float))
    if len(u) < 2:
        return 1.0
    return _mean_abs_offdiag(u @ u.T)


def stable_rank(x: np.ndarray) -> float:
    s = singular_values(x)
    if s[0] == 0.0:
        raise ValueError("stable rank of the zero matrix is undefined")
    return float(np.sum(s**2) / s[0] ** 2)


def column_oscillation(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.max() - v.min())


def column_oscillations(x: np.ndarray) -> np.ndarray:
    return np.ptp(np.asarray(x, dtype=float), axis=0)


def rows_equal(x: np.ndarray) -> bool:
    """All rows equal within ``1e-10 * max(1, ||x||_F)``."""
    return mu(x) <= 1e-10 * max(1.0, float(np.linalg.norm(x)))


@dataclass
class MetricsRow:
    mu: float
    phi: float
    stable_rank: float
    sigma_min: float
    rank: int
    mean_abs_cos: float
    sigma2_over_sigma1: float

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(x: np.ndarray, rank_rtol: float = DEFAULT_RANK_RTOL) -> MetricsRow:
    x = np.asarray(x, dtype=float)
    s = singular_values(x)
    s1 = s[0]
    norms = np.linalg.norm(x, axis=1)
    if np.all(norms > 0) and len(x) > 1:
        u = x / norms[:, None]
        gram = u @ u.T
        phi, mac = _min_offdiag(gram), _mean_abs_offdiag(gram)
    elif np.all(norms > 0):
        phi = mac = 1.0
    else:
        phi = mac = float("nan")
    return MetricsRow(
        mu=mu(x),
        phi=phi,
        stable_rank=float(np.sum(s**2) / s1**2) if s1 > 0 else float("nan"),
        sigma_min=float(s[-1]),
        rank=int(np.count_nonzero(s > rank_rtol * s1)) if s1 > 0 else 0,
        mean_abs_cos=mac,
        sigma2_over_sigma1=float(s[1] / s1) if s.size > 1 and s1 > 0 else 0.0,
    )
