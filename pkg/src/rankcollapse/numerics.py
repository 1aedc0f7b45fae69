"""Seeded randomness, SVD helpers and initial-condition samplers."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

DEFAULT_RANK_RTOL = 1e-8


class SamplerError(RuntimeError):
    """A rejection sampler ran out of attempts."""


def seeded_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; extra ``keys`` select an independent substream.

    ``seeded_rng(s, k)`` is reproducible per ``(s, k)`` and independent of how
    many other substreams were drawn, which keeps parallel sweeps deterministic.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def split(seed: int, index: int) -> np.random.Generator:
    return seeded_rng(seed, index)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, R-diagonal sign fixed)."""
    z = rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def spectral_capped(d: int, cap: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian d x d matrix rescaled so its spectral norm equals ``cap``."""
    g = rng.standard_normal((d, d))
    return g * (cap / np.linalg.norm(g, 2))


def sample_sphere_rows(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def sample_hemisphere_rows(
    n: int, d: int, rng: np.random.Generator, max_tries: int = 10_000
) -> np.ndarray:
    """Unit rows with every pairwise inner product >= 0.

    Draws a random pole ``v`` and rows on the sphere, keeps rows with a
    positive component along ``v`` and accepts the batch once the minimum
    pairwise inner product is verified nonnegative.  Rows are drawn from a
    cap around the pole so acceptance is not exponentially rare in ``n``.
    """
    pole = sample_sphere_rows(1, d, rng)[0]
    for _ in range(max_tries):
        x = sample_sphere_rows(n, d, rng)
        # cap of half-angle 45 degrees: any two rows are within 90 degrees
        x = x + pole * (1.0 + np.abs(x @ pole))[:, None]
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        if np.all(x @ pole > 0) and (x @ x.T).min() >= 0.0:
            return x
    raise SamplerError(f"hemisphere sampler failed after {max_tries} attempts (n={n}, d={d})")


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.vt


def svd(x: np.ndarray) -> SvdResult:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("svd input has non-finite entries")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    return SvdResult(u, s, vt)


def singular_values(x: np.ndarray) -> np.ndarray:
    return np.linalg.svd(np.asarray(x, dtype=float), compute_uv=False)


def min_singular(x: np.ndarray) -> float:
    return float(singular_values(x)[-1])


def numerical_rank(x: np.ndarray, rel_tol: float = DEFAULT_RANK_RTOL) -> int:
    """Number of singular values above ``rel_tol * sigma_1``."""
    s = singular_values(x)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def spectral_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def power_spectral_norm(m: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """||m||_2 by power iteration on m^T m from a fixed random start."""
    m = np.asarray(m, dtype=float)
    v = seeded_rng(0).standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = m.T @ (m @ v)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        new = float(np.sqrt(nu))
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def snapshots_to_csv(snapshots: Iterable[tuple]) -> str:
    """Serialize ``(t, X)`` pairs with header ``t,i,x_1..x_d``; ``i`` is 1-based."""
    snapshots = list(snapshots)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if snapshots:
        d = snapshots[0][1].shape[1]
        w.writerow(["t", "i"] + [f"x_{k + 1}" for k in range(d)])
        for t, x in snapshots:
            for i, row in enumerate(x):
                w.writerow([t, i + 1] + [repr(float(v)) for v in row])
    return buf.getvalue()
