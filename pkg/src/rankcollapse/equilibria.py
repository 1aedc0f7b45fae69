"""Non-collapsing equilibria of post-LN attention with a Jordan-block value matrix.

Setting: causal mask, W_Q = W_K = 0 (so token i averages tokens 1..i) and
W_V = I + w S with S the superdiagonal shift.  Token i is at equilibrium when
``X_i = S_i W / ||S_i W||`` with ``S_i = X_1 + ... + X_i``.  Choosing
``||S_i W|| = 1`` gives the singular system ``X_i (I - W) = S_{i-1} W`` whose
last coordinate is free up to sign; that sign choice is what the ``signs``
vector records.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .dynamics import LayerWeights, WeightSchedule, jordan_value_matrix, step_post_ln
from .mask_graph import build_mask
from .numerics import numerical_rank

RESIDUAL_TOL = 1e-9


class EquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class EquilibriumSet:
    n: int
    d: int
    k: int
    w: float
    signs: tuple
    x: np.ndarray
    wv: np.ndarray

    @property
    def residual(self) -> float:
        return fixed_point_residual(self.x, self.wv)

    @property
    def rank(self) -> int:
        return numerical_rank(self.x)


def zero_qk_weights(wv: np.ndarray) -> LayerWeights:
    z = np.zeros_like(wv)
    return LayerWeights(z, z, wv, 1.0)


def fixed_point_residual(x: np.ndarray, wv: np.ndarray) -> float:
    """||F(X) - X||_F for one zero-QK causal post-LN layer with value matrix ``wv``."""
    x = np.asarray(x, dtype=float)
    g = build_mask("causal", x.shape[0])
    return float(np.linalg.norm(step_post_ln(x, zero_qk_weights(wv), g) - x))


def chain_betas(x: np.ndarray, wv: np.ndarray) -> np.ndarray:
    """beta_i = 1 / ||(X_1 + ... + X_i) W_V||, recomputed from the state."""
    s = np.cumsum(np.asarray(x, dtype=float), axis=0) @ wv
    return 1.0 / np.linalg.norm(s, axis=1)


def construct_equilibrium(
    n: int,
    d: int,
    k: int,
    w: float,
    signs: Optional[Sequence[int]] = None,
    jordan_size: Optional[int] = None,
) -> EquilibriumSet:
    """Rank-k equilibrium for ``n`` tokens in dimension ``d``.

    The first ``n - k + 1`` tokens sit at ``s_1 e_d``; each later token solves
    ``X_i (I - W) = S_{i-1} W`` with its free last coordinate taking sign
    ``s_j``.  ``signs`` has length ``k`` (default all +1).  W is the Jordan
    value matrix with a trailing block of size ``jordan_size`` (default d).
    """
    if not 1 <= k <= min(n, d):
        raise EquilibriumError(f"rank k={k} must satisfy 1 <= k <= min(N, d) = {min(n, d)}")
    if not w > 1:
        raise EquilibriumError("w must exceed 1")
    m = n - k + 1
    if k > 1 and not w > m:
        raise EquilibriumError(
            f"w={w} must exceed N-k+1={m} for rank {k} (square root argument "
            f"1 - (N-k+1)^2/w^2 must be positive)"
        )
    js = d if jordan_size is None else jordan_size
    if not k <= js <= d:
        raise EquilibriumError(f"Jordan block size {js} must lie in [k, d] = [{k}, {d}]")
    signs = tuple([1] * k if signs is None else (int(s) for s in signs))
    if len(signs) != k or any(s not in (1, -1) for s in signs):
        raise EquilibriumError(f"signs must be {k} entries of +1/-1, got {signs}")
    wv = jordan_value_matrix(d, js, w)

    x = np.zeros((n, d))
    x[:m, d - 1] = signs[0]
    for i in range(m, n):
        v = x[:i].sum(axis=0) @ wv  # S_{i-1} W
        if abs(v[0]) > 1e-14:
            raise EquilibriumError(f"token {i + 1}: chain left the Jordan block")
        # X_i (I - W) = -w [0, X_i1, ..., X_i,d-1] = v
        x[i, : d - 1] = -v[1:] / w
        rest = 1.0 - float(x[i, : d - 1] @ x[i, : d - 1])
        if rest < 0:
            raise EquilibriumError(f"token {i + 1}: negative square-root argument {rest}")
        x[i, d - 1] = signs[i - m + 1] * np.sqrt(rest)
    return EquilibriumSet(n, d, k, float(w), signs, x, wv)


def all_sign_variants(n: int, d: int, k: int, w: float) -> list:
    return [construct_equilibrium(n, d, k, w, s) for s in product((1, -1), repeat=k)]


def jordan_schedule(d: int, w: float, length: int, k: Optional[int] = None) -> WeightSchedule:
    return WeightSchedule("zero_qk_jordan", d, length, w=w, k=k)


@dataclass
class CounterexampleCheck:
    ok: bool
    failures: list
    r: np.ndarray  # r_1..r_{d-1}, r_1 = 1
    r_sum: float
    r_bound: float

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "failures": list(self.failures),
            "r": [float(v) for v in self.r],
            "r_sum": self.r_sum,
            "r_bound": self.r_bound,
        }


def check_counterexample_conditions(x0: np.ndarray, w: float) -> CounterexampleCheck:
    """Initial conditions under which token 2 keeps X_{2,d-1} <= -1/w.

    Checks X_{1,1} > 0, X_{2,i} < 0 for i <= d-2, X_{2,d-1} <= -1/w, and
    ``sum_j w^(-2j) (r_{d-1-j}/r_{d-1})^2 <= sqrt(w^2 - 1)`` for j = 1..d-2,
    where ``X_{2,i}/X_{2,1} = r_i w^(i-1)``.
    """
    x0 = np.asarray(x0, dtype=float)
    n, d = x0.shape
    if n < 2 or d < 2:
        raise ValueError("need at least two tokens in dimension >= 2")
    failures = []
    if not x0[0, 0] > 0:
        failures.append(f"X_1,1 = {x0[0, 0]:.6g} must be > 0")
    for i in range(d - 2):
        if not x0[1, i] < 0:
            failures.append(f"X_2,{i + 1} = {x0[1, i]:.6g} must be < 0")
    if not x0[1, d - 2] <= -1.0 / w:
        failures.append(f"X_2,{d - 1} = {x0[1, d - 2]:.6g} must be <= -1/w = {-1.0 / w:.6g}")
    if x0[1, 0] != 0:
        r = np.array([x0[1, i] / x0[1, 0] / w**i for i in range(d - 1)])
    else:
        r = np.full(d - 1, np.nan)
    bound = float(np.sqrt(w**2 - 1.0))
    rsum = float(sum((r[d - 2 - j] / r[d - 2]) ** 2 / w ** (2 * j) for j in range(1, d - 1)))
    if not rsum <= bound:
        failures.append(f"r-condition sum {rsum:.6g} must be <= sqrt(w^2-1) = {bound:.6g}")
    return CounterexampleCheck(not failures, failures, r, rsum, bound)


def sample_counterexample_init(
    n: int, d: int, w: float, rng: np.random.Generator, first_token_tilt: float = 1e-12
) -> np.ndarray:
    """Random unit-row X0 satisfying :func:`check_counterexample_conditions`.

    Token 1 is ``e_d`` tilted by ``first_token_tilt`` towards a random direction
    with positive coordinates.  The invariance argument for token 2 treats
    token 1 as already sitting at ``e_d``; a tilt of 1e-3 lets token 1's slow
    transient push token 2 out of the region within a few hundred steps for
    d >= 3, so the default keeps it negligible over 1e4 steps; token 2 has ``X_{2,d-1}`` uniform in
    ``[-0.9, -1/w]`` (scaled into range), small negative leading coordinates
    meeting the r-condition, and a random sign on the last coordinate; later
    tokens are uniform on the sphere.
    """
    if w <= 1:
        raise ValueError("w must exceed 1")
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)

    t1 = np.abs(rng.standard_normal(d))
    t1[d - 1] = 0.0
    t1 /= np.linalg.norm(t1)
    x[0] = np.zeros(d)
    x[0, d - 1] = 1.0
    x[0] += first_token_tilt * t1
    x[0] /= np.linalg.norm(x[0])

    a = rng.uniform(1.0 / w, max(1.0 / w, 0.9))
    row = np.zeros(d)
    row[d - 2] = -a
    if d > 2:
        budget = min(np.sqrt(w**2 - 1.0), 1.0)
        lead = -np.abs(rng.standard_normal(d - 2))
        scale = rng.uniform(0.2, 0.5) * a * np.sqrt(budget) / np.linalg.norm(lead)
        row[: d - 2] = lead * scale
    rest = 1.0 - row @ row
    row[d - 1] = rng.choice([-1.0, 1.0]) * np.sqrt(max(rest, 0.0))
    x[1] = row / np.linalg.norm(row)
    return x
