"""Collapse-bound parameters and layer-by-layer verification.

The verifiers take recorded attention matrices (and states, for the
LayerNorm bounds) and compare the measured contraction of every block of
``r`` layers, ``r`` being the mask radius, against the factor the bound
allows for the measured attention floor ``eps``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mask_graph import MaskGraph, classify
from .metrics import min_pairwise_cos
from .numerics import singular_values

# slack for floating-point comparisons of contraction inequalities
CONTRACTION_ATOL = 1e-12


class RateError(ValueError):
    """Bound parameters outside the range where the rate is defined."""


class HypothesisError(ValueError):
    """A verifier precondition (named assumption) does not hold."""

    def __init__(self, assumption: str, detail: str = ""):
        self.assumption = assumption
        msg = f"hypothesis {assumption} violated"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class SparsityMismatchError(ValueError):
    pass


@dataclass
class BoundReport:
    theorem: str
    epsilon: float
    radius: int
    factor: float  # allowed contraction per block of `radius` layers
    measured: list = field(default_factory=list)  # (start step, measured factor) off the rounding floor
    violations: list = field(default_factory=list)  # (start step, measured, allowed)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def worst(self) -> float:
        return max((m for _, m in self.measured), default=float("nan"))

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "epsilon": self.epsilon,
            "radius": self.radius,
            "factor": self.factor,
            "blocks_measured": len(self.measured),
            "worst_measured": None if not self.measured else self.worst,
            "violations": [
                {"step": int(s), "measured": float(m) if np.isfinite(m) else None, "allowed": float(a)}
                for s, m, a in self.violations
            ],
            "notes": list(self.notes),
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_sparsity(a: np.ndarray, allowed: np.ndarray, t: int) -> None:
    if np.any(a[~allowed] != 0.0):
        raise SparsityMismatchError(f"layer {t}: nonzero attention outside the mask")
    if np.any(a[allowed] <= 0.0):
        raise SparsityMismatchError(f"layer {t}: zero attention on a mask edge")


def empirical_epsilon(attentions: Sequence[np.ndarray], g: MaskGraph) -> float:
    """Smallest on-edge attention weight over all layers."""
    allowed = g.allowed()
    eps = np.inf
    for t, a in enumerate(attentions):
        _check_sparsity(a, allowed, t)
        eps = min(eps, float(a[allowed].min()))
    if not np.isfinite(eps):
        raise ValueError("no attention matrices given")
    return eps


def epsilon_floor(cap: float, g: MaskGraph, d_qk: float = 1.0, max_row_norm: float = 1.0) -> float:
    """Analytic lower bound on on-edge attention under A2.

    Scores lie in ``[-s, s]`` with ``s = (cap * max_row_norm)**2 / sqrt(d_qk)``,
    so every allowed weight is at least ``exp(-2 s) / max_i |N_i|``.
    """
    s = (cap * max_row_norm) ** 2 / np.sqrt(d_qk)
    return float(np.exp(-2.0 * s) / max(len(nb) for nb in g.neighbors))


def san_rate(eps: float, r: int) -> float:
    """Per-layer contraction factor (1 - eps**r)**(1/r) of the pure-attention bound."""
    if not (eps > 0 and r >= 1 and eps**r < 1):
        raise RateError(f"need eps > 0, r >= 1, eps**r < 1 (eps={eps}, r={r})")
    return float((1.0 - eps**r) ** (1.0 / r))


def ln_rate(eps: float, r: int, n_centers: int = 1) -> float:
    """Per-layer factor (1 - n eps**(2r))**(1/(2r)) of the LayerNorm bound for mu."""
    if not (eps > 0 and r >= 1 and n_centers >= 1):
        raise RateError(f"need eps > 0, r >= 1, n_centers >= 1 (eps={eps}, r={r})")
    q = n_centers * eps ** (2 * r)
    if q >= 1:
        raise RateError(f"n_centers * eps**(2r) = {q} must be < 1")
    return float((1.0 - q) ** (1.0 / (2 * r)))


def ergodicity_coefficient(p: np.ndarray) -> float:
    """max over x of osc(P x)/osc(x) for row-stochastic P: half the largest row L1 distance."""
    diffs = np.abs(p[:, None, :] - p[None, :, :]).sum(axis=2)
    return float(0.5 * diffs.max())


def verify_oscillation_contraction(
    attentions: Sequence[np.ndarray],
    g: MaskGraph,
    eps: Optional[float] = None,
    atol: float = CONTRACTION_ATOL,
) -> BoundReport:
    """Check osc(A^(t+r-1)...A^(t) x) <= (1 - eps**r) osc(x) for every start t.

    The measured factor of a block is the ergodicity coefficient of the
    r-fold product, which is the supremum of the oscillation ratio over all
    vectors x (basis vectors included), so a pass covers every column of
    every state.
    """
    cls = classify(g)
    if not cls.quasi_strongly_connected:
        raise HypothesisError("quasi-strong connectivity", "mask has no center node")
    r = max(cls.radius, 1)
    if eps is None:
        eps = empirical_epsilon(attentions, g)
    factor = 1.0 - eps**r
    rep = BoundReport("1", eps, r, factor)
    for t in range(len(attentions) - r + 1):
        p = attentions[t]
        for s in range(t + 1, t + r):
            p = attentions[s] @ p
        m = ergodicity_coefficient(p)
        rep.measured.append((t, m))
        if m > factor + atol:
            rep.violations.append((t, m, factor))
    return rep


def one_minus_phi(x: np.ndarray) -> float:
    """1 - min pairwise cosine, computed as max ||u_i - u_j||^2 / 2 to avoid cancellation."""
    u = x / np.linalg.norm(x, axis=1, keepdims=True)
    sq = (u * u).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (u @ u.T)
    d2 = np.maximum(d2, 0.0)
    # direct differences are more accurate once tokens are nearly aligned
    if d2.max() < 1e-6:
        d2 = ((u[:, None, :] - u[None, :, :]) ** 2).sum(axis=2)
    return float(d2.max() / 2.0)


def verify_phi_contraction(
    states: Sequence[np.ndarray],
    attentions: Sequence[np.ndarray],
    g: MaskGraph,
    variant: str = "thm2",
    eps: Optional[float] = None,
    use_center_count: bool = False,
    atol: float = 1e-13,
) -> BoundReport:
    """Check 1 - phi(t+r) <= q (1 - phi(t)) along a post-LN trajectory with orthogonal W_V.

    ``variant="thm2"``: strongly connected mask, q = 1 - N eps^(2r); blocks are
    checked from the first step at which phi >= 0.  ``variant="cor1"``:
    quasi-strongly connected mask and phi(0) >= 0, q = 1 - eps^(2r) (or
    1 - n_centers eps^(2r) with ``use_center_count``).
    """
    cls = classify(g)
    n = g.n
    if variant == "thm2":
        if not cls.strongly_connected:
            raise HypothesisError("strong connectivity", "the N eps^(2r) factor needs a strongly connected mask")
        weight = n
    elif variant == "cor1":
        if not cls.quasi_strongly_connected:
            raise HypothesisError("quasi-strong connectivity", "mask has no center node")
        if min_pairwise_cos(states[0]) < 0:
            raise HypothesisError("phi>=0", "initial minimum pairwise cosine is negative")
        weight = cls.center_count if use_center_count else 1
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if len(states) != len(attentions) + 1:
        raise ValueError("need one more state than attention matrices")
    r = max(cls.radius, 1)
    if eps is None:
        eps = empirical_epsilon(attentions, g)
    factor = 1.0 - weight * eps ** (2 * r)
    if factor <= 0:
        raise RateError(f"{weight} * eps^(2r) = {weight * eps ** (2 * r)} must be < 1")
    rep = BoundReport("2" if variant == "thm2" else "cor1", eps, r, factor)
    gap = [one_minus_phi(x) for x in states]
    start = 0
    if variant == "thm2":
        nonneg = [t for t, x in enumerate(states) if min_pairwise_cos(x) >= 0]
        if not nonneg:
            rep.notes.append("phi never became nonnegative; no blocks checked")
            return rep
        start = nonneg[0]
        rep.notes.append(f"blocks checked from step {start} (first phi >= 0)")
    floor = 0
    for t in range(start, len(states) - r):
        # ratios of gaps at the rounding floor are noise; such blocks are still checked
        measured = gap[t + r] / gap[t] if gap[t] > atol else None
        if measured is None:
            floor += 1
        else:
            rep.measured.append((t, measured))
        if gap[t + r] > factor * gap[t] + atol:
            rep.violations.append((t, np.inf if measured is None else measured, factor))
    if floor:
        rep.notes.append(f"{floor} blocks started with 1 - phi <= {atol:g}; checked, ratio not recorded")
    return rep


def ergodicity_gap(attentions: Sequence[np.ndarray], scales: Optional[Sequence] = None) -> list:
    """sigma_2/sigma_1 of the partial products P^(t) = D^(t)A^(t) ... D^(0)A^(0).

    The product is renormalized to unit Frobenius norm every step; the ratio is
    scale invariant so this changes nothing but the exponent range.
    """
    p = None
    out = []
    for t, a in enumerate(attentions):
        m = a if scales is None or scales[t] is None else np.asarray(scales[t])[:, None] * a
        p = m if p is None else m @ p
        p = p / np.linalg.norm(p)
        s = singular_values(p)
        out.append(float(s[1] / s[0]) if s.size > 1 else 0.0)
    return out


def stable_rank_bound(n: int, w: float) -> float:
    """Upper bound N / (N - (N-1)/w^2) on the stable rank of the full-rank equilibrium."""
    if not w > 1:
        raise ValueError("w must exceed 1")
    return n / (n - (n - 1) / w**2)


def w_for_delta(delta: float) -> float:
    """Smallest w with stable-rank excess at most delta: sqrt(1/delta + 1)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return float(np.sqrt(1.0 / delta + 1.0))


def d2_fixed_points(w: float) -> tuple:
    """The two fixed points of the second token in the 2-D example, (-1/w, +-sqrt(1 - 1/w^2))."""
    if not w > 1:
        raise ValueError("w must exceed 1")
    h = np.sqrt(1.0 - 1.0 / w**2)
    return np.array([-1.0 / w, h]), np.array([-1.0 / w, -h])


def d2_second_token_limit(x2: np.ndarray, w: float) -> str:
    """Where token 2 goes in the 2-D example once token 1 sits at (0, 1).

    In ``y = x_2/x_1`` the map is ``y -> y + w + 1/x_1``; with ``x_1 < 0`` its
    fixed points are ``y_A = -sqrt(w^2-1)`` (repelling) and ``y_B = +sqrt(w^2-1)``
    (attracting).  Returns ``"B"`` for ``x_1 < 0, y > y_A``, ``"A"`` on A itself
    and ``"e2"`` (collapse onto token 1) otherwise.
    """
    if not w > 1:
        raise ValueError("w must exceed 1")
    x1, x2v = float(x2[0]), float(x2[1])
    if x1 >= 0:
        return "e2"
    y = x2v / x1
    y_a = -np.sqrt(w**2 - 1.0)
    if np.isclose(y, y_a, rtol=0, atol=1e-12):
        return "A"
    return "B" if y > y_a else "e2"
