"""Masked self-attention layer updates and trajectory recording.

Three update rules share one attention computation:

* ``san``      X' = A X W_V
* ``post_ln``  X' = LN(A X W_V)
* ``pre_ln``   X' = A LN(X) W_V

where ``A = softmax_G(X W_Q (X W_K)^T / sqrt(d_QK))`` and LN rescales every
row to unit 2-norm (no centering).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .mask_graph import MaskGraph, assert_a1
from .metrics import MetricsRow, ZeroRowError, compute_metrics
from .numerics import power_spectral_norm, random_orthogonal, seeded_rng, spectral_capped, spectral_norm

MODES = ("san", "post_ln", "pre_ln")
SCHEDULE_KINDS = ("constant", "random_bounded", "random_orthogonal_value", "zero_qk_jordan")


class StepError(RuntimeError):
    """A layer update failed; carries the failing step index."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {cause}")


class EmptyNeighborhoodError(ValueError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"token {node + 1} has no allowed attention target")


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    d_qk: float = 1.0

    def __post_init__(self):
        if not self.d_qk > 0:
            raise ValueError(f"temperature d_qk must be positive, got {self.d_qk}")

    def qk_norm(self) -> float:
        """max(||W_Q||_2, ||W_K||_2), the quantity bounded by A2."""
        return max(spectral_norm(self.wq), spectral_norm(self.wk))

    def satisfies_a2(self, cap: float) -> bool:
        return self.qk_norm() <= cap * (1 + 1e-12)


def jordan_value_matrix(d: int, k: int, w: float) -> np.ndarray:
    """Identity with a trailing k x k block: ones on the diagonal, ``w`` on the superdiagonal.

    ``k = 1`` is the identity; ``k = d`` is the full upper-bidiagonal matrix.
    """
    if not 1 <= k <= d:
        raise ValueError(f"Jordan block size k={k} must satisfy 1 <= k <= d={d}")
    m = np.eye(d)
    for r in range(d - k, d - 1):
        m[r, r + 1] = w
    return m


@dataclass
class WeightSchedule:
    """Per-layer weights ``layer(t)`` for t = 0..length-1.

    Random kinds derive layer ``t`` from the substream ``(seed, t)`` so the
    schedule is a pure function of its parameters.  ``fixed=True`` reuses the
    layer-0 draw at every depth.
    """

    kind: str
    d: int
    length: int
    cap: float = 1.0
    seed: int = 0
    d_qk: float = 1.0
    w: float = 2.0
    k: Optional[int] = None
    fixed: bool = False
    weights: Optional[LayerWeights] = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if self.kind == "constant" and self.weights is None:
            raise ValueError("constant schedule needs weights")
        if self.kind == "zero_qk_jordan":
            jordan_value_matrix(self.d, self.k or self.d, self.w)
        if self.cap < 0:
            raise ValueError("spectral cap C must be nonnegative")
        self._cache = {}

    @property
    def assumptions(self) -> tuple:
        """Hypotheses every emitted layer satisfies by construction."""
        return {
            "constant": (),
            "random_bounded": ("A2", "A3"),
            "random_orthogonal_value": ("A2", "A3", "orthogonal"),
            "zero_qk_jordan": ("A2", "A3-after-LN-rescaling"),
        }[self.kind]

    def layer(self, t: int) -> LayerWeights:
        if not 0 <= t < self.length:
            raise IndexError(f"layer {t} outside schedule of length {self.length}")
        if self.kind == "constant":
            return self.weights
        key = 0 if self.fixed else t
        if key not in self._cache:
            self._cache[key] = self._draw(key)
        return self._cache[key]

    def _draw(self, t: int) -> LayerWeights:
        d = self.d
        if self.kind == "zero_qk_jordan":
            z = np.zeros((d, d))
            return LayerWeights(z, z, jordan_value_matrix(d, self.k or d, self.w), self.d_qk)
        rng = seeded_rng(self.seed, t)
        wq = spectral_capped(d, self.cap, rng)
        wk = spectral_capped(d, self.cap, rng)
        if self.kind == "random_orthogonal_value":
            wv = random_orthogonal(d, rng)
        else:
            wv = spectral_capped(d, 1.0, rng)
        return LayerWeights(wq, wk, wv, self.d_qk)

    def __len__(self):
        return self.length

    def __iter__(self):
        return (self.layer(t) for t in range(self.length))


def check_a3(schedule, bound: float = 10.0, T: Optional[int] = None) -> bool:
    """Running products of W_V stay below ``bound`` in spectral norm over ``T`` layers.

    The norm of each accumulated product is estimated by power iteration.
    """
    T = len(schedule) if T is None else T
    prod = None
    for t in range(T):
        wv = schedule.layer(t).wv
        prod = wv if prod is None else prod @ wv
        if power_spectral_norm(prod) > bound:
            return False
    return True


def raw_scores(x, wq, wk, d_qk: float = 1.0) -> np.ndarray:
    if not d_qk > 0:
        raise ValueError(f"temperature d_qk must be positive, got {d_qk}")
    return (x @ wq) @ (x @ wk).T / np.sqrt(d_qk)


def masked_softmax(r: np.ndarray, g: MaskGraph, allowed: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise softmax restricted to each token's neighbor set; zero elsewhere.

    Rows are stabilized by subtracting the maximum over allowed entries only.
    """
    mask = g.allowed() if allowed is None else allowed
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        raise EmptyNeighborhoodError(int(empty[0]))
    shifted = np.where(mask, r, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def attention(x, lw: LayerWeights, g: MaskGraph, allowed=None) -> np.ndarray:
    return masked_softmax(raw_scores(x, lw.wq, lw.wk, lw.d_qk), g, allowed)


def rms_norm(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit 2-norm.  A zero row is an error, never epsilon-guarded."""
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroRowError(int(zero[0]))
    return x / norms[:, None]


def step_san(x, lw: LayerWeights, g: MaskGraph, allowed=None) -> np.ndarray:
    return attention(x, lw, g, allowed) @ x @ lw.wv


def step_post_ln(x, lw: LayerWeights, g: MaskGraph, allowed=None) -> np.ndarray:
    y = step_san(x, lw, g, allowed)
    try:
        return rms_norm(y)
    except ZeroRowError as exc:
        raise ZeroRowError(exc.row, "attention output") from None


def step_pre_ln(x, lw: LayerWeights, g: MaskGraph, allowed=None, scores_from: str = "raw") -> np.ndarray:
    """A LN(X) W_V.  ``scores_from`` selects whether A sees X ("raw") or LN(X) ("normalized")."""
    xn = rms_norm(x)
    if scores_from == "raw":
        a = attention(x, lw, g, allowed)
    elif scores_from == "normalized":
        a = attention(xn, lw, g, allowed)
    else:
        raise ValueError(f"scores_from must be 'raw' or 'normalized', got {scores_from!r}")
    return a @ xn @ lw.wv


def layer_step(x, lw, g, mode: str, allowed=None, scores_from: str = "raw"):
    """One layer in ``mode``; returns ``(X_next, A, D)`` with D the LN row scales (or None)."""
    if scores_from not in ("raw", "normalized"):
        raise ValueError(f"scores_from must be 'raw' or 'normalized', got {scores_from!r}")
    if mode == "pre_ln":
        xn = rms_norm(x)
        a = attention(xn if scores_from == "normalized" else x, lw, g, allowed)
        return a @ xn @ lw.wv, a, None
    a = attention(x, lw, g, allowed)
    y = a @ x @ lw.wv
    if mode == "san":
        return y, a, None
    if mode == "post_ln":
        norms = np.linalg.norm(y, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroRowError(int(zero[0]), "attention output")
        return y / norms[:, None], a, 1.0 / norms
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


CSV_COLUMNS = ("step", "mu", "phi", "stable_rank", "sigma_min", "rank", "eps_layer", "sigma2_over_sigma1")


@dataclass
class TrajectoryRecord:
    mode: str
    metrics: list = field(default_factory=list)  # MetricsRow per recorded step
    steps: list = field(default_factory=list)  # step index of each metrics row
    eps_layer: list = field(default_factory=list)  # min on-edge attention of layer t (len T)
    snapshots: dict = field(default_factory=dict)  # step -> X
    attentions: list = field(default_factory=list)
    scales: list = field(default_factory=list)
    final: Optional[np.ndarray] = None

    @property
    def T(self) -> int:
        return self.steps[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.metrics])

    def to_csv(self) -> str:
        """CSV with one row per step 0..T; eps_layer of row t is the layer producing X^(t)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t, m in zip(self.steps, self.metrics):
            eps = "" if t == 0 else repr(float(self.eps_layer[t - 1]))
            w.writerow([
                t, repr(m.mu), repr(m.phi), repr(m.stable_rank), repr(m.sigma_min),
                m.rank, eps, repr(m.sigma2_over_sigma1),
            ])
        return buf.getvalue()


def run_trajectory(
    x0,
    schedule,
    g: MaskGraph,
    mode: str = "san",
    T: Optional[int] = None,
    snapshot_steps: Sequence[int] = (),
    keep_attention: bool = False,
    scores_from: str = "raw",
    metrics_every: int = 1,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> TrajectoryRecord:
    """Iterate ``mode`` for ``T`` layers from ``x0``; metrics are taken after each full step.

    ``metrics_every > 1`` thins the metric rows (kept at multiples of it and at T)
    for long runs; the CSV contract assumes the default of 1.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    T = len(schedule) if T is None else T
    if len(schedule) < T:
        raise ValueError(f"schedule has {len(schedule)} layers, need {T}")
    assert_a1(g)
    allowed = g.allowed()
    x = np.array(x0, dtype=float)
    snaps = set(snapshot_steps)
    rec = TrajectoryRecord(mode=mode)
    rec.metrics.append(compute_metrics(x))
    rec.steps.append(0)
    if 0 in snaps:
        rec.snapshots[0] = x.copy()
    for t in range(T):
        try:
            x, a, dscale = layer_step(x, schedule.layer(t), g, mode, allowed, scores_from)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError("non-finite token values")
        except (ValueError, FloatingPointError) as exc:
            raise StepError(t, exc) from exc
        rec.eps_layer.append(float(a[allowed].min()))
        if keep_attention:
            rec.attentions.append(a)
            rec.scales.append(dscale)
        if (t + 1) % metrics_every == 0 or t + 1 == T:
            rec.metrics.append(compute_metrics(x))
            rec.steps.append(t + 1)
        if t + 1 in snaps:
            rec.snapshots[t + 1] = x.copy()
        if callback is not None:
            callback(t + 1, x)
    rec.final = x
    return rec
