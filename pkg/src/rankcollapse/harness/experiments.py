"""Runs, sweeps, verifications and equilibrium exports driven by an :class:`ExperimentConfig`.

Every cell is a pure function of (config, mask kind, temperature, mode,
seed).  X0 comes from the seed's root stream and layer t's weights from its
substream t, so cells sharing a seed see the same initial tokens and the same
base weights: comparisons across masks or temperatures are paired.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import __version__
from ..dynamics import StepError, WeightSchedule, check_a3, run_trajectory
from ..equilibria import (
    EquilibriumError,
    all_sign_variants,
    check_counterexample_conditions,
    construct_equilibrium,
    sample_counterexample_init,
)
from ..mask_graph import MaskError, classify
from ..metrics import stable_rank
from ..numerics import (
    SamplerError,
    numerical_rank,
    sample_hemisphere_rows,
    sample_sphere_rows,
    seeded_rng,
    snapshots_to_csv,
)
from ..theory import (
    HypothesisError,
    RateError,
    ergodicity_gap,
    stable_rank_bound,
    verify_oscillation_contraction,
    verify_phi_contraction,
)
from .config import ConfigError, ExperimentConfig


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    desc = out.stdout.strip()
    return f"{__version__}+g{desc}" if out.returncode == 0 and desc else __version__


def provenance(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "version": version_string(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": cfg.to_dict(),
    }


def initial_tokens(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    rng = seeded_rng(seed)
    if cfg.init == "sphere":
        return sample_sphere_rows(cfg.n, cfg.d, rng)
    if cfg.init == "hemisphere":
        return sample_hemisphere_rows(cfg.n, cfg.d, rng)
    x0 = sample_counterexample_init(cfg.n, cfg.d, cfg.w, rng)
    chk = check_counterexample_conditions(x0, cfg.w)
    if not chk.ok:
        raise SamplerError("counterexample sampler produced a non-compliant X0: " + "; ".join(chk.failures))
    return x0


def make_schedule(cfg: ExperimentConfig, seed: int, d_qk: float) -> WeightSchedule:
    return WeightSchedule(
        cfg.schedule, cfg.d, max(cfg.T, 1), cap=cfg.cap, seed=seed, d_qk=d_qk,
        w=cfg.w, k=cfg.k, fixed=cfg.fixed,
    )


def log_slope(steps, mu) -> Optional[float]:
    """Least-squares slope of log(mu) against step over the positive entries."""
    steps = np.asarray(steps, dtype=float)
    mu = np.asarray(mu, dtype=float)
    keep = mu > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(steps[keep], np.log(mu[keep]), 1)[0])


def _finite_or_none(v):
    v = float(v)
    return v if np.isfinite(v) else None


@dataclass
class CellResult:
    mask: str
    d_qk: float
    mode: str
    seed: int
    ok: bool
    csv_path: Optional[str] = None
    summary: dict = field(default_factory=dict)
    error: Optional[str] = None
    mu: Optional[list] = None  # per-step metric columns, used by the aggregator
    phi: Optional[list] = None
    stable_rank: Optional[list] = None

    def to_dict(self) -> dict:
        out = {
            "mask": self.mask, "d_qk": self.d_qk, "mode": self.mode, "seed": self.seed,
            "status": "ok" if self.ok else "failed", "csv": self.csv_path,
        }
        if self.ok:
            out["summary"] = self.summary
        else:
            out["error"] = self.error
        return out


def cell_name(mask: str, d_qk: float, mode: str, seed: int) -> str:
    return f"{mask}_dqk{d_qk:g}_{mode}_seed{seed}"


def run_cell(cfg: ExperimentConfig, mask: str, d_qk: float, mode: str, seed: int,
             out_dir: Optional[str] = None) -> CellResult:
    """One trajectory; module errors are captured into a failed result, never raised."""
    res = CellResult(mask, float(d_qk), mode, int(seed), ok=False)
    try:
        g = cfg.build_mask(mask)
        x0 = initial_tokens(cfg, seed)
        sched = make_schedule(cfg, seed, d_qk)
        rec = run_trajectory(
            x0, sched, g, mode, T=cfg.T, snapshot_steps=cfg.snapshot_steps,
            scores_from=cfg.scores_from,
        )
    except (StepError, ValueError, SamplerError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    mu = rec.column("mu")
    final = rec.metrics[-1]
    res.ok = True
    res.mu = [float(v) for v in mu]
    res.phi = [float(v) for v in rec.column("phi")]
    res.stable_rank = [float(v) for v in rec.column("stable_rank")]
    res.summary = {
        "T": cfg.T,
        "initial_mu": float(mu[0]),
        "final_mu": float(mu[-1]),
        "log_slope_mu": log_slope(rec.steps, mu),
        "final_rank": int(final.rank),
        "final_stable_rank": _finite_or_none(final.stable_rank),
        "final_sigma2_over_sigma1": float(final.sigma2_over_sigma1),
        "min_eps_layer": min(rec.eps_layer) if rec.eps_layer else None,
        "a3_ok": check_a3(sched, cfg.a3_bound, cfg.T) if cfg.T else True,
    }
    if out_dir is not None:
        name = cell_name(mask, d_qk, mode, seed)
        res.csv_path = os.path.join(out_dir, name + ".csv")
        with open(res.csv_path, "w") as fh:
            fh.write(rec.to_csv())
        if rec.snapshots:
            snap_path = os.path.join(out_dir, name + "_snapshots.csv")
            with open(snap_path, "w") as fh:
                fh.write(snapshots_to_csv(sorted(rec.snapshots.items())))
            res.summary["snapshots_csv"] = snap_path
    return res


def _run_cell_args(args):
    return run_cell(*args)


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """One trajectory per seed for the single (mask, d_qk, mode); writes CSVs and ``run_summary.json``."""
    out_dir = cfg.output_dir()
    os.makedirs(out_dir, exist_ok=True)
    cells = [run_cell(cfg, cfg.mask, cfg.d_qk, cfg.mode, s, out_dir) for s in cfg.seeds]
    summary = provenance(cfg, "run")
    summary["schema"] = "run_summary"
    summary["runs"] = [c.to_dict() for c in cells]
    summary["ok"] = all(c.ok for c in cells)
    if cfg.theorem is not None:
        reports = verify(cfg)
        summary["verification"] = reports
    path = os.path.join(out_dir, "run_summary.json")
    _write_json(path, summary)
    summary["path"] = path
    return summary


AGG_COLUMNS = ("mask", "d_qk", "mode", "step", "n_seeds", "mu_mean", "mu_std",
               "phi_mean", "phi_std", "stable_rank_mean", "stable_rank_std")


def aggregate_csv(cells: list) -> str:
    """Per-step mean and population std over the successful seeds of each (mask, d_qk, mode)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_COLUMNS)
    groups = {}
    for c in cells:
        groups.setdefault((c.mask, c.d_qk, c.mode), []).append(c)
    for (mask, d_qk, mode), members in groups.items():
        ok = [c for c in members if c.ok]
        if not ok:
            continue
        cols = {}
        for name in ("mu", "phi", "stable_rank"):
            cols[name] = np.array([getattr(c, name) for c in ok], dtype=float)
        for step in range(cols["mu"].shape[1]):
            row = [mask, repr(float(d_qk)), mode, step, len(ok)]
            for name in ("mu", "phi", "stable_rank"):
                v = cols[name][:, step]
                row += [repr(float(v.mean())), repr(float(v.std()))]
            w.writerow(row)
    return buf.getvalue()


def run_sweep(cfg: ExperimentConfig) -> dict:
    """Every (mask, d_qk, mode, seed) cell; per-cell CSVs, ``aggregate.csv`` and ``sweep_summary.json``.

    Cells run in a process pool when ``workers > 1``; results are collected in
    grid order so the outputs do not depend on scheduling.
    """
    out_dir = cfg.output_dir()
    os.makedirs(out_dir, exist_ok=True)
    grid = list(itertools.product(cfg.mask_axis, cfg.temperature_axis, cfg.mode_axis, cfg.seeds))
    if not grid:
        raise ConfigError("sweep grid is empty")
    args = [(cfg, m, t, mode, s, out_dir) for m, t, mode, s in grid]
    if cfg.workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(_run_cell_args, args))
    else:
        cells = [_run_cell_args(a) for a in args]
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w") as fh:
        fh.write(aggregate_csv(cells))
    summary = provenance(cfg, "sweep")
    summary["schema"] = "sweep_summary"
    summary["axes"] = {
        "mask": list(cfg.mask_axis), "d_qk": [float(t) for t in cfg.temperature_axis],
        "mode": list(cfg.mode_axis), "seed": list(cfg.seeds),
    }
    summary["cells"] = [c.to_dict() for c in cells]
    summary["failed"] = sum(not c.ok for c in cells)
    summary["aggregate_csv"] = agg_path
    path = os.path.join(out_dir, "sweep_summary.json")
    _write_json(path, summary)
    summary["path"] = path
    return summary


def _require(cond: bool, assumption: str, detail: str) -> None:
    if not cond:
        raise HypothesisError(assumption, detail)


def check_verify_hypotheses(cfg: ExperimentConfig) -> None:
    """Reject configurations outside the named theorem's hypotheses before running anything."""
    th = cfg.theorem
    if th is None:
        raise ConfigError("verify needs a theorem id (1, 2, cor1 or 3)")
    if th == "3":
        _require(cfg.w > 1, "w>1", "w must exceed 1")
        _require(cfg.w > cfg.n - 1 or min(cfg.n, cfg.d) < 2, "rank-2 chain",
                 f"w={cfg.w} must exceed N-1={cfg.n - 1} for the rank-2 equilibria")
        return
    g = cfg.build_mask()
    cls = classify(g)
    _require(cls.has_self_loops, "A1", "every token must attend to itself")
    _require(cfg.schedule in ("random_bounded", "random_orthogonal_value"), "A2",
             f"schedule {cfg.schedule!r} does not guarantee bounded W_Q, W_K")
    if th == "1":
        _require(cfg.mode == "san", "mode", "theorem 1 (oscillation bound) concerns the pure attention update (mode san)")
        _require(cls.quasi_strongly_connected, "quasi-strong connectivity", "mask has no center node")
        return
    _require(cfg.mode == "post_ln", "mode", f"theorem {th} concerns the post-LN update")
    _require(cfg.schedule == "random_orthogonal_value", "orthogonality",
             "W_V must be orthogonal (schedule random_orthogonal_value)")
    if th == "2":
        _require(cls.strongly_connected, "strong connectivity",
                 f"theorem 2 needs a strongly connected mask; {cfg.mask!r} is not")
    else:
        _require(cls.quasi_strongly_connected, "quasi-strong connectivity", "mask has no center node")
        _require(cfg.init == "hemisphere", "phi>=0", "theorem cor1 needs hemisphere init (phi(0) >= 0)")


def verify_seed(cfg: ExperimentConfig, seed: int) -> dict:
    g = cfg.build_mask()
    x0 = initial_tokens(cfg, seed)
    sched = make_schedule(cfg, seed, cfg.d_qk)
    states = []
    rec = run_trajectory(
        x0, sched, g, cfg.mode, T=cfg.T, keep_attention=True, scores_from=cfg.scores_from,
        callback=(lambda t, x: states.append(x.copy())) if cfg.theorem in ("2", "cor1") else None,
    )
    if cfg.theorem == "1":
        rep = verify_oscillation_contraction(rec.attentions, g)
    else:
        rep = verify_phi_contraction(
            [np.asarray(x0, dtype=float)] + states, rec.attentions, g,
            variant="thm2" if cfg.theorem == "2" else "cor1",
        )
    out = rep.to_dict()
    out["seed"] = int(seed)
    mu = rec.column("mu")
    out["initial_mu"] = float(mu[0])
    out["final_mu"] = float(mu[-1])
    out["log_slope_mu"] = log_slope(rec.steps, mu)
    if cfg.theorem in ("2", "cor1") and rec.attentions:
        out["final_ergodicity_gap"] = ergodicity_gap(rec.attentions, rec.scales)[-1]
    return out


def verify_equilibria(cfg: ExperimentConfig) -> list:
    reports = []
    for k in range(1, min(cfg.n, cfg.d) + 1):
        variants = all_sign_variants(cfg.n, cfg.d, k, cfg.w)
        residuals = [v.residual for v in variants]
        ranks = [v.rank for v in variants]
        violations = [
            {"signs": list(v.signs), "residual": r, "rank": rk}
            for v, r, rk in zip(variants, residuals, ranks)
            if not (r < 1e-9 and rk == k)
        ]
        reports.append({
            "theorem": "3", "k": k, "variants": len(variants),
            "max_residual": max(residuals), "ranks": sorted(set(ranks)),
            "violations": violations, "pass": not violations,
        })
    return reports


def verify(cfg: ExperimentConfig) -> dict:
    """Bound reports for ``cfg.theorem``; raises :class:`HypothesisError` on incompatible setups."""
    check_verify_hypotheses(cfg)
    if cfg.theorem == "3":
        reports = verify_equilibria(cfg)
    else:
        reports = [verify_seed(cfg, s) for s in cfg.seeds]
    return {"theorem": cfg.theorem, "reports": reports, "pass": all(r["pass"] for r in reports)}


def run_verify(cfg: ExperimentConfig) -> dict:
    out_dir = cfg.output_dir()
    os.makedirs(out_dir, exist_ok=True)
    result = verify(cfg)
    summary = provenance(cfg, "verify")
    summary["schema"] = "verify_summary"
    summary.update(result)
    path = os.path.join(out_dir, f"verify_theorem{cfg.theorem}.json")
    _write_json(path, summary)
    summary["path"] = path
    return summary


def equilibrium_csv(x: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i"] + [f"x_{j + 1}" for j in range(x.shape[1])])
    for i, row in enumerate(x):
        w.writerow([i + 1] + [repr(float(v)) for v in row])
    return buf.getvalue()


def equilibrium_metadata(eq) -> dict:
    full_rank = eq.k == min(eq.n, eq.d)
    sr = stable_rank(eq.x)
    meta = {
        "n": eq.n, "d": eq.d, "k": eq.k, "w": eq.w, "signs": list(eq.signs),
        "residual": eq.residual, "rank": numerical_rank(eq.x), "stable_rank": sr,
        "stable_rank_bound": stable_rank_bound(eq.n, eq.w) if full_rank else None,
        "unit_rows": bool(np.allclose(np.linalg.norm(eq.x, axis=1), 1.0, atol=1e-12)),
    }
    return meta


def run_equilibrium(n: int, d: int, k: int, w: float, signs=None, jordan_size=None,
                    out_dir: Optional[str] = None) -> dict:
    """Construct one equilibrium and write ``equilibrium.csv`` plus ``equilibrium.json``."""
    eq = construct_equilibrium(n, d, k, w, signs, jordan_size)
    meta = equilibrium_metadata(eq)
    meta["schema"] = "equilibrium"
    meta["version"] = version_string()
    meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "equilibrium.csv")
        with open(csv_path, "w") as fh:
            fh.write(equilibrium_csv(eq.x))
        meta["csv"] = csv_path
        _write_json(os.path.join(out_dir, "equilibrium.json"), meta)
    meta["x"] = eq.x
    return meta


VALIDATION_ERRORS = (ConfigError, MaskError, HypothesisError, EquilibriumError, RateError)
