"""Command-line entry point: ``rankcollapse {mask,run,sweep,verify,equilibrium}``.

Exit codes: 0 success, 1 run or verification failure, 2 validation or usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from ..dynamics import StepError
from ..mask_graph import MASK_KINDS, MaskError, assert_a1, build_mask, classify, load_edge_file
from ..numerics import SamplerError
from .config import DEFAULT_OUT, OUT_ENV, ConfigError, make_config, parse_value
from .experiments import (
    VALIDATION_ERRORS,
    run_equilibrium,
    run_experiment,
    run_sweep,
    run_verify,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# (flag, config key, help); values are parsed with the config-file parser
_CONFIG_FLAGS = (
    ("--mask", "mask", f"mask kind: {', '.join(MASK_KINDS)}"),
    ("--n", "n", "number of tokens N"),
    ("--width", "width", "window width for the sliding-window masks"),
    ("--mask-file", "mask_file", "edge-list file for --mask custom"),
    ("--mode", "mode", "san, post_ln or pre_ln"),
    ("--scores-from", "scores_from", "pre-LN attention input: raw or normalized"),
    ("--schedule", "schedule", "random_bounded, random_orthogonal_value or zero_qk_jordan"),
    ("--cap", "cap", "spectral norm C of W_Q and W_K"),
    ("--w", "w", "superdiagonal weight of the Jordan value matrix"),
    ("--k", "k", "Jordan block size (default d)"),
    ("--fixed", "fixed", "reuse the layer-0 weights at every layer (true/false)"),
    ("--d", "d", "token dimension"),
    ("--T", "T", "number of layers"),
    ("--d-qk", "d_qk", "temperature d_QK"),
    ("--masks", "masks", "sweep axis: comma-separated mask kinds"),
    ("--temperatures", "temperatures", "sweep axis: comma-separated d_QK values"),
    ("--modes", "modes", "sweep axis: comma-separated modes"),
    ("--seeds", "seeds", "comma-separated seeds, or lo:hi for range(lo, hi)"),
    ("--init", "init", "sphere, hemisphere or counterexample"),
    ("--snapshot-steps", "snapshot_steps", "comma-separated steps whose full state is saved"),
    ("--theorem", "theorem", "bound to check: 1, 2, cor1 or 3"),
    ("--a3-bound", "a3_bound", "threshold for the W_V running-product check"),
    ("--workers", "workers", "parallel worker processes for sweeps"),
    ("--out", "out_dir", f"output directory (default ${OUT_ENV} or ./rankcollapse_out)"),
)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file; flags override it")
    for flag, key, help_text in _CONFIG_FLAGS:
        p.add_argument(flag, dest=key, default=None, help=help_text)


def _config_from(args: argparse.Namespace, **defaults):
    overrides = {}
    for _, key, _ in _CONFIG_FLAGS:
        text = getattr(args, key)
        if text is not None:
            overrides[key] = parse_value(key, text)
    return make_config(args.config, overrides, **defaults)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankcollapse",
        description="Token dynamics of masked self-attention: collapse runs, bound checks, equilibria.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="classify an attention mask")
    p.add_argument("--kind", required=True, choices=MASK_KINDS)
    p.add_argument("--n", type=int, help="number of tokens (not needed with --file)")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--file", help="edge-list file: first line n, then 1-based 'j i' pairs")
    p.add_argument("--json", action="store_true", help="print only the JSON document")

    p = sub.add_parser("run", help="one trajectory per seed, CSV per seed plus a JSON summary")
    _add_config_flags(p)
    p = sub.add_parser("sweep", help="grid over masks x temperatures x modes x seeds")
    _add_config_flags(p)
    p = sub.add_parser("verify", help="check a collapse bound or the equilibrium construction")
    _add_config_flags(p)

    p = sub.add_parser("equilibrium", help="construct a rank-k equilibrium and export it")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True, help="rank of the equilibrium")
    p.add_argument("--w", type=float, required=True)
    p.add_argument("--signs", help="comma-separated +1/-1, one per free coordinate (default all +1)")
    p.add_argument("--jordan-size", type=int, default=None)
    p.add_argument("--out", dest="out_dir", default=None)
    return parser


def _cmd_mask(args) -> int:
    if args.file:
        g = load_edge_file(args.file)
    elif args.kind == "custom":
        raise ConfigError("--kind custom needs --file")
    else:
        if args.n is None:
            raise ConfigError("--n is required unless --file is given")
        g = build_mask(args.kind, args.n, width=args.width)
    cls = classify(g)
    doc = cls.to_dict()
    if not args.json:
        print(f"n={cls.n} self_loops={str(cls.has_self_loops).lower()} "
              f"strongly_connected={str(cls.strongly_connected).lower()} "
              f"quasi_strongly_connected={str(cls.quasi_strongly_connected).lower()}")
        print(f"center_nodes={doc['center_nodes']} radius={cls.radius} diameter={cls.diameter}")
    print(json.dumps(doc, sort_keys=True))
    assert_a1(g)
    return EXIT_OK


def _cmd_run(args) -> int:
    summary = run_experiment(_config_from(args))
    for cell in summary["runs"]:
        if cell["status"] == "ok":
            s = cell["summary"]
            print(f"seed {cell['seed']}: final_mu={s['final_mu']:.3e} "
                  f"log_slope={s['log_slope_mu']} rank={s['final_rank']} -> {cell['csv']}")
        else:
            print(f"seed {cell['seed']}: FAILED {cell['error']}", file=sys.stderr)
    print(f"summary: {summary['path']}")
    ok = summary["ok"] and summary.get("verification", {}).get("pass", True)
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_sweep(args) -> int:
    summary = run_sweep(_config_from(args))
    print(f"{len(summary['cells'])} cells, {summary['failed']} failed; "
          f"aggregate: {summary['aggregate_csv']}; summary: {summary['path']}")
    for cell in summary["cells"]:
        if cell["status"] == "failed":
            print(f"  {cell['mask']} d_qk={cell['d_qk']:g} {cell['mode']} seed {cell['seed']}: "
                  f"{cell['error']}", file=sys.stderr)
    return EXIT_OK if summary["failed"] == 0 else EXIT_FAIL


def _cmd_verify(args) -> int:
    cfg = _config_from(args)
    if cfg.theorem is None:
        raise ConfigError("verify needs --theorem")
    summary = run_verify(cfg)
    for rep in summary["reports"]:
        tag = "PASS" if rep["pass"] else "FAIL"
        if cfg.theorem == "3":
            print(f"k={rep['k']}: {rep['variants']} variants, max residual "
                  f"{rep['max_residual']:.2e}, ranks {rep['ranks']} {tag}")
        else:
            print(f"seed {rep['seed']}: eps={rep['epsilon']:.3e} r={rep['radius']} "
                  f"factor={rep['factor']:.6f} violations={len(rep['violations'])} {tag}")
    print(f"theorem {cfg.theorem}: {'PASS' if summary['pass'] else 'FAIL'} ({summary['path']})")
    return EXIT_OK if summary["pass"] else EXIT_FAIL


def _cmd_equilibrium(args) -> int:
    signs = None
    if args.signs:
        try:
            signs = [int(s) for s in args.signs.split(",")]
        except ValueError:
            raise ConfigError(f"--signs must be comma-separated +1/-1, got {args.signs!r}") from None
    out_dir = args.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT
    meta = run_equilibrium(args.n, args.d, args.k, args.w, signs, args.jordan_size, out_dir)
    bound = meta["stable_rank_bound"]
    print(f"rank={meta['rank']} residual={meta['residual']:.2e} stable_rank={meta['stable_rank']:.6f}"
          + (f" bound={bound:.6f}" if bound is not None else ""))
    print(f"X*: {meta['csv']}")
    return EXIT_OK


_COMMANDS = {
    "mask": _cmd_mask,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "equilibrium": _cmd_equilibrium,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except VALIDATION_ERRORS + (MaskError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, StepError, SamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
