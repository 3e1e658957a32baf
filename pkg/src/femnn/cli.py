"""Command line entry point: ``femnn <command> [--config FILE] [overrides]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex
from .dataset import MODES, DatasetError
from .fem import SolverError
from .mesh import ConfigurationError, StructureError

OUTPUT_ROOT_ENV = "FEMNN_OUTPUT_ROOT"

log = logging.getLogger("femnn")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _add_config_args(p):
    g = p.add_argument_group("configuration (override --config values)")
    g.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    g.add_argument("--output-dir", help="results directory; relative paths resolve against $" + OUTPUT_ROOT_ENV)
    g.add_argument("--rect", type=_floats, help="domain x0,x1,y0,y1")
    g.add_argument("--H", type=float, help="coarse cell size")
    g.add_argument("--k", type=int, help="refinement steps, h = H / 2^k")
    g.add_argument("--n-train", type=int, help="number of training problems N_T")
    g.add_argument("--n-test", type=int, help="number of test problems (default: N_T)")
    g.add_argument("--hidden", type=_ints, help="hidden widths, e.g. 512,512,512,512")
    g.add_argument("--activation", choices=["relu", "tanh"])
    g.add_argument("--alpha", type=float, help="Frobenius-product regularization factor")
    g.add_argument("--preprocessing", choices=MODES)
    g.add_argument("--literal-variance", action="store_true", default=None,
                   help="divide by the variance instead of the standard deviation")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--data-seed", type=int)
    g.add_argument("--init-seed", type=int)
    g.add_argument("--shuffle-seed", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--val-fraction", type=float)
    g.add_argument("--dtype", choices=["float32", "float64"])
    g.add_argument("--ref-levels", type=int, help="extra refinements of the fine mesh for the reference")
    g.add_argument("--cg-tol", type=float)
    g.add_argument("--threads", type=int, help="BLAS threads (1 = deterministic mode)")


_CONFIG_KEYS = ("rect", "H", "k", "n_train", "n_test", "hidden", "activation", "alpha", "preprocessing",
                "literal_variance", "seed", "data_seed", "init_seed", "shuffle_seed", "epochs", "patience",
                "batch_size", "lr", "val_fraction", "dtype", "ref_levels", "cg_tol", "threads", "output_dir")


def build_config(args, default_dir) -> ex.ExperimentConfig:
    overrides = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    if args.config is not None:
        cfg = ex.ExperimentConfig.load(args.config, **overrides)
    else:
        cfg = ex.ExperimentConfig().with_overrides(**overrides)
    out = Path(cfg.output_dir if overrides["output_dir"] or args.config else default_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return cfg.with_overrides(output_dir=str(out))


def make_parser():
    parser = argparse.ArgumentParser(prog="femnn", description="Hybrid FEM / neural network Poisson solver experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample right-hand sides and write train/test datasets")
    _add_config_args(p)

    p = sub.add_parser("train", help="train one network; writes model.ckpt")
    _add_config_args(p)
    p.add_argument("--data-dir", type=Path, help="directory with train.bin/test.bin (default: output dir)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test set; writes eval.csv")
    _add_config_args(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--zero-network", action="store_true", help="evaluate u_N = u_H (no correction)")

    p = sub.add_parser("convergence", help="errors for h = H/2, H/4, H/8")
    _add_config_args(p)
    p.add_argument("--levels", type=_ints, default=[1, 2, 3])
    p.add_argument("--zero-network", action="store_true", help="ablation: no network correction")

    p = sub.add_parser("sweep", help="vary one training parameter")
    _add_config_args(p)
    p.add_argument("--axis", required=True, choices=sorted(ex.SWEEP_DEFAULTS))
    p.add_argument("--values", type=_floats, help="comma separated axis values")
    p.add_argument("--full-scale", action="store_true", help="data axis up to 2^16 problems")

    p = sub.add_parser("preprocessing", help="compare none / minmax / standardize")
    _add_config_args(p)
    p.add_argument("--sizes", type=_ints, default=[2 ** 12])
    p.add_argument("--modes", type=lambda t: t.split(","), default=list(MODES))
    p.add_argument("--reps", type=int, default=1, help="repetitions with seeds seed, seed+1, ...")

    p = sub.add_parser("generalize", help="evaluate on (0,2)x(0,1) with a fixed right-hand side")
    _add_config_args(p)
    p.add_argument("--checkpoint", type=Path, help="reuse a trained model instead of training")
    p.add_argument("--levels", type=_ints)
    return parser


def run(args):
    cmd = args.command
    cfg = build_config(args, Path("runs") / cmd)
    log.info("output directory %s", cfg.output_dir)
    if cmd == "generate":
        paths = ex.cmd_generate(cfg)
        print("\n".join(map(str, paths)))
        return
    if cmd == "train":
        print(ex.cmd_train(cfg, args.data_dir))
        return
    if cmd == "eval":
        rows = ex.cmd_eval(cfg, args.checkpoint, args.data_dir, args.zero_network)
    elif cmd == "convergence":
        rows = ex.cmd_convergence(cfg, args.levels, args.zero_network)
    elif cmd == "sweep":
        values = args.values
        if values is not None and args.axis != "alpha":
            values = [int(v) for v in values]
        rows = ex.cmd_sweep(cfg, args.axis, values, args.full_scale)
    elif cmd == "preprocessing":
        bad = set(args.modes) - set(MODES)
        if bad:
            raise ConfigurationError(f"unknown preprocessing modes {sorted(bad)}")
        rows = ex.cmd_preprocessing(cfg, args.sizes, args.modes, args.reps)
    elif cmd == "generalize":
        rows = ex.cmd_generalize(cfg, args.checkpoint, levels=args.levels)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(cmd)
    _print_rows(rows)


def _print_rows(rows):
    cols = ("axis", "value", "uff-uc (test)", "uff-uf (test)", "uff-un (test)", "c_w")
    print("  ".join(f"{c:>14}" for c in cols))
    for row in rows:
        cells = [f"{row[c]:>14.4e}" if isinstance(row[c], float) else f"{row[c]!s:>14}" for c in cols]
        print("  ".join(cells))


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (SolverError, DatasetError, ex.ExperimentError, FloatingPointError, StructureError,
            ConfigurationError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"femnn: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
