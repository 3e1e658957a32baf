"""Experiment pipeline: data -> training -> hybrid evaluation -> CSV/manifest.

Every study (convergence, sweeps, preprocessing, generalization) is a list of
``ExperimentConfig`` points pushed through :func:`run_point`.  Results are
written as CSV rows with a fixed column set (``COLUMNS``) plus a JSON
manifest holding the full configuration of each point.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import fem
from .dataset import MODES, DataSet, Preprocessor, RhsSampler, fit_preprocessor, generate, split
from .hybrid import predict_family
from .io import read_container, write_container
from .mesh import Rect, build_mesh, build_patches, coarse_nodes_in_fine, refine
from .network import (
    Mlp, TrainConfig, init_mlp, load_checkpoint, save_checkpoint, spectral_bound, train,
)

log = logging.getLogger(__name__)

# streams for SeedSequence-derived seeds
_DATA, _INIT, _SHUFFLE, _SPLIT = range(4)

GENERALIZE_RHS = (1.2, 0.2, 1.4, 0.4)
GENERALIZE_RECT = (0.0, 2.0, 0.0, 1.0)

METRICS = ("l2", "nodal", "h1")
_PREFIX = {"l2": "", "nodal": "nodal ", "h1": "h1 "}
COLUMNS = (
    ["axis", "value", "N_T", "n_test", "k", "H", "h", "layers", "neurons", "alpha", "preprocessing", "seed"]
    + [f"{_PREFIX[m]}uff-{s} (test)" for m in METRICS for s in ("uc", "uf", "un")]
    + ["c_w", "train_loss", "val_loss", "best_epoch", "n_params"]
)


def error_column(metric, which):
    """CSV column of the mean test error of ``which`` in {"uc", "uf", "un"}."""
    return f"{_PREFIX[metric]}uff-{which} (test)"


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    rect: list = field(default_factory=lambda: [0.0, 1.0, 0.0, 1.0])
    H: float = 0.125
    k: int = 1
    n_train: int = 4096
    n_test: int | None = None  # None -> same as n_train
    hidden: list = field(default_factory=lambda: [512, 512, 512, 512])
    activation: str = "relu"
    alpha: float = 0.0
    preprocessing: str = "standardize"
    literal_variance: bool = False
    seed: int = 0
    data_seed: int | None = None
    init_seed: int | None = None
    shuffle_seed: int | None = None
    epochs: int = 30
    patience: int = 10
    batch_size: int = 1024
    lr: float = 1e-3
    val_fraction: float = 0.1
    dtype: str = "float32"
    ref_levels: int = 2
    quad_order: int = 3
    cg_tol: float = 1e-10
    threads: int = 1
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.preprocessing not in MODES:
            raise ValueError(f"unknown preprocessing {self.preprocessing!r}; choose from {MODES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_train < 2 and self.val_fraction > 0:
            raise ValueError("need at least 2 training problems for a validation split")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.ref_levels < 1:
            raise ValueError("ref_levels must be >= 1")
        self.rect = [float(v) for v in self.rect]
        self.hidden = [int(v) for v in self.hidden]

    # -- derived quantities
    @property
    def domain(self):
        return Rect(*self.rect)

    @property
    def h(self):
        return self.H / 2 ** self.k

    @property
    def test_size(self):
        return self.n_train if self.n_test is None else self.n_test

    def seeds(self):
        def pick(explicit, stream):
            return explicit if explicit is not None else derive_seed(self.seed, stream)
        return {
            "data": pick(self.data_seed, _DATA),
            "init": pick(self.init_seed, _INIT),
            "shuffle": pick(self.shuffle_seed, _SHUFFLE),
            "split": derive_seed(self.seed, _SPLIT),
        }

    def dims(self):
        npp = (2 ** self.k + 1) ** 2
        return [4 + npp, *self.hidden, npp]

    def train_config(self):
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
                           patience=self.patience, alpha=self.alpha,
                           shuffle_seed=self.seeds()["shuffle"], dtype=self.dtype)

    # -- serialization
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path, **overrides):
        with open(path) as fh:
            d = json.load(fh)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    def with_overrides(self, **overrides):
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def derive_seed(master, *keys):
    """Reproducible 32-bit seed from a master seed and integer stream keys."""
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


def coarse_mesh(cfg: ExperimentConfig, rect=None):
    rect = Rect(*(rect or cfg.rect))
    nx = rect.width / cfg.H
    ny = rect.height / cfg.H
    if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9:
        raise ValueError(f"H={cfg.H} does not divide the domain {rect.as_list()}")
    return build_mesh(rect, int(round(nx)), int(round(ny)))


@contextmanager
def single_threaded(n):
    with threadpool_limits(limits=n):
        yield


# --------------------------------------------------------------------------
# data

def make_datasets(cfg: ExperimentConfig):
    """Training and test datasets; the test set uses data seed + 1."""
    seed = cfg.seeds()["data"]
    coarse = coarse_mesh(cfg)
    kw = dict(quad_order=cfg.quad_order, rel_tol=cfg.cg_tol)
    train_ds = generate(RhsSampler(seed), coarse, cfg.k, cfg.n_train, **kw)
    test_ds = generate(RhsSampler(seed + 1), coarse, cfg.k, cfg.test_size, **kw)
    return train_ds, test_ds


_REF_CACHE: dict = {}
_REF_CACHE_BYTES = 1 << 30


def reference_solutions(fine, params, levels, quad_order=3, rel_tol=1e-10):
    """Solutions on ``levels`` further refinements of ``fine`` (memoised)."""
    ref = refine(fine, levels)
    key = (tuple(ref.rect.as_list()), ref.nx, ref.ny, quad_order, rel_tol, np.asarray(params).tobytes())
    if key in _REF_CACHE:
        return ref, _REF_CACHE[key]
    U = fem.solve_family(ref, params, quad_order, rel_tol)
    if U.nbytes <= _REF_CACHE_BYTES:
        _REF_CACHE.clear()
        _REF_CACHE[key] = U
    return ref, U


def clear_reference_cache():
    _REF_CACHE.clear()


# --------------------------------------------------------------------------
# evaluation

def problem_errors(coarse, fine, U_H, U_h, U_N, ref, U_ref):
    """Per-problem errors of u_H, u_h, u_N against the reference.

    Returns ``{metric: {"uc"|"uf"|"un": array (P,)}}`` for the L² norm, the
    nodal ℓ² norm over the fine nodes, and the H¹ seminorm.
    """
    at_fine = coarse_nodes_in_fine(fine, ref)
    U_H_fine = fem.transfer(coarse, U_H, fine)
    out = {m: {} for m in METRICS}
    for name, mesh, U in (("uc", coarse, U_H), ("uf", fine, U_h), ("un", fine, U_N)):
        E = U_ref - fem.transfer(mesh, U, ref)
        out["l2"][name] = fem.l2_norms(ref, E)
        out["h1"][name] = fem.h1_seminorms(ref, E)
        nodal = U_H_fine if name == "uc" else U
        out["nodal"][name] = np.linalg.norm(U_ref[at_fine] - nodal, axis=0)
    return out


def evaluate_model(model, preproc, test: DataSet, cfg: ExperimentConfig, chunk=1024):
    """Mean test errors of a (possibly absent) model on ``test``."""
    coarse, fine = test.meshes()
    patches = build_patches(coarse, fine)
    params = test.params
    sums = {m: {s: 0.0 for s in ("uc", "uf", "un")} for m in METRICS}
    ref_nodes = refine(fine, cfg.ref_levels).n_nodes
    # whole-set reference if it fits the cache, otherwise chunk by problems
    step = len(params) if ref_nodes * len(params) * 8 <= _REF_CACHE_BYTES else chunk
    for s in range(0, len(params), step):
        sl = slice(s, s + step)
        ref, U_ref = reference_solutions(fine, params[sl], cfg.ref_levels, cfg.quad_order, cfg.cg_tol)
        U_N = predict_family(model, preproc, patches, test.coarse_coeffs[:, sl], params[sl])
        errs = problem_errors(coarse, fine, test.coarse_coeffs[:, sl], test.fine_coeffs[:, sl], U_N, ref, U_ref)
        for m in METRICS:
            for name, v in errs[m].items():
                sums[m][name] += float(np.sum(v))
    n = len(params)
    return {error_column(m, name): sums[m][name] / n for m in METRICS for name in sums[m]}


# --------------------------------------------------------------------------
# one experiment point

@dataclass
class PointResult:
    row: dict
    model: Mlp | None
    preprocessor: object
    manifest: dict


def train_model(cfg: ExperimentConfig, train_ds: DataSet):
    """Fit preprocessing on the training split and train a fresh network."""
    seeds = cfg.seeds()
    if cfg.val_fraction > 0:
        trn, val = split(train_ds, 1.0 - cfg.val_fraction, seed=seeds["split"])
    else:
        trn, val = train_ds, None
    pre = fit_preprocessor(trn, cfg.preprocessing, cfg.literal_variance)
    X = pre.inputs.transform(trn.inputs)
    Z = pre.targets.transform(trn.targets)
    Xv = Zv = None
    if val is not None:
        Xv = pre.inputs.transform(val.inputs)
        Zv = pre.targets.transform(val.targets)
    net = init_mlp(cfg.dims(), cfg.activation, seed=seeds["init"])
    result = train(net, X, Z, Xv, Zv, cfg.train_config())
    return net, pre, result


def run_point(cfg: ExperimentConfig, axis="run", value="", zero_network=False, datasets=None) -> PointResult:
    """Generate data, train, evaluate; returns the CSV row and artefacts."""
    with single_threaded(cfg.threads):
        train_ds, test_ds = datasets if datasets is not None else make_datasets(cfg)
        if zero_network:
            net, pre, result = None, None, None
        else:
            try:
                net, pre, result = train_model(cfg, train_ds)
            except FloatingPointError as exc:
                raise ExperimentError(f"training failed: {exc}") from exc
        errors = evaluate_model(net, pre, test_ds, cfg)
    row = {
        "axis": axis, "value": value, "N_T": cfg.n_train, "n_test": cfg.test_size, "k": cfg.k,
        "H": cfg.H, "h": cfg.h, "layers": len(cfg.hidden),
        "neurons": cfg.hidden[0] if cfg.hidden else 0, "alpha": cfg.alpha,
        "preprocessing": "zero-network" if zero_network else cfg.preprocessing, "seed": cfg.seed,
        **errors,
        "c_w": spectral_bound(net) if net is not None else 0.0,
        "train_loss": result.train_loss if result else math.nan,
        "val_loss": result.best_val if result else math.nan,
        "best_epoch": result.best_epoch if result else 0,
        "n_params": net.n_params if net is not None else 0,
    }
    manifest = {
        "config": cfg.to_dict(),
        "seeds": cfg.seeds(),
        "axis": axis,
        "value": value,
        "zero_network": zero_network,
        "loss": ("per-batch mean of ||z - N(x)||_2^2 over preprocessed targets"
                 " + alpha / n_param * prod_i ||W_i||_F"),
        "training": None if result is None else result.to_dict(),
        "preprocessing": None if pre is None else pre.to_dict(),
        "row": row,
    }
    return PointResult(row, net, pre, manifest)


# --------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in COLUMNS])


def read_csv(path):
    """Rows of a results CSV with numeric fields converted; checks the schema."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(COLUMNS):
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                if key in ("axis", "value", "preprocessing"):
                    row[key] = val
                elif key in ("N_T", "n_test", "k", "layers", "neurons", "seed", "best_epoch", "n_params"):
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            rows.append(row)
    return rows


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def save_model(path, result: PointResult, cfg: ExperimentConfig):
    # the output location is not part of the model; keeps reruns byte-identical
    config = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    save_checkpoint(path, result.model, seed=cfg.seeds()["init"], config=config,
                    preprocessing=result.preprocessor.to_dict(), training=result.manifest["training"])


def load_model(path):
    net, header = load_checkpoint(path)
    pre = header.get("preprocessing")
    return net, (None if pre is None else Preprocessor.from_dict(pre)), header


def save_solution(path, sol: fem.FemSolution, **meta):
    """Nodal coefficients plus the mesh description in one container file."""
    m = sol.mesh
    header = {"kind": "solution", "rect": m.rect.as_list(), "nx": m.nx, "ny": m.ny, "level": m.level}
    header.update(meta)
    write_container(path, header, {"coeffs": sol.coeffs})


def load_solution(path):
    header, arrays = read_container(path)
    if header.get("kind") != "solution":
        raise ValueError(f"{path} is not a solution file")
    mesh = build_mesh(Rect(*header["rect"]), header["nx"], header["ny"], header.get("level", 0))
    return fem.FemSolution(mesh, arrays["coeffs"]), header


def _finish(out_dir, name, results):
    out_dir = Path(out_dir)
    rows = [r.row for r in results]
    write_csv(out_dir / f"{name}.csv", rows)
    write_json(out_dir / f"{name}_manifest.json", {"study": name, "points": [r.manifest for r in results]})
    return rows


# --------------------------------------------------------------------------
# studies

def cmd_convergence(cfg: ExperimentConfig, levels=(1, 2, 3), zero_network=False):
    """Coarse/fine/hybrid errors for h = H/2^k, k in ``levels``."""
    results = []
    for k in levels:
        point = replace(cfg, k=int(k))
        log.info("convergence: k=%d", k)
        results.append(run_point(point, axis="h/H", value=f"1/{2 ** int(k)}", zero_network=zero_network))
    return _finish(cfg.output_dir, "convergence", results)


SWEEP_DEFAULTS = {
    "data": [2 ** p for p in range(10, 15)],
    "layers": [1, 2, 4, 8],
    "neurons": [8, 16, 32, 64, 128, 256, 512],
    "alpha": [0.0, 1e-4, 1e-2, 1.0],
}
FULL_SCALE_DATA = [2 ** p for p in range(10, 17)]


def sweep_point(cfg: ExperimentConfig, axis, value, index):
    """Config of one sweep point; each point draws a fresh init/shuffle seed."""
    fresh = dict(init_seed=derive_seed(cfg.seed, _INIT, 1 + index),
                 shuffle_seed=derive_seed(cfg.seed, _SHUFFLE, 1 + index))
    if axis == "data":
        return replace(cfg, n_train=int(value), **fresh)
    if axis == "layers":
        width = cfg.hidden[0] if cfg.hidden else 512
        return replace(cfg, hidden=[width] * int(value), **fresh)
    if axis == "neurons":
        return replace(cfg, hidden=[int(value)] * len(cfg.hidden), **fresh)
    if axis == "alpha":
        return replace(cfg, alpha=float(value), **fresh)
    raise ValueError(f"unknown sweep axis {axis!r}")


def cmd_sweep(cfg: ExperimentConfig, axis, values=None, full_scale=False):
    if axis not in SWEEP_DEFAULTS:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_DEFAULTS)}")
    if values is None:
        values = FULL_SCALE_DATA if (full_scale and axis == "data") else SWEEP_DEFAULTS[axis]
    results = []
    for i, v in enumerate(values):
        log.info("sweep %s=%s", axis, v)
        results.append(run_point(sweep_point(cfg, axis, v, i), axis=axis, value=_fmt(v)))
    return _finish(cfg.output_dir, f"sweep_{axis}", results)


def cmd_preprocessing(cfg: ExperimentConfig, sizes=(2 ** 12,), modes=MODES, reps=1):
    """Same data and seeds per (size, rep); only the preprocessing mode differs."""
    results = []
    for n in sizes:
        for r in range(reps):
            base = replace(cfg, n_train=int(n), seed=cfg.seed + r)
            data = make_datasets(base)
            for mode in modes:
                log.info("preprocessing N_T=%d rep=%d mode=%s", n, r, mode)
                results.append(run_point(replace(base, preprocessing=mode), axis="preprocessing",
                                         value=mode, datasets=data))
    return _finish(cfg.output_dir, "preprocessing", results)


def preprocessing_summary(rows):
    """Mean L² hybrid test error per (N_T, mode), averaged over repetitions."""
    acc = {}
    for row in rows:
        acc.setdefault((row["N_T"], row["preprocessing"]), []).append(row[error_column("l2", "un")])
    return {key: float(np.mean(v)) for key, v in acc.items()}


def cmd_generalize(cfg: ExperimentConfig, checkpoint=None, rect=GENERALIZE_RECT, rhs=GENERALIZE_RHS,
                   levels=None):
    """Evaluate unit-square models on a larger domain with one fixed right-hand side.

    Trains (or loads ``checkpoint``) per level, then writes the errors of
    u_H, u_h, u_N and the solution files for each level.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    levels = [cfg.k] if levels is None else list(levels)
    params = np.array([rhs], dtype=np.float64)
    results = []
    for k in levels:
        point = replace(cfg, k=int(k))
        with single_threaded(point.threads):
            if checkpoint is not None:
                net, pre, header = load_model(checkpoint)
                result = None
            else:
                train_ds, _ = make_datasets(replace(point, n_test=1))
                net, pre, result = train_model(point, train_ds)
            if net.dims[0] != point.dims()[0]:
                raise ExperimentError(f"checkpoint input width {net.dims[0]} does not match k={k}")
            coarse = coarse_mesh(point, rect)
            fine = refine(coarse, point.k)
            patches = build_patches(coarse, fine)
            U_H = fem.solve_family(coarse, params, point.quad_order, point.cg_tol)
            U_h = fem.solve_family(fine, params, point.quad_order, point.cg_tol)
            U_N = predict_family(net, pre, patches, U_H, params)
            ref, U_ref = reference_solutions(fine, params, point.ref_levels, point.quad_order, point.cg_tol)
            errs = problem_errors(coarse, fine, U_H, U_h, U_N, ref, U_ref)
        row = {
            "axis": "generalize", "value": f"1/{2 ** int(k)}", "N_T": point.n_train, "n_test": 1,
            "k": point.k, "H": point.H, "h": point.h, "layers": len(point.hidden),
            "neurons": point.hidden[0] if point.hidden else 0, "alpha": point.alpha,
            "preprocessing": pre.mode if pre is not None else "none", "seed": point.seed,
            **{error_column(m, s): float(errs[m][s][0]) for m in METRICS for s in ("uc", "uf", "un")},
            "c_w": spectral_bound(net),
            "train_loss": result.train_loss if result else math.nan,
            "val_loss": result.best_val if result else math.nan,
            "best_epoch": result.best_epoch if result else 0,
            "n_params": net.n_params,
        }
        tag = f"k{k}"
        save_solution(out_dir / f"generalize_{tag}_uH.bin", fem.FemSolution(coarse, U_H[:, 0]), name="u_H", rhs=list(rhs))
        save_solution(out_dir / f"generalize_{tag}_uh.bin", fem.FemSolution(fine, U_h[:, 0]), name="u_h", rhs=list(rhs))
        save_solution(out_dir / f"generalize_{tag}_uN.bin", fem.FemSolution(fine, U_N[:, 0]), name="u_N", rhs=list(rhs))
        manifest = {"config": point.to_dict(), "seeds": point.seeds(), "checkpoint": None if checkpoint is None else str(checkpoint),
                    "domain": list(rect), "rhs": list(rhs),
                    "training": None if result is None else result.to_dict(), "row": row}
        results.append(PointResult(row, net, pre, manifest))
    return _finish(out_dir, "generalize", results)


# --------------------------------------------------------------------------
# stepwise pipeline: generate -> train -> eval

def _check_dataset(ds: DataSet, cfg: ExperimentConfig, n_problems, seed, path):
    expected = (cfg.k, n_problems, seed, cfg.H)
    found = (ds.k, ds.n_problems, ds.seed, ds.H)
    if found != expected or list(ds.rect.as_list()) != list(cfg.rect):
        raise ExperimentError(f"{path} does not match the configuration: (k, N_T, seed, H) = {found}, "
                              f"expected {expected}")


def cmd_generate(cfg: ExperimentConfig):
    """Write ``train.bin`` and ``test.bin`` datasets into the output directory."""
    from .dataset import save_dataset
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with single_threaded(cfg.threads):
        train_ds, test_ds = make_datasets(cfg)
    save_dataset(train_ds, out / "train.bin")
    save_dataset(test_ds, out / "test.bin")
    write_json(out / "config.json", cfg.to_dict())
    return out / "train.bin", out / "test.bin"


def load_or_make_datasets(cfg: ExperimentConfig, data_dir=None):
    """Datasets from ``data_dir`` (checked against ``cfg``) or freshly generated."""
    from .dataset import load_dataset
    data_dir = Path(data_dir or cfg.output_dir)
    paths = data_dir / "train.bin", data_dir / "test.bin"
    if not all(p.exists() for p in paths):
        return make_datasets(cfg)
    seed = cfg.seeds()["data"]
    train_ds, test_ds = (load_dataset(p) for p in paths)
    _check_dataset(train_ds, cfg, cfg.n_train, seed, paths[0])
    _check_dataset(test_ds, cfg, cfg.test_size, seed + 1, paths[1])
    return train_ds, test_ds


def cmd_train(cfg: ExperimentConfig, data_dir=None):
    """Train one model and write ``model.ckpt`` and ``train_manifest.json``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with single_threaded(cfg.threads):
        train_ds, _ = load_or_make_datasets(cfg, data_dir)
        try:
            net, pre, result = train_model(cfg, train_ds)
        except FloatingPointError as exc:
            raise ExperimentError(f"training failed: {exc}") from exc
    manifest = {"config": cfg.to_dict(), "seeds": cfg.seeds(), "training": result.to_dict(),
                "preprocessing": pre.to_dict()}
    point = PointResult({}, net, pre, manifest)
    save_model(out / "model.ckpt", point, cfg)
    write_json(out / "train_manifest.json", manifest)
    return out / "model.ckpt"


def cmd_eval(cfg: ExperimentConfig, checkpoint=None, data_dir=None, zero_network=False):
    """Evaluate a checkpoint on the test set; writes ``eval.csv``."""
    out = Path(cfg.output_dir)
    if zero_network:
        net = pre = None
        training = None
    else:
        net, pre, header = load_model(checkpoint or out / "model.ckpt")
        training = header.get("training")
        if net.dims[0] != cfg.dims()[0]:
            raise ExperimentError(f"checkpoint input width {net.dims[0]} does not match k={cfg.k}")
    with single_threaded(cfg.threads):
        _, test_ds = load_or_make_datasets(cfg, data_dir)
        errors = evaluate_model(net, pre, test_ds, cfg)
    row = {
        "axis": "eval", "value": "", "N_T": cfg.n_train, "n_test": cfg.test_size, "k": cfg.k,
        "H": cfg.H, "h": cfg.h, "layers": len(cfg.hidden), "neurons": cfg.hidden[0] if cfg.hidden else 0,
        "alpha": cfg.alpha, "preprocessing": "zero-network" if zero_network else pre.mode, "seed": cfg.seed,
        **errors,
        "c_w": spectral_bound(net) if net is not None else 0.0,
        "train_loss": training["train_loss"] if training else math.nan,
        "val_loss": training["best_val"] if training else math.nan,
        "best_epoch": training["best_epoch"] if training else 0,
        "n_params": net.n_params if net is not None else 0,
    }
    manifest = {"config": cfg.to_dict(), "seeds": cfg.seeds(), "checkpoint": None if zero_network else
                str(checkpoint or out / "model.ckpt"), "row": row}
    return _finish(out, "eval", [PointResult(row, net, pre, manifest)])
