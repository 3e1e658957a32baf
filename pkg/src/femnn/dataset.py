"""Patch-local training data: sampling right-hand sides, cutting patches, scaling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem
from .io import read_container, write_container
from .mesh import MeshLevel, PatchSet, Rect, build_mesh, build_patches, refine

log = logging.getLogger(__name__)

MODES = ("none", "minmax", "standardize")


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class RhsSampler:
    """Draws (C1, C2, C3, C4) with C1, C3 ~ U(freq_range) and C2, C4 ~ U(phase_range)."""

    seed: int
    freq_range: tuple = (1.0, 1.5)
    phase_range: tuple = (0.0, 1.0)

    def sample(self, n):
        u = np.random.default_rng(self.seed).random((n, 4))
        lo = np.array([self.freq_range[0], self.phase_range[0]] * 2)
        hi = np.array([self.freq_range[1], self.phase_range[1]] * 2)
        return lo + (hi - lo) * u


@dataclass(frozen=True)
class PatchSample:
    input: np.ndarray
    target: np.ndarray
    patch_id: int
    problem_id: int


# --------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Scaler:
    """Feature-wise affine map ``(x - shift) / scale``."""

    mode: str = "none"
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None
    literal_variance: bool = False

    @classmethod
    def fit(cls, X, mode="none", literal_variance=False):
        if mode not in MODES:
            raise ValueError(f"unknown preprocessing mode {mode!r}")
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise DatasetError("cannot fit preprocessing statistics on an empty dataset")
        d = X.shape[1]
        if mode == "none":
            return cls(mode, np.zeros(d), np.ones(d))
        if mode == "minmax":
            shift = X.min(axis=0)
            scale = X.max(axis=0) - shift
        else:
            shift = X.mean(axis=0)
            scale = X.var(axis=0) if literal_variance else X.std(axis=0)
        flat = scale <= 0
        if flat.any():
            log.warning("%d constant feature(s) under %s scaling are mapped to 0", int(flat.sum()), mode)
            scale = np.where(flat, 1.0, scale)
        return cls(mode, shift, scale, literal_variance)

    def transform(self, X):
        return (np.asarray(X) - self.shift) / self.scale

    def inverse_transform(self, X):
        return np.asarray(X) * self.scale + self.shift

    def to_dict(self):
        return {
            "mode": self.mode,
            "literal_variance": self.literal_variance,
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], np.asarray(d["shift"], float), np.asarray(d["scale"], float),
                   d.get("literal_variance", False))


@dataclass(frozen=True)
class Preprocessor:
    """Separate statistics for network inputs and regression targets."""

    mode: str
    inputs: Scaler
    targets: Scaler

    def to_dict(self):
        return {"mode": self.mode, "inputs": self.inputs.to_dict(), "targets": self.targets.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], Scaler.from_dict(d["inputs"]), Scaler.from_dict(d["targets"]))


def fit_preprocessor(ds: "DataSet", mode: str = "standardize", literal_variance: bool = False) -> Preprocessor:
    return Preprocessor(
        mode,
        Scaler.fit(ds.inputs, mode, literal_variance),
        Scaler.fit(ds.targets, mode, literal_variance),
    )


# --------------------------------------------------------------------------
# datasets


@dataclass(eq=False)
class DataSet:
    inputs: np.ndarray  # (N_T * N_P, 4 + (2^k+1)^2)
    targets: np.ndarray  # (N_T * N_P, (2^k+1)^2)
    params: np.ndarray  # (N_T, 4) right-hand side coefficients
    n_patches: int
    k: int
    rect: Rect
    nx: int
    ny: int
    seed: int
    coarse_coeffs: np.ndarray | None = field(default=None, repr=False)  # (n_coarse_nodes, N_T)
    fine_coeffs: np.ndarray | None = field(default=None, repr=False)  # (n_fine_nodes, N_T)
    preprocessor: Preprocessor | None = None

    @property
    def n_problems(self):
        return len(self.params)

    @property
    def H(self):
        return self.rect.width / self.nx

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    @property
    def output_dim(self):
        return self.targets.shape[1]

    @property
    def problem_ids(self):
        return np.repeat(np.arange(self.n_problems), self.n_patches)

    @property
    def patch_ids(self):
        return np.tile(np.arange(self.n_patches), self.n_problems)

    def __len__(self):
        return len(self.inputs)

    def sample(self, i) -> PatchSample:
        return PatchSample(self.inputs[i], self.targets[i], int(i % self.n_patches), int(i // self.n_patches))

    def meshes(self):
        coarse = build_mesh(self.rect, self.nx, self.ny)
        return coarse, refine(coarse, self.k)

    def select_problems(self, idx) -> "DataSet":
        """Subset of whole problems; patches of one problem are never separated."""
        idx = np.asarray(idx, dtype=int)
        rows = (idx[:, None] * self.n_patches + np.arange(self.n_patches)[None, :]).ravel()
        return replace(
            self,
            inputs=self.inputs[rows],
            targets=self.targets[rows],
            params=self.params[idx],
            coarse_coeffs=None if self.coarse_coeffs is None else self.coarse_coeffs[:, idx],
            fine_coeffs=None if self.fine_coeffs is None else self.fine_coeffs[:, idx],
        )

    def header(self):
        return {
            "kind": "dataset",
            "N_T": self.n_problems,
            "N_P": self.n_patches,
            "k": self.k,
            "H": self.H,
            "rect": self.rect.as_list(),
            "nx": self.nx,
            "ny": self.ny,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "seed": self.seed,
            "preprocessing": None if self.preprocessor is None else self.preprocessor.to_dict(),
        }


def patch_arrays(patches: PatchSet, coarse_coeffs, fine_coeffs, params):
    """Network inputs and targets for every (problem, patch) pair.

    Rows are ordered problem-major. ``coarse_coeffs``/``fine_coeffs`` are
    (n_nodes, P) stacks; ``fine_coeffs`` may be None (no targets).
    """
    fine = patches.fine
    P = coarse_coeffs.shape[1]
    f_nodes = fem.rhs_values(params, fine.nodes[:, 0], fine.nodes[:, 1])  # (n_fine, P)
    x_u = coarse_coeffs[patches.coarse_nodes]  # (N_P, 4, P)
    x_f = f_nodes[patches.fine_nodes]  # (N_P, npp, P)
    inputs = np.concatenate([x_u, x_f], axis=1).transpose(2, 0, 1).reshape(P * len(patches), -1)
    if fine_coeffs is None:
        return inputs, None
    z = fine_coeffs - fem.transfer(patches.coarse, coarse_coeffs, fine)
    targets = z[patches.fine_nodes].transpose(2, 0, 1).reshape(P * len(patches), -1)
    return inputs, targets


def generate(sampler: RhsSampler, coarse: MeshLevel, k: int, n_problems: int,
             quad_order=3, rel_tol=1e-10, max_iter=10_000) -> DataSet:
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_problems < 1:
        raise ValueError("n_problems must be >= 1")
    fine = refine(coarse, k)
    patches = build_patches(coarse, fine)
    params = sampler.sample(n_problems)
    try:
        U_H = fem.solve_family(coarse, params, quad_order, rel_tol, max_iter)
        U_h = fem.solve_family(fine, params, quad_order, rel_tol, max_iter)
    except fem.SolverError as exc:
        raise DatasetError(f"dataset generation failed: {exc}") from exc
    inputs, targets = patch_arrays(patches, U_H, U_h, params)
    log.info("generated %d problems x %d patches (k=%d, seed=%d)", n_problems, len(patches), k, sampler.seed)
    return DataSet(inputs, targets, params, len(patches), k, coarse.rect, coarse.nx, coarse.ny,
                   sampler.seed, U_H, U_h)


def split(ds: DataSet, train_fraction: float, seed: int = 0):
    """Split by whole problems into two datasets."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(ds.n_problems)
    n_train = int(round(train_fraction * ds.n_problems))
    n_train = min(max(n_train, 1), ds.n_problems - 1)
    return ds.select_problems(np.sort(order[:n_train])), ds.select_problems(np.sort(order[n_train:]))


def generate_train_test(seed: int, coarse: MeshLevel, k: int, n_problems: int, **kw):
    """Training set from ``seed`` and an equally sized test set from ``seed + 1``."""
    train = generate(RhsSampler(seed), coarse, k, n_problems, **kw)
    test = generate(RhsSampler(seed + 1), coarse, k, n_problems, **kw)
    return train, test


def save_dataset(ds: DataSet, path):
    arrays = {"inputs": ds.inputs, "targets": ds.targets, "params": ds.params}
    if ds.coarse_coeffs is not None:
        arrays["coarse_coeffs"] = ds.coarse_coeffs
    if ds.fine_coeffs is not None:
        arrays["fine_coeffs"] = ds.fine_coeffs
    write_container(path, ds.header(), arrays)


def load_dataset(path) -> DataSet:
    header, arrays = read_container(path)
    if header.get("kind") != "dataset":
        raise DatasetError(f"{path} is not a dataset file")
    pre = header.get("preprocessing")
    return DataSet(
        arrays["inputs"], arrays["targets"], arrays["params"], header["N_P"], header["k"],
        Rect(*header["rect"]), header["nx"], header["ny"], header["seed"],
        arrays.get("coarse_coeffs"), arrays.get("fine_coeffs"),
        None if pre is None else Preprocessor.from_dict(pre),
    )
