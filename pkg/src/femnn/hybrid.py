"""Hybrid solution: coarse FEM solution plus patch-wise network corrections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .dataset import Preprocessor, patch_arrays
from .mesh import MeshLevel, Patch, PatchSet
from .network import Mlp, forward


@dataclass(eq=False)
class HybridSolution:
    solution: fem.FemSolution
    model_id: str = ""
    problem_id: int = -1

    @property
    def coeffs(self):
        return self.solution.coeffs


def restrict_inputs(u_H: fem.FemSolution, f, patch: Patch, fine: MeshLevel) -> np.ndarray:
    """Network input for one patch: 4 coarse corner values, then f at the fine nodes."""
    xy = fine.nodes[patch.fine_node_ids]
    return np.concatenate([u_H.coeffs[patch.coarse_node_ids], f(xy[:, 0], xy[:, 1])])


def restrict(v, patch: Patch) -> np.ndarray:
    """Fine nodal values of ``v`` on the patch, patch-local row-major."""
    return np.asarray(v)[patch.fine_node_ids]


def prolong(pred, patch: Patch, multiplicity, accumulator):
    """accumulator[x] += pred[x] / n(x) over the patch's fine nodes."""
    pred = np.asarray(pred)
    if pred.shape != patch.fine_node_ids.shape:
        raise ValueError(f"prediction has {pred.shape} values, patch has {patch.fine_node_ids.shape}")
    ids = patch.fine_node_ids
    accumulator[ids] += pred / multiplicity[ids]
    return accumulator


def prolongation_matrix(patches: PatchSet) -> sp.csr_matrix:
    """Sparse form of Σ_P P_P acting on patch-major stacked patch vectors."""
    cols = np.arange(patches.fine_nodes.size)
    rows = patches.fine_nodes.ravel()
    vals = 1.0 / patches.multiplicity[rows]
    return sp.csr_matrix((vals, (rows, cols)), shape=(patches.fine.n_nodes, patches.fine_nodes.size))


def accumulate(patches: PatchSet, preds):
    """Σ_P P_P of per-patch predictions, boundary zeroed.

    ``preds`` is ``(P * N_P, npp)`` problem-major; returns ``(n_fine, P)``.
    """
    n_p, npp = patches.fine_nodes.shape
    P = len(preds) // n_p
    stacked = np.asarray(preds, dtype=np.float64).reshape(P, n_p * npp).T
    out = prolongation_matrix(patches) @ stacked
    out[patches.fine.boundary_mask] = 0.0
    return out


def _predict(model, preproc: Preprocessor | None, inputs):
    if model is None:
        return np.zeros((len(inputs), inputs.shape[1] - 4))
    if preproc is not None:
        inputs = preproc.inputs.transform(inputs)
    out = forward(model, inputs) if isinstance(model, Mlp) else model(inputs)
    out = np.asarray(out, dtype=np.float64)
    if preproc is not None:
        out = preproc.targets.inverse_transform(out)
    return out


def _check_dims(model, patches):
    if isinstance(model, Mlp) and (model.dims[0] != patches.input_dim or model.dims[-1] != patches.output_dim):
        raise ValueError(f"model dims {model.dims[0]}->{model.dims[-1]} do not match patch layout "
                         f"{patches.input_dim}->{patches.output_dim}")


def predict_family(model, preproc, patches: PatchSet, coarse_coeffs, params, chunk=256):
    """Hybrid fine-mesh coefficients (n_fine, P) for a batch of sine problems.

    ``model`` is an Mlp, any callable on preprocessed input rows, or None for
    a zero correction.
    """
    _check_dims(model, patches)
    coarse_coeffs = np.asarray(coarse_coeffs).reshape(patches.coarse.n_nodes, -1)
    params = np.atleast_2d(params)
    out = np.empty((patches.fine.n_nodes, coarse_coeffs.shape[1]))
    for s in range(0, coarse_coeffs.shape[1], chunk):
        U = coarse_coeffs[:, s:s + chunk]
        inputs, _ = patch_arrays(patches, U, None, params[s:s + chunk])
        corr = accumulate(patches, _predict(model, preproc, inputs))
        out[:, s:s + chunk] = fem.transfer(patches.coarse, U, patches.fine) + corr
    return out


def predict_hybrid(model, preproc, u_H: fem.FemSolution, f, patches: PatchSet,
                   model_id="", problem_id=-1) -> HybridSolution:
    """u_N = u_H + Σ_P P_P N(R_P u_H, R_P f) for a single right-hand side."""
    _check_dims(model, patches)
    if preproc is not None and preproc.inputs.shift is None:
        raise ValueError("preprocessor is not fitted")
    fine = patches.fine
    inputs = np.stack([restrict_inputs(u_H, f, p, fine) for p in patches.patches])
    preds = _predict(model, preproc, inputs)
    corr = np.zeros(fine.n_nodes)
    for p, pred in zip(patches.patches, preds):
        prolong(pred, p, patches.multiplicity, corr)
    corr[fine.boundary_mask] = 0.0
    coeffs = fem.transfer(patches.coarse, u_H.coeffs, fine) + corr
    return HybridSolution(fem.FemSolution(fine, coeffs), model_id, problem_id)
