"""Per-time-index rectification: small regularized least-squares maps that
send coarse-solution coefficients to fine-solution coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nirb.linalg import dominant_eigenvalue, solve_regularized_normal
from nirb.mesh import interpolate_field
from nirb.reduced_basis import block_matvec
from nirb.time_interp import quadratic_time_interp


@dataclass
class RectificationTensor:
    """One N-by-N map per fine time index, applied as c -> R[n] @ c.

    ``deltas`` records the Tikhonov parameter actually used at each index;
    ``params`` is the training parameter list the maps were fitted on.  When
    delta is zero and the coefficient matrix is square and nonsingular, the
    maps reproduce the fine training coefficients exactly."""

    matrices: np.ndarray   # (n_times, N, N)
    deltas: np.ndarray     # (n_times,)
    delta_mode: str        # 'relative' or 'absolute'
    delta_value: float
    params: list

    @property
    def N(self):
        return self.matrices.shape[1]

    @property
    def n_times(self):
        return self.matrices.shape[0]


def coarse_to_fine_coefficients(coarse_traj, basis, forms, fine_grid):
    """Coefficients of a coarse trajectory after lifting it to the fine
    discretization: quadratic time interpolation, P1 interpolation onto the
    basis mesh componentwise, then L2 projection onto the modes."""
    lifted = quadratic_time_interp(coarse_traj, fine_grid)
    same_mesh = lifted.mesh is basis.mesh or (
        lifted.mesh.n_nodes == basis.mesh.n_nodes
        and np.array_equal(lifted.mesh.nodes, basis.mesh.nodes))
    if same_mesh:
        values = lifted.values
    else:
        parts = [interpolate_field(lifted.mesh, p, basis.mesh)
                 for p in lifted.split_fields()]
        values = np.concatenate(parts, axis=-1)
    weighted = block_matvec(forms.mass, basis.modes, basis.n_fields)
    return values @ weighted.T


def build_rectification(fine_trajs, coarse_trajs, basis, forms, fine_grid,
                        delta=None, delta_factor=1e-10):
    """Fit the rectification maps from matched fine/coarse training runs.

    fine_trajs and coarse_trajs map the same parameters (same order) to
    trajectories.  At every fine time index n the rows of A hold the lifted
    coarse coefficients and the rows of B the fine coefficients; column i of
    the normal-equation solve gives the map weights for mode i, and the
    transpose is stored so application is a plain matrix-vector product.

    delta=None uses the relative default delta_factor * sigma_1(A^T A) per
    time index; a float is taken as an absolute Tikhonov parameter (zero
    triggers an invertibility screen and fails loudly on rank deficiency)."""
    fine_keys = list(fine_trajs.keys())
    coarse_keys = list(coarse_trajs.keys())
    if fine_keys != coarse_keys:
        raise ValueError("fine and coarse training parameter sets differ")
    if basis.N == 0:
        raise ValueError("cannot rectify with an empty basis")
    weighted = block_matvec(forms.mass, basis.modes, basis.n_fields)

    A = np.stack([coarse_to_fine_coefficients(coarse_trajs[p], basis, forms,
                                              fine_grid) for p in fine_keys],
                 axis=1)  # (n_times, k, N)
    B = np.stack([fine_trajs[p].values @ weighted.T for p in fine_keys], axis=1)

    n_times = fine_grid.steps + 1
    N = basis.N
    mats = np.empty((n_times, N, N))
    deltas = np.empty(n_times)
    mode = "relative" if delta is None else "absolute"
    for n in range(n_times):
        An, Bn = A[n], B[n]
        if delta is None:
            d = delta_factor * dominant_eigenvalue(An.T @ An)
        else:
            d = float(delta)
        try:
            cols = solve_regularized_normal(An, Bn, d)
        except ValueError as exc:
            raise ValueError(f"time index {n}: {exc}") from exc
        mats[n] = cols.T
        deltas[n] = d
    return RectificationTensor(matrices=mats, deltas=deltas, delta_mode=mode,
                               delta_value=(delta_factor if delta is None
                                            else float(delta)),
                               params=list(fine_keys))


def apply_rectification(tensor, coeffs):
    """Apply the per-time-index maps to coefficient rows."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (tensor.n_times, tensor.N):
        raise ValueError(
            f"coefficients have shape {coeffs.shape}, expected "
            f"({tensor.n_times}, {tensor.N})")
    return np.einsum("nij,nj->ni", tensor.matrices, coeffs)
