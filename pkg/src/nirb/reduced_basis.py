"""Reduced basis construction from solution trajectories: proper orthogonal
decomposition, two snapshot-selection loops, and the H1 re-orthogonalization
eigenproblem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from nirb.linalg import sym_eig

log = logging.getLogger(__name__)


@dataclass
class ReducedBasis:
    """L2-orthonormal modes stored as rows of ``modes``.

    Multi-component fields stack their components along the mode axis, with
    all inner products taken blockwise.  ``eigenvalues`` holds the ascending
    H1 spectrum after re-orthogonalization (the squared H1 norms of the
    modes), and ``provenance`` records how the basis was selected."""

    mesh: object
    modes: np.ndarray                     # (N, n_fields * n_nodes)
    eigenvalues: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)
    n_fields: int = 1

    @property
    def N(self):
        return self.modes.shape[0]


def block_matvec(mat, U, n_fields=1):
    """Apply a nodal matrix to every component block of the last axis."""
    U = np.asarray(U, dtype=float)
    if n_fields == 1:
        return mat.matvec(U)
    parts = np.split(U, n_fields, axis=-1)
    return np.concatenate([mat.matvec(p) for p in parts], axis=-1)


def mass_inner(forms, U, V, n_fields=1):
    """Blockwise L2 inner products; U (..., d) against V (k, d) -> (..., k)."""
    return np.asarray(U) @ block_matvec(forms.mass, np.asarray(V), n_fields).T


def l2_norms(forms, U, n_fields=1):
    """Rowwise L2 norms of (stacked) nodal fields."""
    U = np.asarray(U, dtype=float)
    sq = (U * block_matvec(forms.mass, U, n_fields)).sum(-1)
    return np.sqrt(np.clip(sq, 0.0, None))


def pod(snapshots, forms, keep, n_fields=1):
    """Proper orthogonal decomposition in the L2 inner product.

    ``keep`` is either a mode count (int) or a relative singular value
    threshold (float): directions with sigma_i / sigma_1 > keep survive.
    Returns (modes, singular_values); an all-zero snapshot set yields zero
    modes with a warning."""
    S = np.asarray(snapshots, dtype=float)
    if S.ndim != 2 or S.shape[0] == 0:
        raise ValueError(f"need a (k, d) snapshot array, got shape {S.shape}")
    G = S @ block_matvec(forms.mass, S, n_fields).T
    lam, W = sym_eig(0.5 * (G + G.T))
    lam = lam[::-1]
    W = W[:, ::-1]
    sig = np.sqrt(np.clip(lam, 0.0, None))
    if sig[0] == 0.0:
        log.warning("POD of an all-zero snapshot set: returning zero modes")
        return np.zeros((0, S.shape[1])), sig
    if isinstance(keep, (int, np.integer)):
        k = min(int(keep), int((sig > 0).sum()))
    else:
        k = int((sig > keep * sig[0]).sum())
    k = max(k, 1)
    modes = (W[:, :k].T @ S) / sig[:k, None]
    _mass_mgs(modes, None, forms, n_fields)
    return modes, sig


def _mass_mgs(cands, against, forms, n_fields, drop_tol=None):
    """Modified Gram-Schmidt in the L2 inner product, two passes.

    Orthogonalizes the rows of ``cands`` in place against ``against`` (may be
    None) and against each other; with drop_tol set, rows whose norm falls
    below drop_tol relative to their original size are removed and the kept
    rows are returned."""
    orig = l2_norms(forms, cands, n_fields)
    kept = []
    for i in range(cands.shape[0]):
        v = cands[i]
        for _ in range(2):
            if against is not None and len(against):
                coef = mass_inner(forms, v, against, n_fields)
                v = v - coef @ against
            for j in kept:
                c = mass_inner(forms, v, cands[j:j + 1], n_fields)[0]
                v = v - c * cands[j]
        nrm = l2_norms(forms, v, n_fields)
        if drop_tol is not None and nrm <= drop_tol * max(orig[i], 1e-300):
            continue
        if nrm == 0.0:
            continue
        cands[i] = v / nrm
        kept.append(i)
    return cands[kept]


def pod_greedy(trajectories, forms, n_max, pod_tol=1e-6):
    """Greedy-in-parameter, POD-in-time basis construction.

    The first parameter maximizes the sup-in-time L2 norm of its trajectory;
    afterwards the worst relative sup-in-time projection error picks the next
    parameter, whose projection residual is POD-compressed (directions with
    sigma_i/sigma_1 > pod_tol) and appended after a Gram-Schmidt safeguard.
    Stops at n_max total modes, when the worst remaining error drops below
    pod_tol, or when the training set is exhausted.  Ties break toward the
    earliest parameter in the given order."""
    items = list(trajectories.items())
    if not items:
        raise ValueError("empty training set")
    n_fields = items[0][1].n_fields
    norm_inf = [l2_norms(forms, traj.values, n_fields).max() for _, traj in items]

    first = int(np.argmax(norm_inf))
    selected = [first]
    modes, sig = pod(items[first][1].values, forms, pod_tol, n_fields)
    modes = modes[:n_max]
    picks = [(items[first][0], modes.shape[0])]

    while modes.shape[0] < n_max:
        remaining = [k for k in range(len(items)) if k not in selected]
        if not remaining:
            break
        errs = []
        for k in remaining:
            U = items[k][1].values
            resid = U - mass_inner(forms, U, modes, n_fields) @ modes
            denom = norm_inf[k] if norm_inf[k] > 0 else 1.0
            errs.append(l2_norms(forms, resid, n_fields).max() / denom)
        worst = int(np.argmax(errs))
        if errs[worst] <= pod_tol:
            break
        k = remaining[worst]
        selected.append(k)
        U = items[k][1].values
        resid = U - mass_inner(forms, U, modes, n_fields) @ modes
        new, _ = pod(resid, forms, pod_tol, n_fields)
        new = new[:n_max - modes.shape[0]]
        new = _mass_mgs(new.copy(), modes, forms, n_fields, drop_tol=1e-10)
        if new.shape[0] == 0:
            log.warning("residual POD at parameter %s produced no new modes",
                        items[k][0])
            break
        modes = np.vstack([modes, new])
        picks.append((items[k][0], new.shape[0]))

    return ReducedBasis(
        mesh=items[0][1].mesh, modes=modes, eigenvalues=None,
        provenance={"algorithm": "pod_greedy", "selected": picks,
                    "pod_tol": pod_tol}, n_fields=n_fields)


def greedy(trajectories, forms, tol, n_max):
    """Snapshot-greedy basis construction over (parameter, time index) pairs.

    The first pick maximizes the absolute L2 norm; subsequent picks maximize
    the L2 residual against the current basis, with ties broken toward the
    lowest parameter position and then the lowest time index.  Stops when the
    largest residual falls below ``tol`` (or below 1e-13 before
    normalization), or at n_max modes.  The per-iteration maxima are
    monotonically nonincreasing."""
    items = list(trajectories.items())
    if not items:
        raise ValueError("empty training set")
    n_fields = items[0][1].n_fields
    snaps = np.vstack([traj.values for _, traj in items])
    counts = [traj.values.shape[0] for _, traj in items]
    offsets = np.cumsum([0] + counts)

    def pair_of(row):
        p = int(np.searchsorted(offsets, row, side="right") - 1)
        return items[p][0], row - offsets[p]

    norms0 = l2_norms(forms, snaps, n_fields)
    res2 = norms0 ** 2
    chosen_rows = []
    modes = []
    picks = []
    history = []
    while len(modes) < n_max:
        avail = res2.copy()
        if chosen_rows:
            avail[chosen_rows] = -1.0
        row = int(np.argmax(avail))  # argmax takes the earliest tie
        rmax = np.sqrt(max(avail[row], 0.0))
        history.append(np.sqrt(max(res2.max(), 0.0)))
        if history[-1] <= tol:
            break
        if modes:
            basis = np.vstack(modes)
            v = snaps[row] - mass_inner(forms, snaps[row], basis, n_fields) @ basis
            # second pass keeps the basis orthonormal when the picked
            # snapshot is nearly inside the current span
            v = v - mass_inner(forms, v, basis, n_fields) @ basis
        else:
            v = snaps[row].copy()
        nrm = l2_norms(forms, v, n_fields)
        if nrm < 1e-13:
            break
        modes.append(v / nrm)
        chosen_rows.append(row)
        picks.append(pair_of(row))
        coef = mass_inner(forms, snaps, modes[-1][None, :], n_fields)[:, 0]
        res2 = np.clip(res2 - coef ** 2, 0.0, None)

    modes = np.vstack(modes) if modes else np.zeros((0, snaps.shape[1]))
    return ReducedBasis(
        mesh=items[0][1].mesh, modes=modes, eigenvalues=None,
        provenance={"algorithm": "greedy", "selected": picks, "tol": tol,
                    "residual_history": history}, n_fields=n_fields)


def _gram_modes(S, forms, n_fields, inner, keep):
    """POD of one snapshot block in the chosen inner product.

    Returns (modes, sigma) with the modes orthonormal in that product and
    sigma the singular values; ``keep`` caps the count, further limited by
    the numerical rank."""
    S = np.asarray(S, dtype=float)
    W = block_matvec(forms.mass, S, n_fields)
    if inner == "h1":
        W = W + block_matvec(forms.stiffness, S, n_fields)
    G = S @ W.T
    lam, V = sym_eig(0.5 * (G + G.T))
    lam = lam[::-1]
    V = V[:, ::-1]
    sig = np.sqrt(np.clip(lam, 0.0, None))
    if sig[0] == 0.0:
        return np.zeros((0, S.shape[1])), sig
    k = min(int(keep), int((sig > 1e-12 * sig[0]).sum()))
    return (V[:, :k].T @ S) / sig[:k, None], sig


def hierarchical_pod(trajectories, forms, n_max, inner="h1", chunk=384):
    """One POD over every snapshot of every training trajectory.

    The pooled snapshot set is compressed blockwise so every dense
    eigenproblem stays small: each trajectory (split when longer than
    ``chunk``) is reduced to at most ``n_max`` directions in the chosen
    inner product, the survivors are reweighted by their singular values,
    and merge rounds repeat the compression until at most ``chunk`` rows
    remain; their POD, truncated at ``n_max``, is the result.  Because the
    reweighted directions carry the second moment of their block exactly,
    the blockwise pass reproduces the pooled POD closely.

    The default "h1" inner product ranks directions by mass plus stiffness
    energy.  Spatially sharp, low-amplitude features, such as the boundary
    layers that form when an initial state violates a Neumann condition,
    carry far more stiffness energy than mass energy, so they survive a
    truncation that would drop them under a pure L2 ranking.  The output is
    re-orthonormalized in L2, so the basis invariants and the H1 rotation
    apply unchanged."""
    items = list(trajectories.items())
    if not items:
        raise ValueError("empty training set")
    if inner not in ("l2", "h1"):
        raise ValueError(f"unknown inner product {inner!r}")
    n_fields = items[0][1].n_fields

    blocks = []
    for _, traj in items:
        values = np.asarray(traj.values, dtype=float)
        for start in range(0, values.shape[0], chunk):
            blocks.append(values[start:start + chunk])

    levels = []
    while True:
        total_in = sum(b.shape[0] for b in blocks)
        reps = []
        for block in blocks:
            modes, sig = _gram_modes(block, forms, n_fields, inner, n_max)
            reps.append(modes * sig[:modes.shape[0], None])
        rows = np.vstack(reps)
        levels.append(int(rows.shape[0]))
        # stop when the pool fits one eigenproblem, or when a round stalls
        # (chunk at or below the block ranks), in which case the final POD
        # simply runs on the larger pool
        if rows.shape[0] <= chunk or rows.shape[0] >= total_in:
            break
        blocks = [rows[s:s + chunk] for s in range(0, rows.shape[0], chunk)]

    modes, _ = _gram_modes(rows, forms, n_fields, inner, n_max)
    if modes.shape[0] == 0:
        log.warning("hierarchical POD of an all-zero snapshot set")
    modes = _mass_mgs(modes, None, forms, n_fields)
    return ReducedBasis(
        mesh=items[0][1].mesh, modes=modes, eigenvalues=None,
        provenance={"algorithm": "hierarchical_pod", "inner": inner,
                    "levels": levels}, n_fields=n_fields)


def h1_reorthogonalize(basis, forms):
    """Rotate an L2-orthonormal basis to make it H1-orthogonal as well.

    Solves the dense eigenproblem G c = lambda c with G_ij the stiffness
    inner products of the modes; the rotated modes keep L2 orthonormality,
    gain stiffness-orthogonality, and carry ascending eigenvalues equal to
    their squared H1 seminorms."""
    if basis.N == 0:
        return basis
    gram_m = mass_inner(forms, basis.modes, basis.modes, basis.n_fields)
    if np.abs(gram_m - np.eye(basis.N)).max() > 1e-8:
        raise ValueError("basis is not L2-orthonormal within 1e-8")
    G = np.asarray(basis.modes) @ block_matvec(
        forms.stiffness, basis.modes, basis.n_fields).T
    lam, V = sym_eig(0.5 * (G + G.T))
    modes = V.T @ basis.modes
    prov = dict(basis.provenance)
    prov["h1_reorthogonalized"] = True
    return ReducedBasis(mesh=basis.mesh, modes=modes, eigenvalues=lam,
                        provenance=prov, n_fields=basis.n_fields)


def coefficients(basis, forms, values):
    """L2 coefficients of (rows of) ``values`` in the basis."""
    return mass_inner(forms, values, basis.modes, basis.n_fields)


def reconstruct(basis, coeffs):
    """Nodal fields from coefficient rows."""
    return np.asarray(coeffs) @ basis.modes
