"""P1 finite element assembly on triangle meshes: exact mass and stiffness
matrices, midpoint-rule load vectors, discrete norms, and Ritz projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nirb.linalg import SparseSym, cg_solve, csr_with_scatter

# products of the three P1 basis values at the three edge midpoints; the
# midpoint rule integrates quadratics exactly, so summing the three blocks
# reproduces the exact element mass matrix (area/12 scaling).
_P01 = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
_P12 = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
_P20 = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]])


def triangle_geometry(mesh):
    """Areas and constant P1 gradient coefficients per element.

    Returns (areas, b, c) with grad(phi_i) = (b_i, c_i) / (2 A) on each
    triangle."""
    p = mesh.nodes[mesh.triangles]
    x = p[..., 0]
    y = p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if (det <= 0).any():
        raise ValueError("mesh contains degenerate or clockwise triangles")
    return 0.5 * det, b, c


@dataclass
class AssembledForms:
    """Assembled bilinear forms for one mesh plus the data needed to rebuild
    coefficient-weighted mass matrices without re-sorting indices."""

    mesh: object
    mass: SparseSym
    stiffness: SparseSym
    free_dofs: np.ndarray
    bc: str
    _scatter: np.ndarray = field(repr=False, default=None)   # (n_tris, 3, 3)
    _areas: np.ndarray = field(repr=False, default=None)
    _cache: dict = field(repr=False, default_factory=dict)

    @property
    def n_dofs(self):
        return self.mesh.n_nodes

    def mass_free(self):
        if "Mff" not in self._cache:
            self._cache["Mff"] = self.mass.restrict(self.free_dofs)
        return self._cache["Mff"]

    def stiffness_free(self):
        if "Kff" not in self._cache:
            self._cache["Kff"] = self.stiffness.restrict(self.free_dofs)
        return self._cache["Kff"]

    def lumped_mass(self):
        """Row sums of the mass matrix (the nodal area shares)."""
        if "lumped" not in self._cache:
            counts = np.diff(self.mass.indptr)
            self._cache["lumped"] = np.add.reduceat(
                self.mass.vals, self.mass.indptr[:-1])
            assert self._cache["lumped"].size == counts.size
        return self._cache["lumped"]

    def weighted_mass(self, midpoint_coeffs):
        """Mass matrix weighted by a coefficient given at the three edge
        midpoints of every triangle (shape (n_tris, 3), midpoint order
        01, 12, 20).  Shares the pattern of ``mass``."""
        cw = np.asarray(midpoint_coeffs, dtype=float)
        scale = self._areas / 12.0
        blocks = (np.multiply.outer(cw[:, 0] * scale, _P01)
                  + np.multiply.outer(cw[:, 1] * scale, _P12)
                  + np.multiply.outer(cw[:, 2] * scale, _P20))
        vals = np.bincount(self._scatter.ravel(), weights=blocks.ravel(),
                           minlength=self.mass.nnz)
        return SparseSym(self.mass.n, self.mass.indptr, self.mass.indices,
                         vals, check=False)

    def midpoint_values(self, u):
        """Interpolate a nodal field at the edge midpoints, (n_tris, 3)."""
        uv = np.asarray(u)[self.mesh.triangles]
        return 0.5 * (uv + np.roll(uv, -1, axis=1))


def assemble(mesh, bc="dirichlet_zero"):
    """Assemble exact P1 mass and stiffness matrices.

    bc is 'dirichlet_zero' (boundary dofs constrained to zero) or
    'neumann_natural' (all dofs free).  Mass and stiffness share one sparsity
    pattern, including structural zeros of the stiffness, so matrix pencils
    combine entrywise."""
    if bc not in ("dirichlet_zero", "neumann_natural"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    areas, b, c = triangle_geometry(mesh)
    tri = mesh.triangles
    n_tris = tri.shape[0]

    m_el = (areas / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    k_el = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
        / (4.0 * areas)[:, None, None]

    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    mass, scatter = csr_with_scatter(mesh.n_nodes, rows, cols, m_el.ravel())
    k_vals = np.bincount(scatter, weights=k_el.ravel(), minlength=mass.nnz)
    stiffness = SparseSym(mass.n, mass.indptr, mass.indices, k_vals, check=False)

    if bc == "dirichlet_zero":
        free = np.flatnonzero(~mesh.boundary_mask)
    else:
        free = np.arange(mesh.n_nodes)
    return AssembledForms(mesh=mesh, mass=mass, stiffness=stiffness,
                          free_dofs=free, bc=bc,
                          _scatter=scatter.reshape(n_tris, 3, 3),
                          _areas=areas)


def load_from_midpoint_values(mesh, values, areas=None):
    """Weak load vector from integrand values at the edge midpoints.

    values has shape (n_tris, 3) in midpoint order 01, 12, 20.  Each midpoint
    carries weight area/3 and the two adjacent P1 basis functions take value
    1/2 there."""
    if areas is None:
        areas, _, _ = triangle_geometry(mesh)
    tri = mesh.triangles
    w = (areas / 6.0)[:, None] * np.asarray(values, dtype=float)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, tri[:, [0, 1]], w[:, [0]])
    np.add.at(out, tri[:, [1, 2]], w[:, [1]])
    np.add.at(out, tri[:, [2, 0]], w[:, [2]])
    return out


def load_vector(mesh, f, t):
    """Assemble b_i = integral of f(t, x, y) * phi_i with the three-midpoint
    rule (exact for quadratic integrands)."""
    p = mesh.nodes[mesh.triangles]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    fv = np.asarray(f(t, mids[..., 0], mids[..., 1]), dtype=float)
    fv = np.broadcast_to(fv, mids.shape[:2])
    if not np.isfinite(fv).all():
        k, q = np.argwhere(~np.isfinite(fv))[0]
        xq, yq = mids[k, q]
        raise ValueError(
            f"source term is not finite at t={t}, (x, y)=({xq}, {yq})")
    return load_from_midpoint_values(mesh, fv)


def norms(forms, v):
    """Discrete L2 norm and H1 seminorm of a nodal field:
    (sqrt(v' M v), sqrt(v' K v))."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != forms.n_dofs:
        raise ValueError(f"field has {v.shape[-1]} values, expected {forms.n_dofs}")
    l2sq = (v * forms.mass.matvec(v)).sum(-1)
    h1sq = (v * forms.stiffness.matvec(v)).sum(-1)
    return np.sqrt(np.clip(l2sq, 0.0, None)), np.sqrt(np.clip(h1sq, 0.0, None))


def difference_norms(forms, u_nodal, u_fn, grad_fn, t):
    """L2 and H1-seminorm distances between a P1 field and a smooth function,
    by the three-midpoint rule, plus the function's own norms.

    Nodal sampling of the reference would hide the O(h) gradient error on
    structured meshes (the discrete field is supercloser to the interpolant
    than to the function), so the comparison is made under quadrature.
    Returns (err_l2, err_h1, ref_l2, ref_h1)."""
    mesh = forms.mesh
    cache = forms._cache
    if "quad_geom" not in cache:
        areas, b, c = triangle_geometry(mesh)
        p = mesh.nodes[mesh.triangles]
        mids = 0.5 * (p + np.roll(p, -1, axis=1))
        cache["quad_geom"] = (areas, b, c, mids[..., 0], mids[..., 1])
    areas, b, c, mx, my = cache["quad_geom"]
    w = areas / 3.0

    uh_mid = forms.midpoint_values(u_nodal)
    u_mid = np.broadcast_to(np.asarray(u_fn(t, mx, my), dtype=float), mx.shape)
    err_l2 = np.sqrt((w[:, None] * (uh_mid - u_mid) ** 2).sum())
    ref_l2 = np.sqrt((w[:, None] * u_mid ** 2).sum())

    ue = np.asarray(u_nodal)[mesh.triangles]
    gxh = (ue * b).sum(1) / (2.0 * areas)
    gyh = (ue * c).sum(1) / (2.0 * areas)
    gx, gy = grad_fn(t, mx, my)
    gx = np.broadcast_to(np.asarray(gx, dtype=float), mx.shape)
    gy = np.broadcast_to(np.asarray(gy, dtype=float), mx.shape)
    err_h1 = np.sqrt((w[:, None] * ((gxh[:, None] - gx) ** 2
                                    + (gyh[:, None] - gy) ** 2)).sum())
    ref_h1 = np.sqrt((w[:, None] * (gx ** 2 + gy ** 2)).sum())
    return err_l2, err_h1, ref_l2, ref_h1


def ritz_projection(forms, u, cg_tol=1e-12):
    """H1-orthogonal projection onto the P1 space with zero boundary values.

    u is either a nodal vector on the same mesh (projected to itself, up to
    solver tolerance) or a callable grad_u(x, y) -> (du/dx, du/dy) giving the
    gradient of the target analytically."""
    if forms.bc != "dirichlet_zero":
        raise ValueError("Ritz projection requires the Dirichlet form set")
    if isinstance(u, np.ndarray):
        if u.shape != (forms.n_dofs,):
            raise ValueError(f"nodal field has shape {u.shape}, expected ({forms.n_dofs},)")
        g = forms.stiffness.matvec(u)
    elif callable(u):
        areas, b, c = triangle_geometry(forms.mesh)
        p = forms.mesh.nodes[forms.mesh.triangles]
        mids = 0.5 * (p + np.roll(p, -1, axis=1))
        gx, gy = u(mids[..., 0], mids[..., 1])
        gx = np.broadcast_to(np.asarray(gx, dtype=float), mids.shape[:2])
        gy = np.broadcast_to(np.asarray(gy, dtype=float), mids.shape[:2])
        # grad(phi_i) is constant per element: (b_i, c_i) / (2 A), and each
        # midpoint carries weight A/3, so the element contribution is
        # (sum_q gx_q) b_i / 6 + (sum_q gy_q) c_i / 6.
        contrib = (gx.sum(axis=1)[:, None] * b + gy.sum(axis=1)[:, None] * c) / 6.0
        g = np.zeros(forms.n_dofs)
        np.add.at(g, forms.mesh.triangles.ravel(), contrib.ravel())
    else:
        raise TypeError("u must be a nodal array or a gradient callable")
    out = np.zeros(forms.n_dofs)
    xf, _ = cg_solve(forms.stiffness_free(), g[forms.free_dofs], tol=cg_tol)
    out[forms.free_dofs] = xf
    return out
