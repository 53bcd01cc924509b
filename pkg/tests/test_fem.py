import numpy as np
import pytest

from nirb import fem, mesh


def test_element_matrices_on_reference_triangle():
    # One cell gives two congruent right triangles; restrict to the one with
    # vertices (0,0),(1,0),(1,1) and compare entries against the closed-form
    # element matrices of a right triangle with unit legs.
    m = mesh.build_structured(1, 1)
    forms = fem.assemble(m, bc="neumann_natural")
    M = forms.mass.to_dense()
    K = forms.stiffness.to_dense()
    # Assembled from two elements: total mass sums to the domain area and
    # each diagonal stiffness entry collects area * |grad phi|^2.
    assert M.sum() == pytest.approx(1.0, abs=1e-12)
    assert K.sum() == pytest.approx(0.0, abs=1e-12)
    # Nodes 1=(1,0) and 2=(0,1) sit in a single triangle each, so their rows
    # reproduce one element exactly: mass diag area/6 = 1/12,
    # stiffness diag = area * 2 = 1 (right-angle vertex of one element).
    assert M[1, 1] == pytest.approx(1.0 / 12.0)
    assert M[2, 2] == pytest.approx(1.0 / 12.0)
    assert K[1, 1] == pytest.approx(1.0)
    assert M[0, 1] == pytest.approx(1.0 / 24.0)
    assert K[0, 1] == pytest.approx(-0.5)


def test_mass_total_is_area():
    for n in (2, 3, 5):
        m = mesh.build_structured(n, n)
        forms = fem.assemble(m, bc="neumann_natural")
        assert forms.mass.to_dense().sum() == pytest.approx(1.0, abs=1e-12)


def test_stiffness_annihilates_constants(neumann_forms_4):
    ones = np.ones(neumann_forms_4.n_dofs)
    assert np.abs(neumann_forms_4.stiffness.matvec(ones)).max() <= 1e-12


def test_norms_constant(neumann_forms_4):
    l2, h1 = fem.norms(neumann_forms_4, np.ones(neumann_forms_4.n_dofs))
    assert l2 == pytest.approx(1.0, abs=1e-12)
    assert h1 == pytest.approx(0.0, abs=1e-9)


def test_norms_zero(neumann_forms_4):
    l2, h1 = fem.norms(neumann_forms_4, np.zeros(neumann_forms_4.n_dofs))
    assert l2 == 0.0 and h1 == 0.0


def test_norms_linear_field(unit_mesh_4, neumann_forms_4):
    v = unit_mesh_4.nodes[:, 0] + unit_mesh_4.nodes[:, 1]
    l2, h1 = fem.norms(neumann_forms_4, v)
    assert h1 == pytest.approx(np.sqrt(2.0), abs=1e-12)
    assert l2 == pytest.approx(np.sqrt(7.0 / 6.0), abs=1e-12)


def test_free_dofs_by_bc(unit_mesh_4):
    dira = fem.assemble(unit_mesh_4, bc="dirichlet_zero")
    neum = fem.assemble(unit_mesh_4, bc="neumann_natural")
    assert neum.free_dofs.size == unit_mesh_4.n_nodes
    assert dira.free_dofs.size == (unit_mesh_4.boundary_mask == 0).sum()
    assert not unit_mesh_4.boundary_mask[dira.free_dofs].any()


def test_lumped_mass_partition(neumann_forms_4):
    lump = neumann_forms_4.lumped_mass()
    assert lump.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(lump > 0.0)


def test_load_vector_constant_forcing(unit_mesh_4):
    b = fem.load_vector(unit_mesh_4, lambda t, x, y: np.ones_like(x), 0.0)
    assert b.sum() == pytest.approx(1.0, abs=1e-12)


def test_load_vector_zero_forcing(unit_mesh_4):
    b = fem.load_vector(unit_mesh_4, lambda t, x, y: np.zeros_like(x), 0.0)
    assert np.abs(b).max() == 0.0


def test_load_vector_affine_matches_mass(unit_mesh_4, neumann_forms_4):
    # The three-midpoint rule integrates quadratics exactly, so for an affine
    # f the load equals M f_nodal entrywise.
    f = lambda t, x, y: 2.0 * x - y + 0.5
    b = fem.load_vector(unit_mesh_4, f, 0.0)
    fn = f(0.0, unit_mesh_4.nodes[:, 0], unit_mesh_4.nodes[:, 1])
    assert b == pytest.approx(neumann_forms_4.mass.matvec(fn), abs=1e-13)


def test_weighted_mass_unit_weight_is_mass(neumann_forms_4):
    n_mid = neumann_forms_4.mesh.n_triangles
    W = neumann_forms_4.weighted_mass(np.ones((n_mid, 3)))
    assert W.to_dense() == pytest.approx(neumann_forms_4.mass.to_dense(),
                                         abs=1e-13)


def test_midpoint_values_linear_exact(unit_mesh_4, neumann_forms_4):
    v = 3.0 * unit_mesh_4.nodes[:, 0] - unit_mesh_4.nodes[:, 1]
    mids = neumann_forms_4.midpoint_values(v)
    p = unit_mesh_4.nodes[unit_mesh_4.triangles]
    mx = 0.5 * (p[:, :, 0] + np.roll(p[:, :, 0], -1, axis=1))
    my = 0.5 * (p[:, :, 1] + np.roll(p[:, :, 1], -1, axis=1))
    assert mids == pytest.approx(3.0 * mx - my, abs=1e-13)


def test_load_from_midpoint_values_consistent(unit_mesh_4, neumann_forms_4):
    # Midpoint-sampled P1 data integrated against the hat functions agrees
    # with the assembled mass matrix because both use degree-2 exact rules.
    g = unit_mesh_4.nodes[:, 0] * 2.0 + 1.0
    vals = neumann_forms_4.midpoint_values(g)
    b = fem.load_from_midpoint_values(unit_mesh_4, vals)
    assert b == pytest.approx(neumann_forms_4.mass.matvec(g), abs=1e-13)


def test_difference_norms_reproduces_p1(unit_mesh_4, neumann_forms_4):
    u_fn = lambda t, x, y: 2.0 * x + 3.0 * y + 1.0
    grad_fn = lambda t, x, y: (np.full_like(x, 2.0), np.full_like(x, 3.0))
    u = u_fn(0.0, unit_mesh_4.nodes[:, 0], unit_mesh_4.nodes[:, 1])
    el2, eh1, rl2, rh1 = fem.difference_norms(neumann_forms_4, u, u_fn,
                                              grad_fn, 0.0)
    assert el2 <= 1e-13 and eh1 <= 1e-13
    assert rh1 == pytest.approx(np.sqrt(13.0), abs=1e-12)


def test_ritz_projection_identity_on_p1():
    m = mesh.build_structured(4, 4)
    forms = fem.assemble(m, bc="dirichlet_zero")
    x, y = m.nodes[:, 0], m.nodes[:, 1]
    u = np.sin(np.pi * x) * np.sin(np.pi * y)
    u[m.boundary_mask] = 0.0
    proj = fem.ritz_projection(forms, u)
    assert proj == pytest.approx(u, abs=1e-10)


def test_ritz_projection_zero(dirichlet_forms_4):
    proj = fem.ritz_projection(dirichlet_forms_4,
                               np.zeros(dirichlet_forms_4.n_dofs))
    assert np.abs(proj).max() == 0.0


def test_ritz_projection_gradient_rate():
    from nirb import models
    errs, hs = [], []
    for n in (8, 16, 32):
        m = mesh.build_structured(n, n)
        forms = fem.assemble(m, bc="dirichlet_zero")
        u = models.manufactured_u(1.0, m.nodes[:, 0], m.nodes[:, 1])
        proj = fem.ritz_projection(forms, u)
        _, eh1, _, rh1 = fem.difference_norms(
            forms, proj, models.manufactured_u, models.manufactured_grad, 1.0)
        errs.append(eh1 / rh1)
        hs.append(m.h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 0.8 <= slope <= 1.2
