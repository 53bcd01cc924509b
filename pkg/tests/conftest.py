import numpy as np
import pytest

from nirb import fem, mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_mesh_4():
    return mesh.build_structured(4, 4)


@pytest.fixture(scope="session")
def neumann_forms_4(unit_mesh_4):
    return fem.assemble(unit_mesh_4, bc="neumann_natural")


@pytest.fixture(scope="session")
def dirichlet_forms_4(unit_mesh_4):
    return fem.assemble(unit_mesh_4, bc="dirichlet_zero")


def mass_gram(forms, U, V):
    """Plain L2 Gram matrix of stacked single-field rows, for checks."""
    return U @ np.stack([forms.mass.matvec(v) for v in V]).T
