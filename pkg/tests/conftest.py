"""
Pytest configuration and fixtures for the solver tests.

Most numerical checks run on a tiny cylinder (4 x 4 cells, 6 graded levels,
54 free dofs) so the dense oracles used by the tests stay cheap; a medium
cylinder covers orthogonalization at sizes where the bases stay rank deficient.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to sys.path to allow importing the package
current_dir = Path(__file__).parent
project_root = current_dir.parent
sys.path.insert(0, str(project_root))

from frac_rbm.core.config import RunConfig  # noqa: E402
from frac_rbm.methods.certify import scm_build  # noqa: E402
from frac_rbm.methods.eim import eim_build, eim_y_grid  # noqa: E402
from frac_rbm.methods.fem_truth import TruthProblem, assemble_affine_components, assemble_load  # noqa: E402
from frac_rbm.methods.mesh import (  # noqa: E402
    build_cylinder_mesh,
    build_graded_partition,
    build_unit_square_triangulation,
)
from frac_rbm.methods.problems import Subdomain, example1_rhs, example2_rhs, subdomain_range, training_set  # noqa: E402
from frac_rbm.methods.rbm import greedy_offline  # noqa: E402

TINY_N = 4
TINY_M = 6
TINY_GAMMA = 2.0
MEDIUM_N = 8
MEDIUM_M = 10
Y_PLUS = 2.233


def _tiny_eim(subdomain: Subdomain, M: int = TINY_M):
    y_grid = eim_y_grid(subdomain, M, TINY_GAMMA, Y_PLUS, refinement=16)
    lo, hi = subdomain_range(subdomain, 0.03, 0.97)
    return eim_build(subdomain, y_grid, np.linspace(lo, hi, 65), q_max=24, tol=1e-10)


def _tiny_truth(mesh, eim, rhs=None):
    operator = assemble_affine_components(mesh, eim)
    loads = assemble_load(mesh, rhs or example1_rhs())
    return TruthProblem(operator, loads, cg_tol=1e-12, cg_max_iter=5000)


# --- Fixtures ---


@pytest.fixture(scope="session")
def tiny_tri():
    return build_unit_square_triangulation(TINY_N)


@pytest.fixture(scope="session")
def tiny_interval():
    return build_graded_partition(TINY_M, TINY_GAMMA, Y_PLUS)


@pytest.fixture(scope="session")
def tiny_mesh(tiny_tri, tiny_interval):
    return build_cylinder_mesh(tiny_tri, tiny_interval)


@pytest.fixture(scope="session")
def eim_d1():
    return _tiny_eim(Subdomain.D1)


@pytest.fixture(scope="session")
def eim_d2():
    return _tiny_eim(Subdomain.D2)


@pytest.fixture(scope="session")
def truth_d1(tiny_mesh, eim_d1):
    return _tiny_truth(tiny_mesh, eim_d1)


@pytest.fixture(scope="session")
def truth_d2(tiny_mesh, eim_d2):
    return _tiny_truth(tiny_mesh, eim_d2)


@pytest.fixture(scope="session")
def truth_two_parameter(tiny_mesh, eim_d1):
    return _tiny_truth(tiny_mesh, eim_d1, example2_rhs())


@pytest.fixture(scope="session")
def training_d1():
    return training_set(Subdomain.D1, 17)


@pytest.fixture(scope="session")
def training_d2():
    return training_set(Subdomain.D2, 17)


@pytest.fixture(scope="session")
def scm_d1(truth_d1, training_d1):
    return scm_build(truth_d1.operator, training_d1, n_constraints=6)


@pytest.fixture(scope="session")
def reduced_d1(truth_d1, training_d1):
    """Residual-free model with six snapshots; tol = 0 disables early stopping."""
    return greedy_offline(truth_d1, training_d1, n_max=6, tol=0.0)


@pytest.fixture(scope="session")
def reduced_d2(truth_d2, training_d2):
    return greedy_offline(truth_d2, training_d2, n_max=5, tol=0.0)


@pytest.fixture(scope="session")
def medium_truth_d1():
    """8 x 8 cells and 10 levels (490 free dofs): large enough that the Riesz set never spans the space."""
    tri = build_unit_square_triangulation(MEDIUM_N)
    mesh = build_cylinder_mesh(tri, build_graded_partition(MEDIUM_M, TINY_GAMMA, Y_PLUS))
    return _tiny_truth(mesh, _tiny_eim(Subdomain.D1, MEDIUM_M))


@pytest.fixture(scope="session")
def medium_reduced_d1(medium_truth_d1):
    return greedy_offline(medium_truth_d1, training_set(Subdomain.D1, 33), n_max=15, tol=0.0)


def _tiny_config(root: Path, **overrides) -> RunConfig:
    values = dict(
        n=TINY_N,
        M=TINY_M,
        gamma_d1=TINY_GAMMA,
        gamma_d2=TINY_GAMMA,
        eim_s_points=33,
        eim_q_max=24,
        eim_tol=1e-10,
        train_s_points=9,
        test_s_points=5,
        n_max=4,
        n_constraints=4,
        validation_points=4,
        oracle_modes=6,
        cg_tol=1e-12,
        cg_max_factor=400.0,
        bench_queries=10,
        errors_n_d1=[1, 2],
        errors_n_d2=[1, 2],
        threads=1,
        output_dir=str(root / "out"),
        log_dir=str(root / "logs"),
    )
    values.update(overrides)
    return RunConfig.from_values(**values)


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    """A complete configuration small enough for end-to-end command runs."""
    return _tiny_config(tmp_path)


@pytest.fixture(scope="session")
def tiny_run_config(tmp_path_factory) -> RunConfig:
    """Same as tiny_config, with an output directory shared by a whole session."""
    return _tiny_config(tmp_path_factory.mktemp("run"))
