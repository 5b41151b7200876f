import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frac_rbm.methods.mesh import build_cylinder_mesh, build_graded_partition, build_unit_square_triangulation


# --- Graded partition ---


def test_graded_partition_nodes_follow_power_law():
    """Nodes are y_plus * (m / M)**gamma with exact endpoints."""
    interval = build_graded_partition(8, 3.0, 2.0)
    m = np.arange(9)
    np.testing.assert_allclose(interval.nodes, 2.0 * (m / 8.0) ** 3, rtol=1e-14)
    assert interval.nodes[0] == 0.0
    assert interval.nodes[-1] == 2.0
    assert interval.first_positive_node == pytest.approx(2.0 / 512.0)


def test_graded_partition_uniform_when_gamma_is_one():
    """gamma = 1 gives equal widths."""
    interval = build_graded_partition(5, 1.0, 1.0)
    np.testing.assert_allclose(interval.widths, np.full(5, 0.2))


def test_graded_partition_single_interval():
    """M = 1 is the coarsest admissible partition."""
    interval = build_graded_partition(1, 6.0, 2.233)
    np.testing.assert_array_equal(interval.nodes, [0.0, 2.233])


def test_graded_partition_nodes_are_read_only():
    """The nodes array cannot be modified in place."""
    interval = build_graded_partition(4, 2.0, 1.0)
    with pytest.raises(ValueError):
        interval.nodes[1] = 0.5


@pytest.mark.parametrize(
    "M, gamma, y_plus",
    [(0, 2.0, 1.0), (-3, 2.0, 1.0), (2.5, 2.0, 1.0), (True, 2.0, 1.0), (4, 0.0, 1.0), (4, -1.0, 1.0),
     (4, float("nan"), 1.0), (4, 2.0, 0.0), (4, 2.0, float("inf"))],
)
def test_graded_partition_invalid_input(M, gamma, y_plus):
    """Non-positive or non-finite inputs are rejected."""
    with pytest.raises(ValueError):
        build_graded_partition(M, gamma, y_plus)


def test_graded_partition_underflow_is_rejected():
    """Extreme grading collapses the first nodes to zero and is rejected."""
    with pytest.raises(ValueError, match="underflows"):
        build_graded_partition(10**6, 200.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(M=st.integers(min_value=1, max_value=200), gamma=st.floats(min_value=0.5, max_value=8.0))
def test_graded_partition_strictly_increasing(M, gamma):
    """Admissible grids are strictly increasing from 0 to y_plus."""
    interval = build_graded_partition(M, gamma, 2.233)
    assert len(interval.nodes) == M + 1
    assert np.all(np.diff(interval.nodes) > 0)
    assert interval.nodes[-1] == 2.233


# --- Triangulation ---


@pytest.mark.parametrize("n", [2, 3, 7])
def test_triangulation_counts(n):
    """(n+1)^2 vertices, 2 n^2 triangles, 4 n boundary vertices."""
    tri = build_unit_square_triangulation(n)
    assert tri.n_vertices == (n + 1) ** 2
    assert tri.n_triangles == 2 * n * n
    assert int(tri.boundary_mask.sum()) == 4 * n
    assert len(tri.interior) == (n - 1) ** 2
    assert tri.mesh_size == pytest.approx(1.0 / n)


def test_triangulation_areas_positive_and_sum_to_one():
    """All triangles are counter-clockwise and cover the unit square."""
    tri = build_unit_square_triangulation(5)
    assert np.all(tri.areas > 0)
    assert tri.areas.sum() == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(tri.areas, 1.0 / 50.0)


def test_triangulation_vertex_numbering():
    """Vertex (i, j) sits at (i/n, j/n) with index j (n+1) + i."""
    tri = build_unit_square_triangulation(4)
    np.testing.assert_allclose(tri.vertices[2 * 5 + 3], [0.75, 0.5])


def test_triangulation_rejects_small_n():
    """n must be at least 2 so that there is an interior vertex."""
    with pytest.raises(ValueError):
        build_unit_square_triangulation(1)


# --- Cylinder mesh ---


def test_cylinder_mesh_sizes(tiny_mesh):
    """Free dofs are the interior vertices on the M lower levels."""
    assert tiny_mesh.n_levels == 7
    assert tiny_mesh.n_dofs == 25 * 7
    assert tiny_mesh.n_interior == 9
    assert tiny_mesh.free_shape == (6, 9)
    assert tiny_mesh.n_free == 54


def test_cylinder_free_indices_are_level_major(tiny_mesh):
    """Free index k maps to level k // n_interior and interior vertex k % n_interior."""
    interior = tiny_mesh.tri.interior
    for k in (0, 8, 9, 31, 53):
        level, pos = divmod(k, tiny_mesh.n_interior)
        assert tiny_mesh.free_indices[k] == tiny_mesh.global_index(int(interior[pos]), level)


def test_cylinder_top_level_is_not_free(tiny_mesh):
    """Dofs on y = y_plus carry the Dirichlet condition."""
    top = tiny_mesh.interval.M
    for v in tiny_mesh.tri.interior:
        assert not tiny_mesh.free_mask[tiny_mesh.global_index(int(v), top)]


def test_cylinder_expand_restrict_inverse(tiny_mesh):
    """restrict(expand(v)) == v and expand puts zeros elsewhere."""
    rng = np.random.default_rng(1)
    v = rng.standard_normal(tiny_mesh.n_free)
    full = tiny_mesh.expand(v)
    np.testing.assert_array_equal(tiny_mesh.restrict(full), v)
    assert np.count_nonzero(full[~tiny_mesh.free_mask]) == 0


def test_cylinder_global_index_out_of_range(tiny_mesh):
    """Indices outside the mesh raise IndexError."""
    with pytest.raises(IndexError):
        tiny_mesh.global_index(25, 0)
    with pytest.raises(IndexError):
        tiny_mesh.global_index(0, 7)


def test_build_cylinder_mesh_type_check(tiny_tri):
    """Both factors must be mesh objects."""
    with pytest.raises(ValueError):
        build_cylinder_mesh(tiny_tri, [0.0, 1.0])
