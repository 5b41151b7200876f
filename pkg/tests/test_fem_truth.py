import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from frac_rbm.core.errors import ConvergenceError, IndefiniteOperatorError
from frac_rbm.methods.fem_truth import (
    AffineTruthOperator,
    conjugate_gradient,
    element_y_entries,
    exact_weight_operator,
    free_x_matrices,
    load_vector_2d,
    p1_matrices,
    reference_operator,
    solve_truth,
    solve_truth_exact_weight,
    trace_bottom,
    weighted_interval_matrices,
    xh_norm,
)
from frac_rbm.methods.mesh import build_graded_partition
from frac_rbm.methods.problems import Parameter, extension_constant
from frac_rbm.methods.quadrature import GAUSS_7


# --- 1D weighted matrices ---


def test_weighted_matrices_unweighted_match_standard_p1():
    """alpha = 0 gives the classical h/6 [2 1; 1 2] mass and 1/h [1 -1; -1 1] stiffness."""
    interval = build_graded_partition(4, 1.0, 1.0)
    mass, stiffness = weighted_interval_matrices(interval, 0.0)
    h = 0.25
    expected_mass = h / 6.0 * (np.diag([2, 4, 4, 4, 2]) + np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1))
    expected_stiff = (np.diag([1, 2, 2, 2, 1]) - np.diag(np.ones(4), 1) - np.diag(np.ones(4), -1)) / h
    np.testing.assert_allclose(mass.toarray(), expected_mass, atol=1e-15)
    np.testing.assert_allclose(stiffness.toarray(), expected_stiff, rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(min_value=-0.95, max_value=0.95), gamma=st.floats(min_value=1.0, max_value=6.0))
def test_weighted_mass_total_equals_weight_integral(alpha, gamma):
    """sum_ij M_ij = int_0^y+ y^alpha dy since the hats sum to one."""
    interval = build_graded_partition(12, gamma, 2.233)
    mass, stiffness = weighted_interval_matrices(interval, alpha)
    expected = 2.233 ** (alpha + 1.0) / (alpha + 1.0)
    assert mass.sum() == pytest.approx(expected, rel=1e-11)
    np.testing.assert_allclose(np.asarray(stiffness.sum(axis=1)).ravel(), 0.0, atol=1e-9 * stiffness.max())


def test_weighted_matrices_symmetric_positive():
    """Both matrices are symmetric; the mass matrix is positive definite."""
    interval = build_graded_partition(6, 6.0, 2.233)
    mass, stiffness = weighted_interval_matrices(interval, -0.8)
    assert abs(mass - mass.T).max() == 0.0
    assert abs(stiffness - stiffness.T).max() == 0.0
    assert np.linalg.eigvalsh(mass.toarray()).min() > 0


@pytest.mark.parametrize("alpha", [-1.0, -2.0, float("nan")])
def test_weighted_matrices_reject_non_integrable_weight(alpha):
    interval = build_graded_partition(4, 1.0, 1.0)
    with pytest.raises(ValueError):
        weighted_interval_matrices(interval, alpha)


# --- 2D P1 matrices and loads ---


def test_p1_matrices_totals(tiny_tri):
    """The mass matrix integrates 1 to the area; stiffness rows sum to zero."""
    mass, stiffness = p1_matrices(tiny_tri)
    assert mass.sum() == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(np.asarray(stiffness.sum(axis=1)).ravel(), 0.0, atol=1e-12)


def test_load_of_linear_function_matches_mass_product(tiny_tri):
    """For a linear f the degree-4 rule is exact, so the load equals M f(vertices)."""
    mass, _ = p1_matrices(tiny_tri)

    def f(x1, x2):
        return 1.0 + 2.0 * x1 - 3.0 * x2

    nodal = f(tiny_tri.vertices[:, 0], tiny_tri.vertices[:, 1])
    np.testing.assert_allclose(load_vector_2d(tiny_tri, f), mass @ nodal, atol=1e-14)


def test_load_rules_agree_on_smooth_function(tiny_tri):
    """Degree 4 and degree 5 rules differ only by the quadrature error on a sine."""

    def f(x1, x2):
        return np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * x2)

    a = load_vector_2d(tiny_tri, f)
    b = load_vector_2d(tiny_tri, f, GAUSS_7)
    assert np.max(np.abs(a - b)) < 1e-3 * np.max(np.abs(a))


def test_load_vectors_live_on_bottom_level(truth_d1):
    """Load components are zero above level 0."""
    vectors = truth_d1.loads.vectors
    n_interior = truth_d1.mesh.n_interior
    assert vectors.shape == (1, truth_d1.n_free)
    assert np.count_nonzero(vectors[:, n_interior:]) == 0
    assert np.count_nonzero(vectors[:, :n_interior]) > 0


def test_two_parameter_load_blends_components(truth_two_parameter):
    """F(nu) = nu^2 F_1 + (1 - nu^2) F_2."""
    loads = truth_two_parameter.loads
    f = loads.at(Parameter(0.3, 0.5))
    np.testing.assert_allclose(f, 0.25 * loads.vectors[0] + 0.75 * loads.vectors[1])
    with pytest.raises(ValueError):
        loads.at(Parameter(0.3))


# --- Kronecker operators ---


def test_kronecker_matvec_matches_sparse(tiny_mesh):
    """Matrix-free application equals the assembled Kronecker sum."""
    op = exact_weight_operator(tiny_mesh, 0.3)
    rng = np.random.default_rng(0)
    V = rng.standard_normal((op.size, 3))
    dense = op.to_sparse()
    np.testing.assert_allclose(op.matmat(V), dense @ V, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(op.diagonal(), dense.diagonal(), rtol=1e-14)
    assert op.quadratic_form(V[:, 0]) == pytest.approx(V[:, 0] @ (dense @ V[:, 0]), rel=1e-12)


def test_reference_operator_is_half_order(tiny_mesh):
    """The unweighted form is the s = 1/2 operator, where d_s = 1."""
    ref = reference_operator(tiny_mesh).to_sparse()
    half = exact_weight_operator(tiny_mesh, 0.5).to_sparse()
    assert extension_constant(0.5) == pytest.approx(1.0)
    assert abs(ref - half).max() < 1e-13 * abs(ref).max()


def test_affine_operator_combination(truth_d1):
    """combine(w) equals sum_q w_q A_q applied to a vector."""
    op = truth_d1.operator
    rng = np.random.default_rng(3)
    w = rng.uniform(0.1, 1.0, op.n_components)
    v = rng.standard_normal(op.n_free)
    expected = sum(w[q] * op.component(q).matvec(v) for q in range(op.n_components))
    np.testing.assert_allclose(op.combine(w).matvec(v), expected, rtol=1e-11, atol=1e-13)
    with pytest.raises(ValueError):
        op.combine(w[:-1])


def test_affine_operator_validation(tiny_mesh):
    """Components need exponents > -1 and at least one entry."""
    with pytest.raises(ValueError):
        AffineTruthOperator(tiny_mesh, [])
    with pytest.raises(ValueError):
        AffineTruthOperator(tiny_mesh, [0.2, -1.0])
    with pytest.raises(ValueError):
        AffineTruthOperator(tiny_mesh, [0.2]).coefficients(Parameter(0.3))


# --- Solver ---


def test_cg_matches_direct_solve(tiny_mesh, truth_d1):
    """Preconditioned CG agrees with a sparse direct solve."""
    op = exact_weight_operator(tiny_mesh, 0.25)
    b = truth_d1.loads.vectors[0]
    result = conjugate_gradient(op, b, tol=1e-13, max_iter=1000)
    direct = spla.spsolve(op.to_sparse().tocsc(), b)
    np.testing.assert_allclose(result.x, direct, rtol=1e-9, atol=1e-12 * np.abs(direct).max())
    assert result.relative_residual <= 1e-13
    assert result.min_curvature > 0


def test_cg_zero_rhs_returns_zero(tiny_mesh):
    """A zero load gives the zero solution without iterating."""
    op = exact_weight_operator(tiny_mesh, 0.25)
    result = conjugate_gradient(op, np.zeros(op.size))
    assert result.iterations == 0
    assert not result.x.any()


def test_cg_detects_indefinite_operator(tiny_mesh, truth_d1):
    """A negated operator is reported as indefinite."""
    op = exact_weight_operator(tiny_mesh, 0.25).scaled(-1.0)
    with pytest.raises(IndefiniteOperatorError) as excinfo:
        conjugate_gradient(op, truth_d1.loads.vectors[0])
    assert excinfo.value.value < 0


def test_cg_iteration_cap(tiny_mesh, truth_d1):
    """Hitting the cap raises with the iteration count and residual."""
    op = exact_weight_operator(tiny_mesh, 0.25)
    with pytest.raises(ConvergenceError) as excinfo:
        conjugate_gradient(op, truth_d1.loads.vectors[0], tol=1e-14, max_iter=1)
    assert excinfo.value.iterations == 1
    assert excinfo.value.residual > 1e-14


def test_solve_truth_rejects_other_subdomain(truth_d1):
    """The D1 operator refuses s > 1/2."""
    with pytest.raises(ValueError):
        solve_truth(truth_d1.operator, Parameter(0.7), truth_d1.loads)


def test_solve_truth_rejects_load_shape(truth_d1):
    with pytest.raises(ValueError):
        solve_truth(truth_d1.operator, Parameter(0.3), np.zeros(5))


@pytest.mark.parametrize("s", [0.1, 0.3, 0.5])
def test_eim_system_close_to_exact_weight_on_d1(truth_d1, s):
    """The affine system differs from the exact weight only by the interpolation error."""
    mu = Parameter(s)
    eim_sol = truth_d1.solve(mu)
    exact_sol = truth_d1.solve_exact(mu)
    gap = xh_norm(eim_sol.coeffs - exact_sol.coeffs, s, truth_d1.mesh)
    assert gap <= 1e-5 * xh_norm(exact_sol, s)
    assert eim_sol.which == "eim"
    assert exact_sol.which == "exact"


def test_eim_weight_matches_exact_weight_away_from_bottom_on_d2(truth_d2):
    """On D2 every y-element above the first carries the exact weight up to the interpolation error.

    The interpolant of y^(2-2s) is only controlled on [y_-, y_plus]; below y_- the
    division by y leaves the first element with an O(1e-3) weight defect.
    """
    s = 0.8
    eim = truth_d2.operator.eim
    interval = truth_d2.mesh.interval
    theta = eim.theta(s) / extension_constant(s)
    interpolated = np.tensordot(theta, np.stack([element_y_entries(interval, a) for a in eim.exponents]), axes=1)
    exact = element_y_entries(interval, 1.0 - 2.0 * s) / extension_constant(s)
    assert eim.y_grid[0] < interval.nodes[1]
    np.testing.assert_allclose(interpolated[1:], exact[1:], rtol=1e-5)


def test_eim_system_gap_on_d2_stays_at_bottom_element_level(truth_d2):
    """The whole-solution gap is bounded by the first-element weight defect, not by the EIM tolerance."""
    mu = Parameter(0.8)
    exact = truth_d2.solve_exact(mu).coeffs
    gap = truth_d2.solve(mu).coeffs - exact
    assert np.linalg.norm(gap) <= 2e-2 * np.linalg.norm(exact)


def test_exact_weight_solve_accepts_float(tiny_mesh, truth_d1):
    sol = solve_truth_exact_weight(tiny_mesh, 0.4, truth_d1.loads, tol=1e-12)
    assert sol.mu == Parameter(0.4)


# --- Traces and norms ---


def test_trace_bottom_zero_on_boundary(truth_d1):
    """The trace is a full nodal field with zeros on the lateral boundary."""
    sol = truth_d1.solve(Parameter(0.25))
    trace = trace_bottom(sol)
    tri = truth_d1.mesh.tri
    assert trace.shape == (tri.n_vertices,)
    assert not trace[tri.boundary_mask].any()
    np.testing.assert_array_equal(trace[tri.interior], sol.coeffs[: truth_d1.mesh.n_interior])
    with pytest.raises(ValueError):
        trace_bottom(sol.coeffs)


def test_xh_norm_matches_unscaled_energy(truth_d1):
    """||u||_X^2 = d_s a(u, u; s) for the exact weight."""
    s = 0.35
    sol = truth_d1.solve_exact(Parameter(s))
    scaled = exact_weight_operator(truth_d1.mesh, s).quadratic_form(sol.coeffs)
    assert xh_norm(sol, s) ** 2 == pytest.approx(extension_constant(s) * scaled, rel=1e-12)


def test_reference_solve_inverts_reference(truth_d1):
    """reference_solve applies G_ref^{-1} to one or many columns."""
    rng = np.random.default_rng(5)
    B = rng.standard_normal((truth_d1.n_free, 2))
    Z = truth_d1.reference_solve(B)
    np.testing.assert_allclose(truth_d1.reference.matmat(Z), B, rtol=1e-9, atol=1e-10)


def test_free_x_matrices_restrict_to_interior(tiny_tri):
    mass, stiffness = free_x_matrices(tiny_tri)
    assert mass.shape == (9, 9)
    assert np.linalg.eigvalsh(stiffness.toarray()).min() > 0
