import numpy as np
import pytest

from frac_rbm.methods.mesh import build_unit_square_triangulation
from frac_rbm.methods.oracle import (
    ModalField,
    apply_fractional_laplacian,
    eigenvalues,
    hs_norm,
    hs_tail_estimate,
    mode_resolution_ok,
    parseval_defect,
    project_to_modes,
    spectral_solve,
)
from frac_rbm.methods.problems import example1_rhs


def _single_mode(j: int, k: int, J: int = 4, value: float = 1.0) -> ModalField:
    c = np.zeros((J, J))
    c[j - 1, k - 1] = value
    return ModalField(c)


def test_eigenvalues_layout():
    lam = eigenvalues(3)
    assert lam.shape == (3, 3)
    assert lam[0, 0] == pytest.approx(2.0 * np.pi**2)
    assert lam[1, 2] == pytest.approx(13.0 * np.pi**2)


def test_spectral_solve_on_single_mode():
    """u = f / lambda^s for an eigenfunction."""
    u = spectral_solve(_single_mode(2, 2, value=0.5), 0.3)
    assert u.coefficients[1, 1] == pytest.approx(0.5 * (8.0 * np.pi**2) ** -0.3)
    assert np.count_nonzero(u.coefficients) == 1


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 0.9, 1.0])
def test_solve_then_apply_is_identity(s):
    rng = np.random.default_rng(2)
    f = ModalField(rng.standard_normal((5, 5)))
    back = apply_fractional_laplacian(spectral_solve(f, s), s)
    np.testing.assert_allclose(back.coefficients, f.coefficients, rtol=1e-12)


def test_order_zero_is_identity():
    f = _single_mode(1, 3)
    np.testing.assert_array_equal(spectral_solve(f, 0.0).coefficients, f.coefficients)


@pytest.mark.parametrize("s", [-0.1, 1.5])
def test_spectral_operations_reject_order(s):
    with pytest.raises(ValueError):
        spectral_solve(_single_mode(1, 1), s)
    with pytest.raises(ValueError):
        apply_fractional_laplacian(_single_mode(1, 1), s)


def test_modal_field_evaluation_and_shape_check():
    """phi_11 peaks at 2 in the centre; non-square coefficients are rejected."""
    assert _single_mode(1, 1).evaluate(np.array(0.5), np.array(0.5)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        ModalField(np.zeros((2, 3)))


def test_modal_subtraction_pads():
    diff = _single_mode(1, 1, J=2) - _single_mode(3, 3, J=3)
    assert diff.J == 3
    assert diff.coefficients[0, 0] == 1.0
    assert diff.coefficients[2, 2] == -1.0
    assert diff.padded(2).J == 2


def test_example_rhs_is_half_of_mode_two_two():
    """sin(2 pi x1) sin(2 pi x2) = 0.5 phi_22."""
    rhs = example1_rhs()
    modal = rhs.modal()
    assert modal.coefficients[1, 1] == 0.5
    x1, x2 = np.array([0.1, 0.37]), np.array([0.8, 0.55])
    np.testing.assert_allclose(modal.evaluate(x1, x2), rhs.components[0](x1, x2), atol=1e-14)


def test_hs_norm_of_eigenfunction():
    """||phi_11||_s = lambda_11^(s/2)."""
    for s in (0.0, 0.3, 0.8):
        assert hs_norm(_single_mode(1, 1), s) == pytest.approx((2.0 * np.pi**2) ** (s / 2.0))


def test_hs_norm_increases_with_order():
    rng = np.random.default_rng(4)
    u = ModalField(rng.standard_normal((4, 4)))
    values = [hs_norm(u, s) for s in (0.1, 0.4, 0.7)]
    assert values == sorted(values)
    assert hs_norm(u, 0.0) == pytest.approx(u.l2_norm())


def test_projection_of_interpolated_mode():
    """The P1 interpolant of phi_11 projects mostly onto phi_11."""
    tri = build_unit_square_triangulation(16)
    nodal = _single_mode(1, 1).evaluate(tri.vertices[:, 0], tri.vertices[:, 1])
    modal = project_to_modes(nodal, tri, 8)
    assert modal.coefficients[0, 0] == pytest.approx(1.0, abs=2e-2)
    rest = modal.l2_norm() ** 2 - modal.coefficients[0, 0] ** 2
    assert rest < 1e-3
    assert parseval_defect(nodal, tri, 16) < 1e-2
    assert hs_tail_estimate(modal, 0.5) >= 0.0


def test_hs_norm_of_nodal_field_needs_mesh():
    with pytest.raises(ValueError):
        hs_norm(np.zeros(9), 0.5)


def test_projection_rejects_bad_input(tiny_tri):
    with pytest.raises(ValueError):
        project_to_modes(np.zeros(tiny_tri.n_vertices), tiny_tri, 0)
    with pytest.raises(ValueError):
        project_to_modes(np.zeros(3), tiny_tri, 4)


def test_zero_field_has_no_parseval_defect(tiny_tri):
    assert parseval_defect(np.zeros(tiny_tri.n_vertices), tiny_tri, 4) == 0.0


def test_mode_resolution(tiny_tri):
    assert mode_resolution_ok(4, tiny_tri)
    assert not mode_resolution_ok(8, tiny_tri)
