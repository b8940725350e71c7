"""Transport potentials, diagnostics, and the semi-discrete solver."""

import math

import numpy as np
import pytest

from otiso import geometry, transport
from otiso.geometry import (DomainSpec, InvalidDomainError,
                            UnsupportedDomainError)
from otiso.transport import SolverError


def test_ball_potential_is_exact_monge_ampere():
    spec = DomainSpec.ball(3, radius=2.0)
    p = transport.closed_form_potential(spec)
    pts = geometry.interior_sample_points(spec, 200, seed=1)
    # det(I/R) = R^-n equals omega_n / vol(B_R) with no quadrature involved
    assert transport.monge_ampere_residual(p, pts) < 1e-13
    np.testing.assert_allclose(p.grad(pts), pts / 2.0, atol=1e-15)
    kind, data = p.hess_compact(pts)
    assert kind == "scalar"
    np.testing.assert_allclose(data, 0.5)


def test_ellipsoid_potential_is_exact_monge_ampere():
    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    p = transport.closed_form_potential(spec)
    pts = geometry.interior_sample_points(spec, 200, seed=2)
    assert transport.monge_ampere_residual(p, pts) < 1e-13
    np.testing.assert_allclose(p.grad(pts), pts * np.array([1.0, 1.0, 0.5]),
                               atol=1e-15)
    # gradients land inside the closed unit ball
    assert np.all(np.linalg.norm(p.grad(pts), axis=1) <= 1.0 + 1e-12)


def test_monge_ampere_rejects_outside_points():
    spec = DomainSpec.ball(2, radius=1.0)
    p = transport.closed_form_potential(spec)
    with pytest.raises(InvalidDomainError):
        transport.monge_ampere_residual(p, np.array([[2.0, 0.0]]))


def test_closed_form_pushforward_matches_uniform_ball():
    for spec in (DomainSpec.ball(3, 2.0), DomainSpec.ellipsoid((1.0, 1.0, 2.0))):
        p = transport.closed_form_potential(spec)
        assert transport.pushforward_check(p, order=32) < 1e-4


def test_ga_step_margin_signs():
    # equal eigenvalues attain arithmetic-geometric equality exactly
    ball = transport.closed_form_potential(DomainSpec.ball(3, 2.0))
    pts = np.zeros((1, 3))
    assert transport.ga_step_margin(ball, pts, 1) == pytest.approx(0.0,
                                                                   abs=1e-15)
    ell = transport.closed_form_potential(DomainSpec.ellipsoid((1.0, 1.0, 2.0)))
    assert transport.ga_step_margin(ell, np.zeros((1, 3)), 1) > 1e-3


def test_cyclical_monotonicity_of_convex_gradients():
    rng = np.random.default_rng(7)
    x = rng.uniform(-0.4, 0.4, size=(64, 3))
    xp = rng.uniform(-0.4, 0.4, size=(64, 3))
    p = transport.cubic_test_potential(3, seed=9)
    assert transport.cyclical_monotonicity_margin(p, x, xp) >= 0.0


def test_cubic_potential_structure():
    p = transport.cubic_test_potential(3, seed=4)
    m = p.cubic
    # first-two-index symmetry is bitwise; full permutation symmetry to fp
    assert np.array_equal(m, m.transpose(1, 0, 2))
    np.testing.assert_allclose(m, m.transpose(0, 2, 1), atol=1e-15)
    np.testing.assert_allclose(m, m.transpose(2, 1, 0), atol=1e-15)
    # uniform convexity on the box: row mass below strength keeps H pos def
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * 3)).reshape(3, -1).T
    lam = np.linalg.eigvalsh(p.hess(corners))
    assert lam.min() > 1.0 - 0.4 - 1e-12


@pytest.mark.parametrize("dim,k", [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2)])
def test_newton_tensor_rows_are_divergence_free(dim, k):
    # Hessian entries linear in x, Newton entries degree <= 2: central
    # differences are exact and the row divergence cancels identically
    p = transport.cubic_test_potential(dim, seed=11 + dim)
    rng = np.random.default_rng(dim * 10 + k)
    for x0 in rng.uniform(-0.5, 0.5, size=(3, dim)):
        assert transport.newton_divergence_fd(p, x0, k) < 1e-8


def test_disk_fill_is_deterministic_and_inside():
    a = transport.disk_fill(300, seed=5)
    b = transport.disk_fill(300, seed=5)
    assert np.array_equal(a, b)
    assert a.shape == (300, 2)
    r = np.linalg.norm(a, axis=1)
    assert r.max() < 1.0
    # golden-angle fill is uniform: mean radius of uniform disk is 2/3
    assert abs(r.mean() - 2.0 / 3.0) < 0.01
    assert not np.array_equal(a, transport.disk_fill(300, seed=6))


def test_polygonize_area_converges_from_below():
    spec = DomainSpec.ellipsoid((1.0, 2.0))
    poly = transport.polygonize(spec, 512)
    area = transport.polygon_area(poly)
    exact = math.pi * 2.0
    assert area < exact
    assert exact - area < 1e-3 * exact


def test_laguerre_cells_partition_polygon():
    poly = transport.polygonize(DomainSpec.ball(2, 1.0), 256)
    y = transport.disk_fill(64, seed=1)
    psi = np.zeros(64)
    cc = transport.laguerre_cells(poly, y, psi)
    assert float(np.sum(cc.masses)) == pytest.approx(
        transport.polygon_area(poly), rel=1e-12)
    # aggregated first moments equal the polygon's first moment (zero here)
    first = np.sum(cc.masses[:, None] * cc.centroids, axis=0)
    np.testing.assert_allclose(first, [0.0, 0.0], atol=1e-10)
    assert np.all(cc.second_moments >= 0.0)
    assert np.all(cc.edge_lengths > 0.0)
    assert cc.edge_rows.shape[1] == 2 and np.all(
        cc.edge_rows[:, 0] < cc.edge_rows[:, 1])


def test_laguerre_cells_weight_shift_invariance():
    poly = transport.polygonize(DomainSpec.ball(2, 1.0), 256)
    y = transport.disk_fill(48, seed=8)
    rng = np.random.default_rng(0)
    psi = 0.02 * rng.standard_normal(48)
    a = transport.laguerre_cells(poly, y, psi)
    b = transport.laguerre_cells(poly, y, psi + 3.7)
    np.testing.assert_allclose(a.masses, b.masses, atol=1e-12)


def test_laguerre_mass_jacobian_matches_edge_formula():
    # dM_i/dpsi_j = -len(ij)/(2 |y_i - y_j|) for neighbor pairs
    poly = transport.polygonize(DomainSpec.ball(2, 1.0), 256)
    y = transport.disk_fill(32, seed=3)
    psi = np.zeros(32)
    cc = transport.laguerre_cells(poly, y, psi)
    h = 1e-6
    for row in range(0, len(cc.edge_rows), 7):
        i, j = cc.edge_rows[row]
        want = -cc.edge_lengths[row] / (2.0 * np.linalg.norm(y[i] - y[j]))
        dpsi = psi.copy()
        dpsi[j] += h
        m_plus = transport.laguerre_cells(poly, y, dpsi).masses[i]
        dpsi[j] -= 2 * h
        m_minus = transport.laguerre_cells(poly, y, dpsi).masses[i]
        fd = (m_plus - m_minus) / (2.0 * h)
        assert fd == pytest.approx(want, rel=5e-4, abs=1e-9)


def test_semidiscrete_solver_rejects_bad_requests():
    with pytest.raises(UnsupportedDomainError):
        transport.semidiscrete_solve(DomainSpec.ball(3, 1.0), 64)
    with pytest.raises(InvalidDomainError):
        transport.semidiscrete_solve(DomainSpec.ball(2, 1.0), 8)


def test_semidiscrete_solve_disk():
    spec = DomainSpec.ball(2, 1.0)
    dual = transport.semidiscrete_solve(spec, 256, seed=2)
    area = transport.polygon_area(dual.polygon())
    target = area / 256
    assert dual.residual <= 1e-7 * target
    np.testing.assert_allclose(dual.masses, target, rtol=1e-6)
    # damped Newton accepts only residual-reducing steps
    resids = [row[2] for row in dual.convergence_log]
    assert all(b < a for a, b in zip(resids, resids[1:]))
    assert transport.map_deviation(dual) < 0.05
    p = transport.potential_from_weights(dual)
    assert transport.pushforward_check(p) < 1e-6


def test_semidiscrete_solve_ellipse_matches_linear_map():
    dual = transport.semidiscrete_solve(DomainSpec.ellipsoid((1.0, 2.0)),
                                        256, seed=3)
    dev = transport.map_deviation(dual, reference=np.diag([1.0, 0.5]))
    assert dev < 0.05


def test_recovered_hessian_near_identity_in_bulk():
    dual = transport.semidiscrete_solve(DomainSpec.ball(2, 1.0), 256, seed=2)
    p = transport.potential_from_weights(dual)
    pts = np.array([[0.0, 0.0], [0.3, -0.2], [-0.4, 0.1], [0.2, 0.45]])
    lam = np.linalg.eigvalsh(p.hess(pts))
    assert lam.min() > 0.8 and lam.max() < 1.2


def test_piecewise_potential_evaluators():
    dual = transport.semidiscrete_solve(DomainSpec.ball(2, 1.0), 64, seed=6)
    p = transport.potential_from_weights(dual)
    cc = transport.laguerre_cells(dual.polygon(), dual.points, dual.weights)
    g = p.grad(cc.centroids)
    # the gradient on each cell is that cell's target atom
    assert np.mean(np.all(g == dual.points, axis=1)) > 0.95
    with pytest.raises(InvalidDomainError):
        p.value(np.array([[1.5, 0.0]]))


def test_checkpoint_round_trip_is_bit_exact():
    dual = transport.semidiscrete_solve(DomainSpec.ball(2, 1.0), 64, seed=6)
    text = transport.dual_weights_to_json(dual)
    again = transport.dual_weights_from_json(text)
    assert np.array_equal(again.points, dual.points)
    assert np.array_equal(again.weights, dual.weights)
    assert np.array_equal(again.masses, dual.masses)
    assert again.residual == dual.residual
    assert again.spec == dual.spec
    assert transport.dual_weights_to_json(again) == text


def test_checkpoint_file_round_trip(tmp_path):
    dual = transport.semidiscrete_solve(DomainSpec.ball(2, 1.0), 64, seed=6)
    path = tmp_path / "dual.json"
    transport.save_dual_weights(dual, path)
    again = transport.load_dual_weights(path)
    assert np.array_equal(again.weights, dual.weights)


def test_closed_form_potential_unsupported_family():
    spec = DomainSpec.radial_graph(3, 1.0, ((0.05, (0, 0, 1)),), convex=True)
    with pytest.raises(UnsupportedDomainError):
        transport.closed_form_potential(spec)
