"""Boundary fields, decompositions, pointwise bound, and chain reports."""

import json
import math

import numpy as np
import pytest

from otiso import geometry, series, transport, verify
from otiso.geometry import DomainSpec, unit_ball_volume
from otiso.verify import InvariantViolationError


def _ball_setup(n=3, radius=2.0, order=16):
    spec = DomainSpec.ball(n, radius=radius)
    p = transport.closed_form_potential(spec)
    grid = geometry.boundary_quadrature(spec, order)
    return spec, p, grid


def test_ball_boundary_fields_oracle():
    # grad phi = x/R equals the outward normal on the boundary, so the
    # tangential gradient vanishes and the normal derivative is exactly 1
    spec, p, grid = _ball_setup(3, 2.0)
    fields = verify.boundary_fields(grid, p)
    for bf in fields:
        assert np.max(np.abs(bf.tangential_grad)) < 1e-14
        np.testing.assert_allclose(bf.normal_deriv, 1.0, atol=1e-14)
        np.testing.assert_allclose(bf.cap, 1.0, atol=1e-14)
        np.testing.assert_allclose(bf.corner, 0.5, atol=1e-15)
        # surface Hessian dies: ambient I/R minus shape * normal_deriv
        assert np.max(np.abs(bf.surface_hessian)) < 1e-14
        assert np.max(np.abs(bf.normal_grad)) < 1e-14
        a, b = bf.blocks()
        want_a = np.zeros((3, 3))
        want_a[2, 2] = 0.5
        want_b = np.diag([0.5, 0.5, 0.0])
        assert np.max(np.abs(a - want_a)) < 1e-14
        assert np.max(np.abs(b - want_b)) < 1e-14


def test_blocks_reassemble_frame_hessian_on_ellipsoid():
    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    p = transport.closed_form_potential(spec)
    grid = geometry.boundary_quadrature(spec, 16)
    for bf in verify.boundary_fields(grid, p):
        a, b = bf.blocks()
        np.testing.assert_allclose(a + b, bf.frame_hessian, atol=1e-13)
        # the shape-operator block carries no second normal derivative
        assert np.max(np.abs(b[:, -1, -1])) == 0.0


def test_boundary_fields_reject_map_leaving_ball():
    spec = DomainSpec.ball(3, radius=2.0)
    bad = transport.Potential(provenance="synthetic",
                              kind="quadratic_isotropic", spec=spec,
                              radius=1.0)  # gradient x has norm 2 out there
    grid = geometry.boundary_quadrature(spec, 8)
    with pytest.raises(InvariantViolationError, match="node"):
        list(verify.boundary_fields(grid, bad))


@pytest.mark.parametrize("n,radius", [(3, 0.5), (4, 1.0), (5, 2.0)])
def test_boundary_term_ball_closed_forms(n, radius):
    spec = DomainSpec.ball(n, radius=radius)
    p = transport.closed_form_potential(spec)
    grid = geometry.boundary_quadrature(spec, 24)
    area = n * unit_ball_volume(n) * radius ** (n - 1)
    want1 = (n - 1) / radius * area
    want2 = math.comb(n - 1, 2) / radius ** 2 * area
    assert verify.boundary_term(grid, p, 1) == pytest.approx(want1,
                                                             rel=1e-12)
    assert verify.boundary_term(grid, p, 2) == pytest.approx(want2,
                                                             rel=1e-12)
    with pytest.raises(ValueError):
        verify.boundary_term(grid, p, 3)


def test_order2_decomposition_ball_values():
    spec, p, grid = _ball_setup(3, 2.0)
    fields = verify.boundary_fields(grid, p)
    area = 16.0 * math.pi
    dec = verify.L_decomposition_2(fields)
    assert dec.L21 == pytest.approx(0.0, abs=1e-12)
    assert dec.L21_by_parts == pytest.approx(0.0, abs=1e-12)
    assert dec.L22 == pytest.approx(area, rel=1e-12)
    assert dec.total == pytest.approx(verify.boundary_term(grid, p, 1,
                                                           fields=fields),
                                      rel=1e-12)
    fun = verify.M_functionals_2(fields)
    assert fun.M21 == pytest.approx(0.0, abs=1e-12)
    assert fun.M22 == pytest.approx(area, rel=1e-12)
    assert fun.T1L_energy == pytest.approx(0.0, abs=1e-12)
    assert fun.claim_slack == pytest.approx(0.0, abs=1e-12)


def test_order3_functionals_ball_values():
    spec = DomainSpec.ball(4, radius=2.0)
    p = transport.closed_form_potential(spec)
    grid = geometry.boundary_quadrature(spec, 16)
    fields = verify.boundary_fields(grid, p)
    area = 4 * unit_ball_volume(4) * 8.0
    fun = verify.M_functionals_3(fields)
    # cap = 1 and tangential gradient 0: only the sigma_2(L) cube survives
    assert fun.M31 == pytest.approx(0.0, abs=1e-10)
    assert fun.M32 == pytest.approx(0.0, abs=1e-10)
    assert fun.M33 == pytest.approx(math.comb(3, 2) / 4.0 * area, rel=1e-12)
    for v in (fun.E1, fun.E2, fun.E3, fun.T2L_energy, fun.bracket,
              fun.E11, fun.cross_pair, fun.cross_pair_bound):
        assert v == pytest.approx(0.0, abs=1e-10)
    assert fun.gamma3_violations == ()
    dec = verify.L_decomposition_3(fields)
    assert dec.total == pytest.approx(fun.total, rel=1e-12)


def test_identity_residuals_vanish_spectrally_on_ellipsoid():
    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    p = transport.closed_form_potential(spec)
    grid = geometry.boundary_quadrature(spec, 192)
    f = verify.boundary_fields(grid, p)
    assert verify.Jk_recursion_residual(f, k=1) < 1e-9
    assert verify.Jk_recursion_residual(f, k=2) < 1e-9
    assert verify.weighted_sigma2_recursion_residual(f, k=0) < 1e-9
    assert verify.weighted_sigma2_recursion_residual(f, k=1) < 1e-9
    assert verify.codazzi_residual(f) < 1e-9
    lap, pol = verify.divergence_totals(f)
    assert abs(lap) < 1e-9 and abs(pol) < 1e-9
    with pytest.raises(ValueError):
        verify.Jk_recursion_residual(f, k=0)
    with pytest.raises(ValueError):
        verify.weighted_sigma2_recursion_residual(f, k=-1)


def test_pointwise_bound_values_and_domain():
    assert verify.P_pointwise(0.0, 0.0) == pytest.approx(-1.5, abs=1e-15)
    assert verify.P_pointwise(0.0, 1.0) == pytest.approx(-0.25, abs=1e-15)
    s = np.linspace(0.0, 0.9, 50)
    vals = verify.P_pointwise(s, np.zeros(50))
    assert np.all(vals <= -0.25)
    with pytest.raises(ValueError):
        verify.P_pointwise(0.95, 0.0)
    with pytest.raises(ValueError):
        verify.P_pointwise(-0.1, 0.0)
    with pytest.raises(ValueError):
        verify.P_pointwise(0.0, 1.5)
    with pytest.raises(ValueError):
        verify.P_pointwise(0.6, -1e-6)


def test_pointwise_bound_grid_max():
    top = verify.P_grid_max()
    assert top <= -0.25 + 1e-9
    assert top == pytest.approx(-0.25, abs=1e-12)


def test_check_af1_ball_equality():
    spec = DomainSpec.ball(3, radius=2.0)
    p = transport.closed_form_potential(spec)
    r = verify.check_af1(spec, p, order=24)
    assert r.verdict == "equality_within_tol"
    assert r.ratio == pytest.approx(1.0, abs=1e-12)
    assert all(lk.holds for lk in r.links)
    assert [lk.name for lk in r.links] == [
        "volume_to_transport", "transport_to_refined",
        "refined_to_curvature"]
    assert r.flags == ()
    assert r.residuals["claim_slack"] == pytest.approx(0.0, abs=1e-14)
    assert r.residuals["m22_trace_identity"] < 1e-13
    assert r.residuals["interior_divergence"] < 1e-12
    assert r.residuals["map_hessian_min_sigma"] > 0.0
    assert r.residuals["max_tangential_norm"] < 1e-13
    assert all(m > 0.0 for m in r.cone_margins)
    assert r.cone_nodes == ()


def test_check_af1_ellipsoid_chain():
    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    p = transport.closed_form_potential(spec)
    r = verify.check_af1(spec, p, order=96)
    assert r.verdict == "holds"
    assert r.ratio > 1.05
    assert all(lk.holds and lk.margin > 1e-3 for lk in r.links)
    assert r.residuals["split_sum"] < 1e-6
    assert r.residuals["l21_by_parts"] < 1e-6
    assert r.residuals["jk_k1"] < 1e-6
    assert r.residuals["m22_trace_identity"] < 1e-12
    # capped Laplacian term stays below the compared energy (sign checks)
    assert r.residuals["claim_slack"] <= 1e-12
    assert r.residuals["m21_bound_margin"] >= 0.0
    assert 0.3 < r.residuals["max_tangential_norm"] < 0.34


def test_check_af1_geometry_only():
    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    r = verify.check_af1(spec, order=48)
    assert r.provenance == "geometry_only"
    assert [lk.name for lk in r.links] == ["volume_to_curvature"]
    assert r.verdict == "holds"
    assert "split_sum" not in r.residuals


def test_check_af1_dim2_is_boundary_case():
    spec = DomainSpec.ball(2, radius=1.0)
    r = verify.check_af1(spec, order=24)
    assert "boundary_case" in r.flags
    # total turning of a closed convex curve makes this an identity
    assert r.ratio == pytest.approx(1.0, rel=1e-12)


def test_check_af2_ball_equality():
    spec = DomainSpec.ball(4, radius=0.5)
    p = transport.closed_form_potential(spec)
    r = verify.check_af2(spec, p, order=24)
    assert r.verdict == "equality_within_tol"
    assert r.ratio == pytest.approx(1.0, abs=1e-12)
    assert r.flags == ()
    assert r.residuals["bracket_slack"] == pytest.approx(0.0, abs=1e-14)
    assert r.residuals["recomposition"] < 1e-12


def test_check_af2_dim3_is_structural_equality():
    # n = 3: both sides are scale invariant and agree for every convex body
    spec = DomainSpec.ball(3, radius=1.7)
    p = transport.closed_form_potential(spec)
    r = verify.check_af2(spec, p, order=24)
    assert "boundary_case" in r.flags
    assert r.ratio == pytest.approx(1.0, rel=1e-12)


def test_check_af2_ellipsoid_chain():
    spec = DomainSpec.ellipsoid((1.0, 1.0, 1.5, 2.0))
    p = transport.closed_form_potential(spec)
    r = verify.check_af2(spec, p, order=128)
    assert r.verdict == "holds"
    assert all(lk.holds for lk in r.links)
    for key in ("split_sum", "recomposition", "m32_codazzi", "codazzi_capsq",
                "weighted_sigma2_base", "weighted_sigma2_k1"):
        assert r.residuals[key] < 1e-7, key
    assert abs(r.residuals["polarization_total"]) < 1e-7
    assert r.residuals["bracket_slack"] <= 1e-12
    for key in ("e_sum_margin", "lemma_pair_margin", "lemma_sign",
                "pure_tangential_sign"):
        assert r.residuals[key] >= -1e-12, key
    assert r.residuals["map_hessian_min_sigma"] > 0.0


def test_check_af2_rejects_planar_domains():
    with pytest.raises(ValueError):
        verify.check_af2(DomainSpec.ball(2, 1.0))


def test_check_af1_semidiscrete():
    spec = DomainSpec.ball(2, 1.0)
    dual = transport.semidiscrete_solve(spec, 256, seed=0)
    p = transport.potential_from_weights(dual)
    r = verify.check_af1(spec, p, order=64)
    assert r.provenance == "semi_discrete"
    assert r.tolerance == 0.05
    assert "hessian_psd_clamped" in r.flags
    assert all(lk.holds for lk in r.links)
    assert r.verdict == "equality_within_tol"


def test_report_json_is_deterministic_and_ordered():
    spec = DomainSpec.ball(3, radius=1.0)
    p = transport.closed_form_potential(spec)
    a = verify.report_to_json(verify.check_af1(spec, p, order=16))
    b = verify.report_to_json(verify.check_af1(spec, p, order=16))
    assert a == b
    data = json.loads(a)
    assert list(data)[:5] == ["id", "lhs", "rhs", "ratio", "links"]
    assert list(data["residuals"]) == sorted(data["residuals"])
    assert set(data["cone"]) == {"margins", "nodes"}


def test_chain_link_margin_convention():
    lk = verify._link("x", 1.0, 1.1, 1e-6)
    assert lk.holds and lk.margin == pytest.approx(0.1 / 1.1)
    lk = verify._link("x", 1.1, 1.0, 1e-6)
    assert not lk.holds
    lk = verify._link("x", 1.0 + 1e-9, 1.0, 1e-6)
    assert lk.holds  # inside tolerance


def test_series_window_guards_functionals():
    # a potential whose tangential gradient exceeds the validated window
    # must raise rather than extrapolate the series
    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    p = transport.closed_form_potential(spec)
    grid = geometry.boundary_quadrature(spec, 32)
    fields = verify.boundary_fields(grid, p)
    tight = series.SeriesConfig(truncation=100, s_max=0.2)
    with pytest.raises(ValueError):
        verify.M_functionals_3(fields, cfg=tight)
