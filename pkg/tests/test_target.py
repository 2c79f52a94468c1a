"""Chart geometry: Christoffels, curvature with/without torsion, Cartan split."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _charts import polynomial_chart, random_points, random_skew_torsion
from diracmaps.errors import ChartDomainError, TorsionSkewnessError
from diracmaps.target import (
    TorsionSpec,
    antisymmetric_membership_defect,
    cartan_membership_defect,
    christoffel_at,
    covariant_curvature_grad,
    decompose_torsion,
    flat_chart,
    inverse_metric_at,
    lc_curvature_at,
    metric_at,
    metric_grad_at,
    nabla_torsion_at,
    sphere2_chart,
    sphere3_chart,
    torsion_at,
    torsion_curvature_at,
    torsion_inner,
    vectorial_membership_defect,
)


def test_flat_chart_is_flat():
    chart = flat_chart(3)
    y = random_points(3, seed=1)
    assert np.max(np.abs(christoffel_at(chart, y))) == 0.0
    assert np.max(np.abs(lc_curvature_at(chart, y))) == 0.0


def test_sphere2_christoffels_match_conformal_closed_form():
    # independent oracle: for g = exp(2u) delta the Levi-Civita symbols are
    # Gamma^i_jk = d_k u delta_ij + d_j u delta_ik - d_i u delta_jk,
    # and for the unit sphere u = log 2 - log(1 + |y|^2), d_a u = -2 y_a/(1+|y|^2)
    chart = sphere2_chart()
    y = random_points(2, seed=2)
    got = christoffel_at(chart, y)
    du = -2.0 * y / (1.0 + np.sum(y * y, axis=-1))[..., None]
    eye = np.eye(2)
    want = (np.einsum("...k,ij->...ijk", du, eye)
            + np.einsum("...j,ik->...ijk", du, eye)
            - np.einsum("...i,jk->...ijk", du, eye))
    assert np.max(np.abs(got - want)) < 1e-12


def test_christoffel_metric_compatibility():
    chart = polynomial_chart(3, seed=3)
    y = random_points(3, seed=4)
    g = metric_at(chart, y)
    dg = metric_grad_at(chart, y)
    gamma = christoffel_at(chart, y)
    recon = (np.einsum("...lki,...lj->...kij", gamma, g)
             + np.einsum("...lkj,...il->...kij", gamma, g))
    assert np.max(np.abs(dg - recon)) < 1e-12


def test_finite_difference_metric_derivatives_match_analytic():
    analytic = polynomial_chart(3, seed=5, analytic=True)
    fd = polynomial_chart(3, seed=5, analytic=False)
    y = random_points(3, seed=6)
    assert np.max(np.abs(christoffel_at(analytic, y) - christoffel_at(fd, y))) < 1e-8
    assert np.max(np.abs(lc_curvature_at(analytic, y) - lc_curvature_at(fd, y))) < 1e-5


def test_sphere2_curvature_constant_sectional():
    # unit round sphere in the convention pinned by the torsion-curvature
    # relation: R_ijkl = g_il g_jk - g_ik g_jl, i.e. R_1221/det g = +1
    chart = sphere2_chart()
    y = random_points(2, seed=7)
    R = lc_curvature_at(chart, y)
    g = metric_at(chart, y)
    want = (np.einsum("...il,...jk->...ijkl", g, g)
            - np.einsum("...ik,...jl->...ijkl", g, g))
    assert np.max(np.abs(R - want)) < 1e-11
    detg = np.linalg.det(g)
    assert np.max(np.abs(R[..., 0, 1, 1, 0] / detg - 1.0)) < 1e-11


def test_sphere3_curvature_constant_sectional():
    chart = sphere3_chart()
    y = random_points(3, seed=8)
    R = lc_curvature_at(chart, y)
    g = metric_at(chart, y)
    want = (np.einsum("...il,...jk->...ijkl", g, g)
            - np.einsum("...ik,...jl->...ijkl", g, g))
    assert np.max(np.abs(R - want)) < 1e-10


def test_lc_curvature_symmetries_random_metric():
    chart = polynomial_chart(4, seed=9)
    y = random_points(4, seed=10)
    R = lc_curvature_at(chart, y)
    assert np.max(np.abs(R + np.einsum("...jikl->...ijkl", R))) < 1e-11
    assert np.max(np.abs(R + np.einsum("...ijlk->...ijkl", R))) < 1e-11
    assert np.max(np.abs(R - np.einsum("...klij->...ijkl", R))) < 1e-11
    # first Bianchi identity as an extra independent consistency check
    bianchi = R + np.einsum("...jkil->...ijkl", R) + np.einsum("...kijl->...ijkl", R)
    assert np.max(np.abs(bianchi)) < 1e-11


# ----------------------------------------------------------------------
# torsion evaluation
# ----------------------------------------------------------------------

def test_vectorial_torsion_closed_form():
    chart = polynomial_chart(3, seed=11, torsion=TorsionSpec.vectorial(np.array([0.3, -0.7, 0.2])))
    y = random_points(3, seed=12)
    A = torsion_at(chart, y)
    g = metric_at(chart, y)
    v_low = np.einsum("...ks,s->...k", g, np.array([0.3, -0.7, 0.2]))
    want = (np.einsum("...ij,...k->...ijk", g, v_low)
            - np.einsum("...ik,...j->...ijk", g, v_low))
    assert np.max(np.abs(A - want)) < 1e-14
    assert np.max(np.abs(A + np.swapaxes(A, -1, -2))) < 1e-14


def test_scaled_volume_torsion_is_parallel_on_sphere3():
    chart = sphere3_chart(kappa=0.8)
    y = random_points(3, seed=13)
    A = torsion_at(chart, y)
    g = metric_at(chart, y)
    vol = np.sqrt(np.linalg.det(g))
    assert np.max(np.abs(A[..., 0, 1, 2] - 0.8 * vol)) < 1e-13
    nabA = nabla_torsion_at(chart, y)
    assert np.max(np.abs(nabA)) < 1e-11


def test_raw_torsion_rejects_non_skew_input():
    bad = np.zeros((3, 3, 3))
    bad[0, 1, 2] = 1.0
    bad[0, 2, 1] = 1.0   # should be -1
    chart = flat_chart(3, torsion=TorsionSpec.raw(bad))
    with pytest.raises(TorsionSkewnessError):
        torsion_at(chart, np.zeros((1, 3)))


def test_cartan_type_kind_projects_pointwise():
    A = random_skew_torsion(3, seed=14)
    chart = polynomial_chart(3, seed=15, torsion=TorsionSpec.cartan_type(A))
    y = random_points(3, seed=16)
    got = torsion_at(chart, y)
    g = metric_at(chart, y)
    assert cartan_membership_defect(got, g) < 1e-12


def test_nabla_torsion_constant_payload_flat_chart():
    A = random_skew_torsion(3, seed=17)
    chart = flat_chart(3, torsion=TorsionSpec.raw(A))
    y = random_points(3, seed=18)
    assert np.max(np.abs(nabla_torsion_at(chart, y))) == 0.0
    vchart = flat_chart(3, torsion=TorsionSpec.vectorial(np.array([1.0, 2.0, 3.0])))
    assert np.max(np.abs(nabla_torsion_at(vchart, y))) == 0.0


def test_nabla_torsion_fd_matches_analytic_gradient():
    def coeff(y):
        base = random_skew_torsion(3, seed=19)
        mod = 1.0 + 0.5 * np.sin(y[..., 0]) + 0.25 * y[..., 1] ** 2
        return mod[..., None, None, None] * base

    def coeff_grad(y):
        base = random_skew_torsion(3, seed=19)
        n = 3
        dmod = np.zeros(y.shape[:-1] + (n,))
        dmod[..., 0] = 0.5 * np.cos(y[..., 0])
        dmod[..., 1] = 0.5 * y[..., 1]
        return np.einsum("...a,ijk->...aijk", dmod, base)

    with_grad = polynomial_chart(3, seed=20,
                                 torsion=TorsionSpec.raw(coeff, coefficients_grad=coeff_grad))
    without = polynomial_chart(3, seed=20, torsion=TorsionSpec.raw(coeff))
    y = random_points(3, seed=21)
    a = nabla_torsion_at(with_grad, y)
    b = nabla_torsion_at(without, y)
    assert np.max(np.abs(a - b)) < 1e-8
    # covariant derivative preserves the last-two-slot skewness
    assert np.max(np.abs(a + np.swapaxes(a, -1, -2))) < 1e-12


# ----------------------------------------------------------------------
# curvature with torsion
# ----------------------------------------------------------------------

def test_torsion_curvature_reduces_to_lc_for_zero_torsion():
    chart = polynomial_chart(3, seed=22)
    y = random_points(3, seed=23)
    assert np.max(np.abs(torsion_curvature_at(chart, y) - lc_curvature_at(chart, y))) < 1e-14


def test_flat_constant_epsilon_torsion_closed_form():
    kappa = 0.6
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = kappa
        eps[i, k, j] = -kappa
    chart = flat_chart(3, torsion=TorsionSpec.totally_antisymmetric(eps))
    y = random_points(3, seed=24)
    R = torsion_curvature_at(chart, y)
    eye = np.eye(3)
    want = kappa ** 2 * (np.einsum("ik,jl->ijkl", eye, eye)
                         - np.einsum("il,jk->ijkl", eye, eye))
    assert np.max(np.abs(R - want)) < 1e-13


def test_torsion_curvature_pair_antisymmetries_with_fd_nabla():
    # chart-level finite differences for nabla A (callable coefficients, no
    # analytic gradient supplied) must still keep both pair antisymmetries
    def coeff(y):
        base = random_skew_torsion(3, seed=25)
        mod = 1.0 + 0.4 * np.cos(y[..., 2]) + 0.3 * y[..., 0]
        return mod[..., None, None, None] * base

    chart = polynomial_chart(3, seed=26, torsion=TorsionSpec.raw(coeff))
    y = random_points(3, seed=27)
    R = torsion_curvature_at(chart, y)
    assert np.max(np.abs(R + np.einsum("...jikl->...ijkl", R))) < 1e-10
    assert np.max(np.abs(R + np.einsum("...ijlk->...ijkl", R))) < 1e-10


def test_parallel_skew_torsion_restores_pair_swap_symmetry():
    chart = sphere3_chart(kappa=0.7)
    y = random_points(3, seed=28)
    R = torsion_curvature_at(chart, y)
    assert np.max(np.abs(R - np.einsum("...klij->...ijkl", R))) < 1e-10


def test_non_parallel_torsion_breaks_pair_swap_symmetry():
    def coeff(y):
        base = np.zeros((3, 3, 3))
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            base[i, j, k] = 1.0
            base[i, k, j] = -1.0
        mod = 1.0 + 0.5 * np.sin(y[..., 0])
        return mod[..., None, None, None] * base

    chart = flat_chart(3, torsion=TorsionSpec.totally_antisymmetric(coeff))
    y = random_points(3, seed=29)
    R = torsion_curvature_at(chart, y)
    asym = float(np.max(np.abs(R - np.einsum("...klij->...ijkl", R))))
    assert asym >= 1e-3


def test_covariant_curvature_grad_zero_on_round_spheres():
    chart = sphere2_chart()
    y = random_points(2, seed=30)
    assert np.max(np.abs(covariant_curvature_grad(chart, y, with_torsion=False))) == 0.0
    # cross-check the finite-difference path against the parallel flag
    from dataclasses import replace
    fd_chart = replace(chart, curvature_parallel=False)
    fd = covariant_curvature_grad(fd_chart, y, with_torsion=False)
    assert np.max(np.abs(fd)) < 1e-5


def test_covariant_torsion_curvature_grad_parallel_on_sphere3():
    chart = sphere3_chart(kappa=0.5)
    y = random_points(3, seed=31)
    assert np.max(np.abs(covariant_curvature_grad(chart, y, with_torsion=True))) == 0.0
    from dataclasses import replace
    fd_chart = replace(chart, torsion_curvature_parallel=False)
    fd = covariant_curvature_grad(fd_chart, y, with_torsion=True)
    assert np.max(np.abs(fd)) < 1e-5


def test_domain_guard_rejects_far_points():
    chart = sphere2_chart(domain_radius=4.0)
    with pytest.raises(ChartDomainError):
        metric_at(chart, np.array([[5.0, 0.0]]))


# ----------------------------------------------------------------------
# Cartan decomposition
# ----------------------------------------------------------------------

def _decomposition_defects(A, g):
    dec = decompose_torsion(A, g)
    ginv = np.linalg.inv(g)
    recon = float(np.max(np.abs(dec.vectorial + dec.antisymmetric + dec.cartan - A)))
    parts = (dec.vectorial, dec.antisymmetric, dec.cartan)
    ortho = 0.0
    for a in range(3):
        for b in range(a + 1, 3):
            ortho = max(ortho, float(np.max(np.abs(torsion_inner(parts[a], parts[b], ginv)))))
    member = max(vectorial_membership_defect(dec.vectorial, g),
                 antisymmetric_membership_defect(dec.antisymmetric),
                 cartan_membership_defect(dec.cartan, g))
    return recon, ortho, member


@pytest.mark.parametrize("n", [3, 4])
def test_cartan_decomposition_random_tensors(n):
    rng = np.random.default_rng(100 + n)
    for trial in range(100):
        A = rng.uniform(-1.0, 1.0, size=(n, n, n))
        A = 0.5 * (A - np.swapaxes(A, -1, -2))
        M = rng.uniform(-0.3, 0.3, size=(n, n))
        g = np.eye(n) + 0.5 * (M + M.T)
        # keep g safely positive definite
        w = np.linalg.eigvalsh(g)
        if w.min() < 0.2:
            g = g + (0.2 - w.min()) * np.eye(n)
        recon, ortho, member = _decomposition_defects(A, g)
        assert recon < 1e-12
        assert ortho < 1e-12
        assert member < 1e-12


def test_cartan_decomposition_dim2_purely_vectorial():
    rng = np.random.default_rng(200)
    for trial in range(25):
        A = rng.uniform(-1.0, 1.0, size=(2, 2, 2))
        A = 0.5 * (A - np.swapaxes(A, -1, -2))
        M = rng.uniform(-0.2, 0.2, size=(2, 2))
        g = np.eye(2) + 0.5 * (M + M.T)
        dec = decompose_torsion(A, g)
        assert np.max(np.abs(dec.antisymmetric)) == 0.0
        assert np.max(np.abs(dec.cartan)) < 1e-13
        assert np.max(np.abs(dec.vectorial - A)) < 1e-13


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=27, max_size=27),
       st.integers(min_value=0, max_value=10_000))
def test_cartan_decomposition_property(dim3_entries, jitter):
    A = np.array(dim3_entries).reshape(3, 3, 3)
    A = 0.5 * (A - np.swapaxes(A, -1, -2))
    rng = np.random.default_rng(jitter)
    M = rng.uniform(-0.25, 0.25, size=(3, 3))
    g = np.eye(3) + 0.5 * (M + M.T)
    w = np.linalg.eigvalsh(g)
    if w.min() < 0.2:
        g = g + (0.2 - w.min()) * np.eye(3)
    recon, ortho, member = _decomposition_defects(A, g)
    scale = max(1.0, float(np.max(np.abs(A))))
    assert recon < 1e-12 * scale
    assert ortho < 1e-11 * scale ** 2
    assert member < 1e-12 * scale


def test_decompose_rejects_bad_skewness():
    bad = np.ones((3, 3, 3))
    with pytest.raises(TorsionSkewnessError):
        decompose_torsion(bad, np.eye(3))
