"""Energies and Euler-Lagrange residuals against the finite-difference variation."""

from dataclasses import replace

import numpy as np
import pytest

from _charts import polynomial_chart, random_skew_torsion
from diracmaps.energy import (
    curvature_coupling,
    el_residual,
    energy_curvature,
    energy_for_mode,
    energy_momentum,
    energy_torsion,
    f_tor,
    f_tor_vectorial,
    hopf_differential,
    tension,
)
from diracmaps.errors import ConfigError, ModeCompatibilityError
from diracmaps.fields import (
    GridGeometry,
    MapField,
    VectorSpinorField,
    metric_on_map,
    random_smooth_fields,
    random_spinor_variation,
    spinor_l2_inner,
)
from diracmaps.operators import twisted_dirac
from diracmaps.target import (
    TorsionSpec,
    christoffel_at,
    flat_chart,
    inverse_metric_at,
    sphere2_chart,
    sphere3_chart,
    torsion_at,
)

VECTOR_FIELD = TorsionSpec.vectorial(
    lambda y: 0.4 * np.stack(
        [np.sin(y[..., 0]), np.cos(y[..., 1]), y[..., 2]], axis=-1))


def _transported(geom, chart, phi, psi, eta, xi, t):
    """Linear path through (phi, psi) with the connection-corrected spinor leg."""
    pts = phi.chart_points(geom)
    K = christoffel_at(chart, pts)
    A = torsion_at(chart, pts)
    if np.any(A):
        K = K + np.einsum("...jks,...si->...ijk", A, inverse_metric_at(chart, pts))
    dpsi = xi - np.einsum("...ijk,...j,...kc->...ic", K, eta, psi.values)
    return replace(phi, values=phi.values + t * eta), psi.perturbed(dpsi, t)


def _variation_gap(geom, chart, phi, psi, mode, seed, t=1e-4):
    """Relative gap between the residual pairing and the centered energy difference."""
    n = chart.dim
    eta = np.real(random_spinor_variation(geom, n, seed, band_limit=2,
                                          amplitude=0.05)[..., 0])
    xi = random_spinor_variation(geom, n, seed + 1000, band_limit=2, amplitude=0.05)

    res = el_residual(geom, chart, phi, psi, mode=mode)
    g = metric_on_map(geom, chart, phi)
    spin_pair = np.real(spinor_l2_inner(geom, g, VectorSpinorField(values=xi),
                                        res.spinor_residual))
    map_pair = geom.integrate(
        np.einsum("...ij,...i,...j->...", g, eta, res.map_residual))
    analytic = spin_pair - map_pair

    plus = energy_for_mode(geom, chart,
                           *_transported(geom, chart, phi, psi, eta, xi, t),
                           mode=mode).total
    minus = energy_for_mode(geom, chart,
                            *_transported(geom, chart, phi, psi, eta, xi, -t),
                            mode=mode).total
    fd = (plus - minus) / (2.0 * t)
    return abs(fd - analytic) / max(1.0, abs(fd))


VARIATION_CASES = [
    ("flat", "torsion", 1.0, lambda: flat_chart(3), 0.3, 0.5),
    ("flat-volume", "torsion", 1.7, lambda: flat_chart(
        3, torsion=TorsionSpec.scaled_volume(0.35)), 0.3, 0.5),
    ("flat-vectorial", "torsion", 1.0, lambda: flat_chart(
        3, torsion=VECTOR_FIELD), 0.3, 0.5),
    ("sphere2", "torsion", 1.0, lambda: sphere2_chart(), 0.02, 0.3),
    ("sphere3-volume", "torsion", 1.0, lambda: sphere3_chart(kappa=0.4), 0.02, 0.3),
    ("poly-raw", "torsion", 1.0, lambda: polynomial_chart(
        3, seed=91, torsion=TorsionSpec.raw(random_skew_torsion(3, seed=92, scale=0.3))),
        0.1, 0.4),
    ("sphere2-quartic", "curvature_term", 1.0, lambda: sphere2_chart(), 0.02, 0.3),
    ("poly-quartic", "curvature_term", 1.0, lambda: polynomial_chart(3, seed=93),
     0.1, 0.4),
    ("flat-volume-both", "both", 1.0, lambda: flat_chart(
        3, torsion=TorsionSpec.scaled_volume(0.35)), 0.3, 0.5),
    ("sphere3-both", "both", 1.0, lambda: sphere3_chart(kappa=0.4), 0.02, 0.3),
    ("poly-volume-both", "both", 1.6, lambda: polynomial_chart(
        3, seed=94, torsion=TorsionSpec.scaled_volume(0.4)), 0.1, 0.4),
]


@pytest.mark.parametrize("name,mode,lam,chart_fn,map_amp,spin_amp",
                         VARIATION_CASES, ids=[c[0] for c in VARIATION_CASES])
def test_first_variation_matches_residual_pairing(name, mode, lam, chart_fn,
                                                  map_amp, spin_amp):
    geom = GridGeometry(n_side=16, conformal_factor=lam)
    chart = chart_fn()
    for seed in (3, 4):
        phi, psi = random_smooth_fields(geom, chart, seed=seed, band_limit=2,
                                        map_amplitude=map_amp,
                                        spinor_amplitude=spin_amp)
        gap = _variation_gap(geom, chart, phi, psi, mode, seed=seed + 50)
        assert gap < 1e-6, f"{name} seed {seed}: variation gap {gap:.3e}"


def test_tension_pairs_against_dirichlet_variation():
    # with psi = 0 the map residual is the tension field alone
    geom = GridGeometry(n_side=16, conformal_factor=1.3)
    chart = sphere2_chart()
    phi, _ = random_smooth_fields(geom, chart, seed=11, band_limit=2,
                                  map_amplitude=0.02)
    eta = np.real(random_spinor_variation(geom, 2, seed=12, band_limit=2,
                                          amplitude=0.05)[..., 0])
    g = metric_on_map(geom, chart, phi)
    pair = geom.integrate(
        np.einsum("...ij,...i,...j->...", g, eta, tension(geom, chart, phi)))

    t = 1e-4
    def dirichlet(s):
        shifted = replace(phi, values=phi.values + s * eta)
        psi0 = VectorSpinorField.zero(geom, chart.dim)
        return energy_torsion(geom, chart, shifted, psi0).dirichlet

    fd = (dirichlet(t) - dirichlet(-t)) / (2.0 * t)
    assert abs(fd + pair) / max(1.0, abs(fd)) < 1e-6


def test_curvature_coupling_pairs_against_spinor_energy_variation():
    # torsion-free sphere: the spinor half of the energy moves by +<eta, R(psi)>
    geom = GridGeometry(n_side=16)
    chart = sphere2_chart()
    phi, psi = random_smooth_fields(geom, chart, seed=21, band_limit=2,
                                    map_amplitude=0.02, spinor_amplitude=0.3)
    eta = np.real(random_spinor_variation(geom, 2, seed=22, band_limit=2,
                                          amplitude=0.05)[..., 0])
    g = metric_on_map(geom, chart, phi)
    pair = geom.integrate(np.einsum("...ij,...i,...j->...", g, eta,
                                    curvature_coupling(geom, chart, phi, psi)))

    t = 1e-4
    def spinor_part(s):
        phi_s, psi_s = _transported(geom, chart, phi, psi,
                                    eta, np.zeros_like(psi.values), s)
        return energy_torsion(geom, chart, phi_s, psi_s).spinor

    fd = (spinor_part(t) - spinor_part(-t)) / (2.0 * t)
    assert abs(fd - pair) / max(1.0, abs(fd)) < 1e-6


def test_torsion_energy_equals_half_twisted_pairing():
    geom = GridGeometry(n_side=16, conformal_factor=1.2)
    chart = flat_chart(3, torsion=TorsionSpec.scaled_volume(0.5))
    phi, psi = random_smooth_fields(geom, chart, seed=31, band_limit=3,
                                    map_amplitude=0.4, spinor_amplitude=0.6)
    rep = energy_torsion(geom, chart, phi, psi)
    g = metric_on_map(geom, chart, phi)
    full = 0.5 * spinor_l2_inner(
        geom, g, psi, twisted_dirac(geom, chart, phi, psi, torsion=True))
    assert abs((rep.spinor + rep.torsion_coupling) - np.real(full)) < 1e-12


@pytest.mark.parametrize("chart_fn", [
    lambda: flat_chart(3, torsion=VECTOR_FIELD),
    lambda: polynomial_chart(3, seed=41, torsion=VECTOR_FIELD),
    lambda: flat_chart(3, torsion=TorsionSpec.vectorial([0.3, -0.2, 0.1])),
])
def test_f_tor_vectorial_matches_general_contraction(chart_fn):
    geom = GridGeometry(n_side=8)
    chart = chart_fn()
    phi, psi = random_smooth_fields(geom, chart, seed=42, band_limit=2,
                                    map_amplitude=0.3, spinor_amplitude=0.5)
    general = f_tor(geom, chart, phi, psi)
    closed = f_tor_vectorial(geom, chart, phi, psi)
    assert np.max(np.abs(general - closed)) < 1e-10


def test_f_tor_vectorial_rejects_other_kinds():
    geom = GridGeometry(n_side=8)
    chart = flat_chart(3, torsion=TorsionSpec.scaled_volume(0.3))
    phi, psi = random_smooth_fields(geom, chart, seed=43, band_limit=2)
    with pytest.raises(ConfigError):
        f_tor_vectorial(geom, chart, phi, psi)


def test_trivial_zero_residual_pieces():
    geom = GridGeometry(n_side=8)
    flat = flat_chart(3)
    phi, psi = random_smooth_fields(geom, flat, seed=51, band_limit=2,
                                    map_amplitude=0.4, spinor_amplitude=0.6)
    assert np.max(np.abs(curvature_coupling(geom, flat, phi, psi))) == 0.0
    assert np.max(np.abs(f_tor(geom, flat, phi, psi))) == 0.0

    withtor = flat_chart(3, torsion=TorsionSpec.scaled_volume(0.4))
    psi0 = VectorSpinorField.zero(geom, 3)
    assert np.max(np.abs(f_tor(geom, withtor, phi, psi0))) == 0.0
    zero_v = flat_chart(3, torsion=TorsionSpec.vectorial([0.0, 0.0, 0.0]))
    assert np.max(np.abs(f_tor_vectorial(geom, zero_v, phi, psi))) == 0.0


def test_wrap_dirichlet_closed_form():
    geom = GridGeometry(n_side=16, conformal_factor=1.3)
    chart = flat_chart(3)
    phi = MapField.wrap(geom, dim=3, degree=1)
    psi = VectorSpinorField.zero(geom, 3)
    rep = energy_torsion(geom, chart, phi, psi)
    assert abs(rep.dirichlet - 2.0 * np.pi ** 2) < 1e-12
    assert rep.spinor == 0.0 and rep.torsion_coupling == 0.0


def test_quartic_energy_closed_form_flat_volume_torsion():
    # constant-curvature shortcut: K = kappa^2 ((tr P)^2 - tr P^2)
    geom = GridGeometry(n_side=8)
    kappa = 0.45
    chart = flat_chart(3, torsion=TorsionSpec.scaled_volume(kappa))
    phi, psi = random_smooth_fields(geom, chart, seed=61, band_limit=2,
                                    map_amplitude=0.3, spinor_amplitude=0.7)
    rep = energy_curvature(geom, chart, phi, psi, torsion_mode="parallel_skew")
    P = np.einsum("...ic,...kc->...ik", np.conj(psi.values), psi.values)
    tr = np.einsum("...ii->...", P)
    tr2 = np.einsum("...ik,...ki->...", P, P)
    want = kappa ** 2 * geom.integrate(np.real(tr * tr - tr2)) / 12.0
    assert abs(rep.curvature_term - want) < 1e-12
    assert rep.imag_defect < 1e-12


@pytest.mark.parametrize("c", [0.5, 2.0, 7.3])
def test_conformal_invariance_of_all_energy_parts(c):
    base = GridGeometry(n_side=16, conformal_factor=1.1)
    for chart, mode in [
        (flat_chart(3, torsion=VECTOR_FIELD), "torsion"),
        (sphere3_chart(kappa=0.4), "both"),
    ]:
        phi, psi = random_smooth_fields(base, chart, seed=71, band_limit=2,
                                        map_amplitude=0.02, spinor_amplitude=0.3)
        scaled = GridGeometry(n_side=base.n_side, length=base.length,
                              conformal_factor=c * base.conformal_factor)
        psi_sc = VectorSpinorField(values=psi.values / np.sqrt(c))
        a = energy_for_mode(base, chart, phi, psi, mode=mode).as_dict()
        b = energy_for_mode(scaled, chart, phi, psi_sc, mode=mode).as_dict()
        for key in ("total", "dirichlet", "spinor", "torsion_coupling",
                    "curvature_term"):
            if a[key] is None:
                assert b[key] is None
                continue
            assert abs(a[key] - b[key]) < 1e-12 * max(1.0, abs(a[key])), key


def test_imag_defect_small_for_every_torsion_kind():
    geom = GridGeometry(n_side=16)
    kinds = [
        TorsionSpec.zero(),
        VECTOR_FIELD,
        TorsionSpec.scaled_volume(0.4),
        TorsionSpec.cartan_type(random_skew_torsion(3, seed=81, scale=0.4)),
        TorsionSpec.raw(random_skew_torsion(3, seed=82, scale=0.4)),
    ]
    for spec in kinds:
        chart = flat_chart(3, torsion=spec)
        phi, psi = random_smooth_fields(geom, chart, seed=83, band_limit=3,
                                        map_amplitude=0.4, spinor_amplitude=0.6)
        assert energy_torsion(geom, chart, phi, psi).imag_defect < 1e-12


def test_quartic_mode_rejects_incompatible_torsion():
    geom = GridGeometry(n_side=8)
    for spec in (VECTOR_FIELD,
                 TorsionSpec.cartan_type(random_skew_torsion(3, seed=85, scale=0.4))):
        chart = flat_chart(3, torsion=spec)
        phi, psi = random_smooth_fields(geom, chart, seed=86, band_limit=2)
        with pytest.raises(ModeCompatibilityError) as err:
            energy_for_mode(geom, chart, phi, psi, mode="both")
        assert err.value.check_name == "real-valuedness-precondition"

    # totally antisymmetric but position dependent: fails the parallel check
    wobble = TorsionSpec.totally_antisymmetric(
        lambda y: (1.0 + 0.3 * np.sin(y[..., 0]))[..., None, None, None]
        * _volume_eps())
    chart = flat_chart(3, torsion=wobble)
    phi, psi = random_smooth_fields(geom, chart, seed=87, band_limit=2)
    with pytest.raises(ModeCompatibilityError) as err:
        energy_curvature(geom, chart, phi, psi, torsion_mode="parallel_skew")
    assert err.value.check_name == "real-valuedness-precondition"


def _volume_eps():
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return eps


def test_levi_civita_mode_ignores_torsion_entirely():
    geom = GridGeometry(n_side=8)
    plain = flat_chart(3)
    spiced = flat_chart(3, torsion=VECTOR_FIELD)
    phi, psi = random_smooth_fields(geom, plain, seed=88, band_limit=2,
                                    map_amplitude=0.3, spinor_amplitude=0.5)
    a = energy_curvature(geom, plain, phi, psi, torsion_mode="levi_civita")
    b = energy_curvature(geom, spiced, phi, psi, torsion_mode="levi_civita")
    assert a.as_dict() == b.as_dict()
    assert b.torsion_coupling == 0.0


def test_unknown_mode_rejected():
    geom = GridGeometry(n_side=8)
    chart = flat_chart(2)
    phi = MapField.constant(geom, [0.0, 0.0])
    psi = VectorSpinorField.zero(geom, 2)
    with pytest.raises(ConfigError):
        energy_for_mode(geom, chart, phi, psi, mode="fancy")
    with pytest.raises(ConfigError):
        el_residual(geom, chart, phi, psi, mode="fancy")
    with pytest.raises(ConfigError):
        energy_curvature(geom, chart, phi, psi, torsion_mode="fancy")


def test_energy_momentum_wrap_closed_form():
    geom = GridGeometry(n_side=16, conformal_factor=1.3)
    chart = flat_chart(3, torsion=TorsionSpec.scaled_volume(0.35))
    phi = MapField.wrap(geom, dim=3, degree=1)
    psi = VectorSpinorField.zero(geom, 3)
    em = energy_momentum(geom, chart, phi, psi)
    lam = geom.conformal_factor
    assert np.max(np.abs(em.tensor[..., 0, 0] - 1.0 / lam ** 2)) < 1e-12
    assert np.max(np.abs(em.tensor[..., 1, 1] + 1.0 / lam ** 2)) < 1e-12
    assert np.max(np.abs(em.tensor[..., 0, 1])) < 1e-14
    assert em.trace_norm < 1e-10
    assert em.antisym_norm < 1e-14
    assert em.divergence_norm < 1e-10


def test_energy_momentum_constant_pair_vanishes():
    geom = GridGeometry(n_side=8)
    chart = sphere2_chart()
    phi = MapField.constant(geom, [0.05, -0.02])
    psi = VectorSpinorField.zero(geom, 2)
    em = energy_momentum(geom, chart, phi, psi)
    assert np.max(np.abs(em.tensor)) == 0.0
    assert em.divergence_norm == 0.0


def test_hopf_differential_wrap_closed_form():
    geom = GridGeometry(n_side=16, conformal_factor=1.7, length=4.0 * np.pi)
    chart = flat_chart(3)
    phi = MapField.wrap(geom, dim=3, degree=1)
    psi = VectorSpinorField.zero(geom, 3)
    hopf = hopf_differential(geom, chart, phi, psi)
    want = (2.0 * np.pi / geom.length) ** 2 / geom.conformal_factor ** 2
    assert np.max(np.abs(hopf.values - want)) < 1e-14
    assert hopf.dbar_norm < 1e-12
