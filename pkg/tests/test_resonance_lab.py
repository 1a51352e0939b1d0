import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periodic_resonances import analytic_kernel as ak
from periodic_resonances import resonance_lab as rl
from periodic_resonances.contour_engine import Rectangle, winding_count
from periodic_resonances.periodic_model import PeriodicPotential
from periodic_resonances.tridiag_spectral import assemble, eigen_decompose

RES_TOL = 1e-9
# independent eigensolve of V: 1e-16 eigenvalue errors grow by ~a_k/(lambda_k-E)^2 near the edge
CROSS_TOL = 1e-7

TWO = PeriodicPotential((2.0, 0.0))


@pytest.fixture(scope="module")
def nongeneric():
    # right edge E0 = 0 with L odd: d_{j+1} = 0
    return rl.prepare_edge(TWO, 401, 0, "right")


@pytest.fixture(scope="module")
def generic():
    return rl.prepare_edge(TWO, 400, 0, "left")


def test_corner_size_examples():
    assert rl.corner_size(0, 20) == pytest.approx(1 / 20)
    assert rl.corner_size(9, 10) == pytest.approx(1 / (math.log(10) + 1))


def test_edge_classes(nongeneric, generic):
    assert nongeneric.classification.case == "nongeneric"
    assert nongeneric.reflected
    assert generic.classification.case == "generic"


def test_build_regions_out_of_range(nongeneric):
    with pytest.raises(rl.RegionError):
        rl.build_regions(nongeneric.frame, nongeneric.local.size, 0.1, 20)
    with pytest.raises(rl.RegionError):
        rl.build_regions(nongeneric.frame, 0, -0.1, 20)


def test_regime_flips_from_figure2_to_figure1(generic):
    # with a small kappa the corner squares start larger than x0^2/(eps L)
    regimes = [rl.build_regions(generic.frame, n, 0.1, 0.02).regime for n in range(12)]
    assert regimes[0] == "figure2"
    assert "figure1" in regimes
    first = regimes.index("figure1")
    assert all(r == "figure1" for r in regimes[first:])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 8), st.floats(0.02, 0.5), st.floats(1.0, 100.0))
def test_region_invariants(nongeneric, n, eps, kappa):
    fam = rl.build_regions(nongeneric.frame, n, eps, kappa)
    assert rl.corner_size(0, kappa) == pytest.approx(1 / kappa)
    if n >= 2:
        assert fam.Delta_n > rl.corner_size(n - 1, kappa)
    assert (fam.regime == "figure1") == (fam.Delta_n < fam.x0**2 / (eps * fam.L))
    assert fam.D.re_min == fam.lam_n and fam.D.re_max == fam.lam_n1
    assert fam.D.im_max == 0 and fam.D.im_min < 0
    for r in fam.free_regions().values():
        assert fam.D.re_min <= r.re_min < r.re_max <= fam.D.re_max
        assert fam.D.im_min <= r.im_min < r.im_max <= 0


def test_pole_free_residual_matches_product(nongeneric):
    frame = nongeneric.frame
    ids = frame.local_indices[[0, 1]]
    h, hp = rl.pole_free_residual(frame, ids)
    z = np.array([20.0 - 0.4j, 5.0 - 1.0j])
    P = np.prod([frame.lambdas[k] - z for k in ids], axis=0)
    assert np.allclose(h(z), P * ak.rescaled_residual(z, frame), rtol=1e-10)
    # finite at the pole itself
    at = h(np.array([frame.lambdas[ids[0]] + 0j]))
    assert np.isfinite(at).all() and abs(at[0]) > 0
    step = 1e-6
    num = (h(z + step) - h(z - step)) / (2 * step)
    assert np.allclose(hp(z), num, rtol=1e-6)


def test_resonances_solve_the_original_equation(nongeneric):
    """Reflected roots, mapped back, are zeros of the unreflected residual."""
    sd = eigen_decompose(assemble(TWO, 401))
    found = rl.find_resonances_near_edge(nongeneric, ns=range(3))
    recs = found["records"]
    assert recs
    for r in recs:
        assert r.E.imag < 0
        assert r.residual <= RES_TOL
        assert abs(ak.residual(r.E, sd)) <= CROSS_TOL
        assert r.z_physical == pytest.approx(401**2 * (r.E - nongeneric.E0))


def test_search_counts_match_winding(nongeneric):
    found = rl.find_resonances_near_edge(nongeneric, ns=range(4))
    for s in found["searches"]:
        assert s["found"] == s["winding"]


def test_gap_report_nongeneric(nongeneric):
    gap, recs = rl.verify_gap(nongeneric, 0, rl.LabParams())
    assert gap["omega_tilde_regime"]
    assert gap["theorem_unique"]["winding"] == 1
    # frozen from the first run: the unique rescaled resonance of the gap
    assert gap["theorem_unique"]["re_z"] == pytest.approx(19.6392, abs=1e-3)
    assert gap["theorem_unique"]["im_z"] == pytest.approx(-0.09769, abs=1e-4)
    assert gap["roots_in_free_regions"] == []
    assert all(c["passed"] and c["zero_free"] for c in gap["free_certificates"])
    assert gap["theorem_existence"]["passed"]


def test_empty_region_generic_and_nongeneric(nongeneric, generic):
    for prob in (nongeneric, generic):
        rep = rl.omega_i_check(prob, rl.LabParams())
        assert rep["passed"] and rep["winding"] == 0


def test_certificate_grid_validation(nongeneric):
    fam = rl.build_regions(nongeneric.frame, 0, 0.1, 20)
    with pytest.raises(rl.RegionError):
        rl.certify_free_region(fam.corner_left, nongeneric.frame, grid_density=10)
    cert = rl.certify_free_region(fam.corner_left, nongeneric.frame, 64, "corner",
                                  ("modulus", 1 / fam.Delta_n))
    # the corner of the square is the pole itself
    assert cert.skipped_points == 1
    assert cert.min_residual > 0 and cert.margin_ratio > 0


def test_scaling_nongeneric_fit():
    rep = rl.scaling_study(TWO, 0, "right", [401, 801, 1601])
    assert rep.passed
    assert 0.8 <= rep.slope <= 1.2 and rep.r_squared >= 0.9
    slopes = [v["slope"] for v in rep.per_L.values() if "slope" in v]
    assert max(slopes) - min(slopes) <= 0.1
    assert rep.spearman >= 0.9


def test_scaling_free_case_has_no_resonances():
    rep = rl.scaling_study(PeriodicPotential((0.0,)), 0, "left", [200, 400])
    assert not rep.passed and "insufficient" in rep.note


def test_classification_crosscheck():
    rep = rl.classify_and_crosscheck(PeriodicPotential((0.0,)), 0, "left", [100, 200, 400])
    assert rep.agree and rep.analytic[0]["case"] == "generic"
    rep = rl.classify_and_crosscheck(TWO, 0, "right", [400, 401, 800, 801])
    assert rep.agree
    assert {a["j"]: a["case"] for a in rep.analytic} == {0: "generic", 1: "nongeneric"}


def test_nongeneric_search_hits_reverified():
    hits = rl.search_nongeneric(np.random.default_rng(0), trials=10)
    assert hits
    assert all(h["empirical"] == "nongeneric" for h in hits)


def test_winding_on_reflected_frame_is_zero_above_axis(nongeneric):
    # no zeros in the upper half-plane, including near the poles
    frame = nongeneric.frame
    lam = frame.local_lambdas
    h, _ = rl.pole_free_residual(frame, frame.local_indices[:2])
    cert = winding_count(h, Rectangle(lam[0] - 1, lam[1] + 1, 0.01, 5.0))
    assert cert.winding == 0
