import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periodic_resonances.periodic_model import (
    NotAnEdgeError,
    PeriodicPotential,
    band_structure,
    classify_band_edge,
    discriminant,
    monodromy,
    quasimomentum,
    transfer_product,
)

EDGE_TOL = 1e-10
DET_TOL = 1e-12
BASE_TOL = 1e-10

potentials = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=4).map(
    lambda v: PeriodicPotential(tuple(v)))


def test_free_band_is_minus_two_two():
    bs = band_structure(PeriodicPotential((0.0,)))
    assert len(bs.bands) == 1
    assert bs.bands[0] == pytest.approx((-2.0, 2.0), abs=EDGE_TOL)


def test_two_periodic_edges_match_quadratic_formula():
    # Delta(E) = E(E-2) - 2, so Delta = -2 at E in {0, 2} and +2 at 1 -+ sqrt(5)
    bs = band_structure(PeriodicPotential((2.0, 0.0)))
    got = sorted(bs.edges)
    want = [1 - math.sqrt(5), 0.0, 2.0, 1 + math.sqrt(5)]
    assert np.allclose(got, want, atol=EDGE_TOL, rtol=0)


def test_zero_two_periodic_has_closed_gap_at_zero():
    bs = band_structure(PeriodicPotential((0.0, 0.0)))
    assert len(bs.bands) == 1
    assert any(abs(g) < 1e-8 for gaps in bs.closed_gaps for g in gaps)


def test_free_quasimomentum_is_arccos():
    V = PeriodicPotential((0.0,))
    for E in np.linspace(-1.9, 1.9, 9):
        assert quasimomentum(E, V) == pytest.approx(math.acos(E / 2), abs=1e-12)


def test_classification_free_edges_generic():
    V = PeriodicPotential((0.0,))
    for E0, d in ((2.0, 1.0), (-2.0, 1.0)):
        cls = classify_band_edge(E0, 0, V)
        assert cls.case == "generic"
        assert cls.d == pytest.approx(d, abs=1e-12)


def test_classification_two_periodic_zero_edge():
    V = PeriodicPotential((2.0, 0.0))
    assert classify_band_edge(0.0, 1, V).case == "nongeneric"
    assert classify_band_edge(0.0, 0, V).d == pytest.approx(2.0, abs=1e-12)
    assert classify_band_edge(1 - math.sqrt(5), 0, V).case == "generic"


def test_classification_rejects_non_edge():
    with pytest.raises(NotAnEdgeError):
        classify_band_edge(0.5, 0, PeriodicPotential((0.0,)))


def test_monodromy_rejects_bad_base():
    with pytest.raises(ValueError):
        monodromy(0.0, 5, PeriodicPotential((1.0, 2.0)))


@pytest.mark.parametrize("doc, field", [
    ({"p": 3, "values": [1, 2]}, "'p'"),
    ({"p": 2}, "'values'"),
    ({"values": ["a"]}, "'values'"),
])
def test_potential_parsing_names_the_field(doc, field):
    with pytest.raises(ValueError, match=field):
        PeriodicPotential.from_dict(doc)


def test_potential_roundtrip(tmp_path):
    V = PeriodicPotential((1.5, -0.25, 3.0))
    path = tmp_path / "v.json"
    path.write_text(json.dumps(V.to_dict()))
    assert PeriodicPotential.load(path) == V


@settings(max_examples=30, deadline=None)
@given(potentials, st.floats(-6, 6))
def test_transfer_product_unimodular(V, E):
    for k in range(1, 2 * V.p + 1):
        M = transfer_product(E, V, k)
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        # cancellation in the 2x2 determinant is relative to the squared entries
        assert abs(det - 1) <= DET_TOL * max(1.0, np.abs(M).max()) ** 2


@settings(max_examples=30, deadline=None)
@given(potentials, st.floats(-5, 5))
def test_discriminant_independent_of_base(V, E):
    d0 = discriminant(E, V, 0)
    for k in range(V.p):
        assert abs(discriminant(E, V, k) - d0) <= BASE_TOL * max(1.0, abs(d0))


@settings(max_examples=20, deadline=None)
@given(potentials)
def test_edges_solve_discriminant(V):
    bs = band_structure(V)
    for E in bs.edges:
        assert abs(abs(discriminant(E, V)) - 2) <= 1e-8
    # reflection: bands of -V are the negated bands of V
    rb = band_structure(V.reflected())
    assert np.allclose(sorted(rb.edges), sorted(-e for e in bs.edges), atol=1e-8)
