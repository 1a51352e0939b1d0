import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periodic_resonances.contour_engine import (
    InconclusiveContour,
    Rectangle,
    image_curve,
    is_simple,
    locate_all_roots,
    polygon_winding,
    refine_root,
    winding_about,
    winding_count,
)

ROOT_TOL = 1e-8

UNIT = Rectangle(0.0, 1.0, -1.0, 0.0)


def poly(roots):
    roots = np.asarray(roots, dtype=complex)

    def f(z):
        z = np.asarray(z, dtype=complex)
        return np.prod([z - r for r in roots], axis=0)

    def fp(z):
        z = np.asarray(z, dtype=complex)
        return sum(np.prod([z - r for j, r in enumerate(roots) if j != i] + [np.ones_like(z)],
                           axis=0) for i in range(roots.size))

    return f, fp


def test_simple_zero_inside_and_outside():
    f, _ = poly([0.4 - 0.6j])
    assert winding_count(f, UNIT).winding == 1
    f, _ = poly([1.4 - 0.6j])
    assert winding_count(f, UNIT).winding == 0


def test_double_zero_counts_twice():
    f, fp = poly([0.3 - 0.2j, 0.3 - 0.2j])
    assert winding_count(f, UNIT).winding == 2
    recs = locate_all_roots(f, fp, UNIT)
    assert sum(r.multiplicity for r in recs) == 2
    assert all(abs(r.root - (0.3 - 0.2j)) < ROOT_TOL for r in recs)


def test_two_roots_located():
    f, fp = poly([0.3 - 0.2j, 0.7 - 0.5j])
    recs = locate_all_roots(f, fp, UNIT)
    assert [r.multiplicity for r in recs] == [1, 1]
    assert abs(recs[0].root - (0.3 - 0.2j)) < ROOT_TOL
    assert abs(recs[1].root - (0.7 - 0.5j)) < ROOT_TOL
    assert all(r.certificate.valid for r in recs)


def test_boundary_zero_dilates():
    f, _ = poly([0.5 + 0j])  # on the top edge
    cert = winding_count(f, UNIT)
    assert cert.dilations >= 1 and cert.valid
    assert cert.region != UNIT


def test_boundary_zero_without_dilation_is_inconclusive():
    f, _ = poly([0.5 + 0j])
    with pytest.raises(InconclusiveContour):
        winding_count(f, UNIT, dilate=False)


def test_pole_gives_negative_winding():
    cert = winding_count(lambda z: 1 / (z - (0.5 - 0.5j)), UNIT)
    assert cert.winding == -1


def test_polygon_winding_l_shape():
    # the second root sits in the missing corner of the L
    f, _ = poly([0.25 - 0.75j, 0.75 - 0.75j])
    L_shape = [0, 1, 1 - 0.5j, 0.5 - 0.5j, 0.5 - 1j, -1j][::-1]
    assert polygon_winding(f, L_shape).winding == 1


def test_refine_root_newton():
    f, fp = poly([0.123 - 0.456j, 2.0])
    z = refine_root(f, fp, 0.1 - 0.4j)
    assert abs(z - (0.123 - 0.456j)) < 1e-13


def test_image_curve_identity_square():
    img = image_curve(lambda z: np.asarray(z, dtype=complex), UNIT.vertices())
    assert is_simple(img)
    assert winding_about(img, 0.5 - 0.5j) == 1
    assert winding_about(img, 2.0) == 0


def test_doubly_covered_image_not_simple():
    img = image_curve(lambda z: np.asarray(z, dtype=complex) ** 2,
                      Rectangle(-1, 1, -1, 1).vertices())
    assert not is_simple(img)


def test_crossing_image_not_simple():
    # the rectangle holds pairs z, -z, so the boundary image of z^2 crosses itself
    img = image_curve(lambda z: np.asarray(z, dtype=complex) ** 2,
                      Rectangle(-1, 1, -0.2, 1).vertices())
    assert not is_simple(img)
    half = image_curve(lambda z: np.asarray(z, dtype=complex) ** 2,
                       Rectangle(-1, 1, 0.2, 1).vertices())
    assert is_simple(half)


def test_image_csv_header():
    img = image_curve(lambda z: np.asarray(z, dtype=complex), UNIT.vertices())
    assert img.to_csv().splitlines()[0] == "t,re_f,im_f"


def test_quadrants_tile():
    parts = UNIT.quadrants(0.3, 0.6)
    area = sum(p.width * p.height for p in parts)
    assert area == pytest.approx(UNIT.width * UNIT.height)


points = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(points, min_size=1, max_size=5), st.floats(0.1, 10.0))
def test_winding_equals_interior_root_count(roots, scale):
    rect = Rectangle(-0.5, 0.5, -0.5, 0.5)
    margin = [min(abs(r.real - x) for x in (-0.5, 0.5)) for r in roots]
    margin += [min(abs(r.imag - y) for y in (-0.5, 0.5)) for r in roots]
    if min(margin) < 1e-3:
        return
    f, _ = poly(roots)
    inside = sum(1 for r in roots if rect.contains(r))
    cert = winding_count(lambda z: scale * f(z), rect, dilate=False)
    assert cert.winding == inside
    assert cert.max_arg_step < np.pi / 2
