import math
from fractions import Fraction

import numpy as np
import pytest

from fallingballs.core import (
    SectionPoint,
    corner_points,
    fixed_point,
    involution,
    map_t,
    region_index,
    sample_phase_space,
    singularity_gap,
)
from fallingballs.orbits import find_orbit, find_pn, multipliers, pn_itinerary
from fallingballs.symbolic import (
    Itinerary,
    boundary_arcs,
    classify_intersection_shape,
    envelope_fit,
    estimate_symbolic_metric,
    figure_case,
    full_shift_alphabet_interval,
    full_shift_interval,
    intersection_shapes,
    inverse_singularity,
    inverse_x1_z,
    itinerary_of,
    separated_pair,
    separation,
    trace_singularity,
    verify_quadrangular,
)


def test_itinerary_indexing_and_shift():
    it = Itinerary((0, 0, 1, 1, 1), offset=2, periodic=True)
    assert [it[i] for i in range(-2, 3)] == [0, 0, 1, 1, 1]
    assert it[3] == 0 and it[-3] == 1
    assert it.shifted(1)[0] == it[1]
    assert it.alphabet == {0, 1}
    finite = Itinerary((3, 4), offset=1)
    assert finite.first == -1 and finite.stop == 1
    with pytest.raises(IndexError):
        finite[1]
    with pytest.raises(ValueError):
        Itinerary(())


def test_itineraries_of_fixed_points():
    for m in (0.6, 0.7, 0.9):
        for n in (0, 1):
            it = itinerary_of(fixed_point(n, m)[0], m, 20, 20)
            assert set(it.symbols) == {n} and not it.truncated
            assert len(it) == 40


def test_itinerary_matches_region_sequence():
    m = 0.7
    p = SectionPoint(0.3, -1.0)
    it = itinerary_of(p, m, 15, 0)
    q = p
    for i in range(len(it)):
        assert it[i] == region_index(q, m)
        q = map_t(q, m)


def test_involution_reverses_itineraries():
    m = 0.7
    pts = sample_phase_space(m, 200, np.random.default_rng(0))
    checks = 0
    for h, z in zip(pts.h, pts.z):
        p = SectionPoint(h, z)
        a = itinerary_of(p, m, 6, 6)
        b = itinerary_of(involution(p, m), m, 6, 6)
        for i in range(-5, 5):
            j = -i - 1
            if a.first <= j < a.stop and b.first <= i < b.stop:
                assert b[i] == a[j]
                checks += 1
    assert checks > 1000


def test_separation_examples():
    zeros, ones = Itinerary.constant(0), Itinerary.constant(1)
    assert separation(zeros, ones).s == 0
    for n in range(2, 7):
        p = pn_itinerary(n)
        assert separation(p, zeros).s == n
        for i in range(n, n * n + n + 1):
            # positions -1 and 0 of T^n P_n already differ, hence the + 1
            assert separation(p.shifted(i), ones).s == min(i - n + 1, n * n + n - i)


def test_separation_saturates_on_identical_words():
    a = Itinerary((0, 1, 1), 0)
    rec = separation(a, a)
    assert rec.saturated and rec.s == min(rec.s_plus, rec.s_minus)


@pytest.mark.parametrize("m", [0.6, 0.7, 0.75, 0.9])
def test_trace_endpoints_match_corners(m):
    for n in range(0, 4):
        poly = trace_singularity(n, m, samples=24)
        c = corner_points(n, m)
        ends = {tuple(poly.vertices[0]), tuple(poly.vertices[-1])}
        for corner in (c.Bx, c.X):
            if corner.z > -1e-12:
                continue
            d = min(math.hypot(corner.h - a, corner.z - b) for a, b in ends)
            assert d < 1e-6, (n, corner)


def test_traced_curve_is_a_singularity_and_increasing():
    m = 0.7
    poly = trace_singularity(1, m, samples=40)
    v = poly.vertices
    assert np.all(np.diff(v[:, 0]) > 0) and np.all(np.diff(v[:, 1]) > 0)
    inner = SectionPoint(v[1:-1, 0], v[1:-1, 1])
    assert np.max(singularity_gap(inner, m)) < 1e-8
    img = inverse_singularity(poly, m).vertices
    order = np.argsort(img[:, 0])
    assert np.all(np.diff(img[order, 1]) < 0)


def test_full_shift_intervals():
    assert full_shift_interval(1) == (Fraction(2, 3), Fraction(3, 4))
    assert full_shift_interval(2) == (Fraction(3, 4), Fraction(11, 12))
    for k in range(1, 51):
        assert full_shift_interval(k + 1)[0] <= full_shift_interval(k)[1]
        assert 2 * k * k + k - 3 >= 0
    assert full_shift_alphabet_interval([1, 2]) == full_shift_interval(2)
    with pytest.raises(ValueError):
        full_shift_alphabet_interval([0, 2])


def test_quadrangular_margins():
    q = verify_quadrangular(1, 0.75)
    assert abs(q.margins[1]) < 1e-14
    assert inverse_x1_z(0.75) == pytest.approx(-2 / math.sqrt(3), abs=1e-15)
    assert verify_quadrangular(1, 0.70).holds
    q = verify_quadrangular(2, 0.70)
    assert not q.holds and q.margins[0] < 0
    for k in range(1, 11):
        lo, hi = map(float, full_shift_interval(k))
        assert abs(verify_quadrangular(k, lo).margins[0]) < 1e-9
        assert abs(verify_quadrangular(k, hi).margins[1]) < 1e-9
        for m in np.linspace(lo, hi, 102)[1:-1]:
            assert verify_quadrangular(k, m).holds
            assert min(verify_quadrangular(k, m).margins) > 0


def test_figure_cases():
    assert figure_case(0.55) == "triangular"
    assert figure_case(7 / 12) == "triangular"
    assert figure_case(0.6) == "pentagonal"
    assert figure_case(2 / 3) == "quadrangular"


def test_shapes_by_counting():
    s = intersection_shapes(0.55, resolution=800)
    assert any(r.shape == "triangular" for r in s.values())
    assert s[(0, 0)].shape == "quadrangular"
    s = intersection_shapes(0.60, resolution=800)
    assert any(r.shape == "pentagonal" for r in s.values())
    s = intersection_shapes(0.70, resolution=800)
    assert all(r.shape == "quadrangular" and r.consistent for r in s.values())


def test_shape_flags():
    r = classify_intersection_shape(0, 1, 7 / 12 + 1e-10, resolution=600)
    assert r.near_threshold
    with pytest.raises(ValueError):
        classify_intersection_shape(2, 0, 0.7)
    arcs = boundary_arcs(0, 0, 0.7)
    assert len(arcs) == 4 and all(0 < frac <= 1 for _, frac in arcs)


def test_separated_pair_has_requested_separation():
    rng = np.random.default_rng(1)
    for s in range(1, 10):
        a, b = separated_pair(s, rng)
        assert separation(a, b).s == s


def test_envelope_fit_recovers_rate():
    s = np.repeat(np.arange(3, 10), 4)
    y = 2.0 * 0.5**s * np.tile([1.0, 0.5, 0.2, 0.9], 7)
    C, theta, r2 = envelope_fit(s, y)
    assert theta == pytest.approx(0.5) and C == pytest.approx(2.0) and r2 == pytest.approx(1.0)
    with pytest.raises(ArithmeticError):
        envelope_fit([3, 4], [1.0, 0.5])


def test_symbolic_metric_bounds_pn():
    m = 0.7
    fit = estimate_symbolic_metric(m, pairs=120, rng=0)
    assert 0 < fit.theta < 1 and fit.r2 > 0.9
    f0 = np.array(fixed_point(0, m)[0])
    for n in range(1, 9):
        d = math.hypot(*(find_pn(n, m).points[0] - f0))
        assert d <= fit.C * fit.theta**n


def test_metric_outside_interval_rejected():
    with pytest.raises(ValueError):
        estimate_symbolic_metric(0.6, pairs=10)


def test_stable_manifold_pairs_contract():
    # a point on the local stable manifold of F_0 approaches it at rate |mu|
    m = 0.7
    f0 = find_orbit(Itinerary.constant(0), m)
    mult = multipliers(f0)
    p0 = f0.points[0]
    s = mult.stable[0]
    eps = 1e-7
    q = SectionPoint(*(p0 + eps * s))
    d = []
    # the eigendirection is only tangent to the manifold, so the unstable
    # error grows like |lambda|^k eps^2 and the test stops after 7 steps
    for _ in range(8):
        d.append(math.hypot(q.h - p0[0], q.z - p0[1]))
        q = map_t(q, m)
    rates = np.array(d[1:]) / np.array(d[:-1])
    assert np.all(np.abs(rates - abs(mult.mu)) < 1e-3)
