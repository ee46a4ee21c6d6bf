import json
import math

import numpy as np
import pytest

from fallingballs.analysis import pn_distances_to_f1
from fallingballs.core import fixed_point, fixed_point_period, in_phase_space
from fallingballs.orbits import (
    WrongBranch,
    find_orbit,
    find_pn,
    flow_period,
    in_section,
    multipliers,
    orbit_dm,
    orbit_dm_fd,
    orbit_from_dict,
    orbit_to_dict,
    pn_itinerary,
    replay_orbit,
    total_derivative,
)
from fallingballs.symbolic import Itinerary


def test_pn_itinerary_layout():
    it = pn_itinerary(3)
    assert len(it) == 15
    assert [it[i] for i in range(-3, 3)] == [0] * 6
    assert [it[i] for i in range(3, 12)] == [1] * 9
    with pytest.raises(ValueError):
        pn_itinerary(0)


def test_fixed_point_orbits():
    for n in (0, 1):
        o = find_orbit(Itinerary.constant(n), 0.7)
        p, _ = fixed_point(n, 0.7)
        assert np.allclose(o.points[0], p, atol=1e-13)
        assert flow_period(o) == pytest.approx(fixed_point_period(n, 0.7), abs=1e-13)


def test_f0_multipliers_at_three_quarters():
    o = find_orbit(Itinerary.constant(0), 0.75)
    lam, mu = o.multipliers
    assert lam == pytest.approx(-2.0, abs=1e-12) and mu == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("m", [0.67, 0.7, 0.73])
def test_pn_orbits(m):
    for n in range(1, 9):
        o = find_pn(n, m)
        assert o.period == n * n + 2 * n
        assert o.residual < 1e-10
        assert in_section(o)
        rep = replay_orbit(o)
        assert rep.bumps_match and not rep.ambiguous
        assert rep.cumulative < 1e-7
        assert rep.period_dev < 1e-9
        lam, mu = o.multipliers
        assert lam * mu == pytest.approx(1.0, rel=1e-9)
        assert abs(lam) > 1 > abs(mu)
        assert np.max(o.points[:, 1]) < 0


def test_flow_period_bound():
    for m in (0.67, 0.7, 0.73):
        for n in (2, 5):
            o = find_pn(n, m)
            assert flow_period(o) / o.period <= 4 / math.sqrt(m)


def test_multipliers_are_cyclic_invariants():
    o = find_pn(3, 0.7)
    mult = multipliers(o)
    for start in (0, 4, 11):
        w = np.linalg.eigvals(total_derivative(o, start))
        assert np.allclose(np.sort(w.real), np.sort([mult.lam, mult.mu]), rtol=1e-8)
    # stepwise factors reproduce the totals and the eigenvectors are invariant
    assert np.prod(mult.lam_steps) == pytest.approx(mult.lam, rel=1e-10)
    assert np.all(mult.unstable[:, 0] * mult.unstable[:, 1] < 0)


def test_mixed_alphabet_orbit_at_higher_mass():
    o = find_orbit(Itinerary((1, 2, 2), 0, True), 0.8)
    assert o.symbols == (1, 2, 2)
    assert replay_orbit(o).bumps_match


def test_unphysical_fixed_point_is_rejected():
    # the algebraic F_3(0.51) exists but does not lie in R_3
    assert not fixed_point(3, 0.51)[1]
    with pytest.raises(WrongBranch):
        find_orbit(Itinerary.constant(3), 0.51)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_orbit_derivative_matches_fd(n):
    m = 0.7
    o = find_pn(n, m)
    an = orbit_dm(o)
    lin = orbit_dm(o, method="linear")
    fd = orbit_dm_fd(o.itinerary, m, orbit=o)
    assert np.allclose(an.dpoints_dm, lin.dpoints_dm, rtol=1e-10, atol=1e-12)
    assert np.allclose(an.dpoints_dm, fd.dpoints_dm, rtol=1e-6, atol=1e-8)
    assert an.dtau_dm == pytest.approx(fd.dtau_dm, rel=1e-6)


def test_fixed_point_derivative_closed_form():
    m = 0.7
    for n in (0, 1):
        o = find_orbit(Itinerary.constant(n), m)
        d = orbit_dm(o)
        a = 1 - 3 * m + 2 * m * m
        da = -3 + 4 * m
        k = (n + 1) ** 2
        # d/dm of m / (2 (1 - a k)) and of -(n + 1)/sqrt(1 - a k)
        dh = 1 / (2 * (1 - a * k)) + m * k * da / (2 * (1 - a * k) ** 2)
        dz = -(n + 1) * 0.5 * k * da / (1 - a * k) ** 1.5
        assert d.dpoints_dm[0] == pytest.approx([dh, dz], rel=1e-10)
        dtau = (fixed_point_period(n, m + 1e-6) - fixed_point_period(n, m - 1e-6)) / 2e-6
        assert d.dtau_dm == pytest.approx(dtau, rel=1e-7)


def test_derivative_coefficients_decay_along_orbit():
    o = find_pn(6, 0.7)
    d = orbit_dm(o)
    mult = multipliers(o)
    # the series terms reassemble the derivative at the first point
    dp0 = d.a_coeffs.sum() * mult.stable[0] + d.b_coeffs.sum() * mult.unstable[0]
    assert np.allclose(dp0, d.dpoints_dm[0], rtol=1e-9, atol=1e-12)
    # far past contributions to the stable part and far future ones to the
    # unstable part are damped geometrically
    a, b = np.abs(d.a_coeffs), np.abs(d.b_coeffs)
    assert a[0] < 1e-6 * a.max() and b[-1] < 1e-6 * b.max()


def test_json_round_trip():
    o = find_pn(2, 0.7)
    doc = json.loads(json.dumps(orbit_to_dict(o, orbit_dm(o))))
    back = orbit_from_dict(doc)
    assert np.array_equal(back.points, o.points)
    assert back.itinerary == o.itinerary
    assert doc["period_discrete"] == 8
    assert doc["flow_period"] == pytest.approx(flow_period(o))


def test_pn_shadows_f1():
    m = 0.7
    f1 = np.array(fixed_point(1, m)[0])
    o = find_pn(7, m)
    idx, d = pn_distances_to_f1(o)
    mid = len(d) // 2
    assert d[mid] < 1e-6
    assert d[mid] < d[0] and d[mid] < d[-1]
    assert np.all(in_phase_space(f1, m))
