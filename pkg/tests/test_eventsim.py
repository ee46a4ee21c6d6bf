import io
import math

import numpy as np
import pytest

from fallingballs.core import (
    InvalidStateError,
    SectionPoint,
    fixed_point,
    map_t,
    region_index,
    return_map,
    roof,
    roof_tau,
    sample_phase_space,
)
from fallingballs.eventsim import (
    COLLISION,
    FLOOR,
    FlowState,
    energy,
    flow_evolve,
    lift_to_flow,
    next_event,
    poincare_return,
    simulate,
    write_trajectory_csv,
)


def test_lift_f0():
    s = lift_to_flow(fixed_point(0, 0.75)[0], 0.75)
    assert s.x1 == 0 and s.t == 0
    assert s.v1 == pytest.approx(0.9428090, abs=1e-7)
    assert s.v2 == pytest.approx(0.0, abs=1e-15)
    assert s.x2 == pytest.approx(2 / 3, abs=1e-12)


def test_lift_conserves_energy_and_rejects_bad_points():
    m = 0.7
    pts = sample_phase_space(m, 500, np.random.default_rng(0))
    for h, z in zip(pts.h, pts.z):
        assert energy(lift_to_flow((h, z), m), m) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(InvalidStateError):
        lift_to_flow((0.45, 1.0), m)
    with pytest.raises(InvalidStateError):
        lift_to_flow((0.6, -1.0), m)


def test_single_ball_bounce():
    # upper ball far away and rising: the lower ball lands at t = 2 with speed 1
    s = FlowState(0.0, 1.0, 100.0, 20.0, 0.0)
    ev = next_event(s, 0.7)
    assert ev.kind == FLOOR
    assert ev.time == pytest.approx(2.0, abs=1e-15)
    assert ev.state.v1 == pytest.approx(1.0, abs=1e-15)


def test_equal_masses_swap_velocities():
    s = FlowState(0.0, 1.0, 0.1, -1.0, 0.0)
    ev = next_event(s, 0.5 + 1e-17)
    u1, u2 = 1.0 - ev.time, -1.0 - ev.time
    assert ev.kind == COLLISION
    assert ev.state.v1 == pytest.approx(u2, abs=1e-12)
    assert ev.state.v2 == pytest.approx(u1, abs=1e-12)


def test_collisions_conserve_energy():
    m = 0.63
    rng = np.random.default_rng(1)
    for _ in range(1000):
        x1 = rng.uniform(0, 1)
        s = FlowState(x1, rng.uniform(0, 2), x1 + rng.uniform(0, 0.2), rng.uniform(-2, 0), 0.0)
        ev = next_event(s, m)
        assert energy(ev.state, m) == pytest.approx(energy(s, m), abs=1e-12)


def test_long_run_energy_drift():
    m = 0.7
    log = simulate(SectionPoint(0.3, -1.0), m, 4000)
    assert len(log) > 10_000
    e = np.array([energy(ev.state, m) for ev in log])
    assert np.max(np.abs(np.diff(e))) < 1e-12 * 10
    assert np.max(np.abs(e - 0.5)) < 1e-8
    t = np.array([ev.time for ev in log])
    assert np.all(np.diff(t) >= 0)
    assert all(ev.state.x1 >= 0 and ev.state.x2 >= ev.state.x1 - 1e-12 for ev in log)


def test_fixed_point_returns():
    r = poincare_return(fixed_point(0, 0.75)[0], 0.75)
    assert r.time == pytest.approx(math.sqrt(2), abs=1e-12) and r.bumps == 0
    r = poincare_return(fixed_point(1, 0.75)[0], 0.75)
    assert r.time == pytest.approx(math.sqrt(6), abs=1e-12) and r.bumps == 1
    assert r.point.h == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("m", [0.52, 0.6, 0.7, 0.8, 0.9, 0.98])
def test_oracle_equivalence(m):
    pts = sample_phase_space(m, 2000, np.random.default_rng(2))
    n = region_index(pts, m)
    q = return_map(pts, m, n)
    tau = roof(pts, m, n)
    for i in range(len(n)):
        r = poincare_return(SectionPoint(pts.h[i], pts.z[i]), m)
        assert r.bumps == n[i]
        assert abs(r.point.h - q.h[i]) < 1e-9 and abs(r.point.z - q.z[i]) < 1e-9
        assert abs(r.time - tau[i]) < 1e-9


def test_flow_identity_and_roof():
    m = 0.7
    p = SectionPoint(0.3, -1.0)
    out = flow_evolve(p, 0.0, 0.0, m)
    assert out.point == p and out.offset == 0
    out = flow_evolve(p, 0.0, roof_tau(p, m), m)
    q = map_t(p, m)
    assert out.offset == pytest.approx(0, abs=1e-12)
    assert out.point.h == pytest.approx(q.h, abs=1e-12) and out.point.z == pytest.approx(q.z, abs=1e-12)


def test_flow_semigroup():
    m = 0.7
    rng = np.random.default_rng(3)
    pts = sample_phase_space(m, 30, rng)
    for h, z in zip(pts.h, pts.z):
        p = SectionPoint(h, z)
        t1, t2 = rng.uniform(0, 15, 2)
        a = flow_evolve(p, 0.0, t1 + t2, m)
        mid = flow_evolve(p, 0.0, t1, m)
        b = flow_evolve(mid.point, mid.offset, t2, m)
        assert abs(a.offset - b.offset) < 1e-9
        assert abs(a.point.h - b.point.h) < 1e-9 and abs(a.point.z - b.point.z) < 1e-9


def test_flow_rejects_bad_offset():
    with pytest.raises(ValueError):
        flow_evolve(SectionPoint(0.3, -1.0), 50.0, 1.0, 0.7)
    with pytest.raises(ValueError):
        flow_evolve(SectionPoint(0.3, -1.0), 0.0, -1.0, 0.7)


def test_trajectory_csv():
    log = simulate(SectionPoint(0.3, -1.0), 0.7, 3)
    buf = io.StringIO()
    write_trajectory_csv(log, 0.7, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x1,v1,x2,v2,kind,energy"
    assert len(lines) == len(log) + 1
