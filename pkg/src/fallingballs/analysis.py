"""Period ratios, their m-derivatives and dynamical diagnostics.

The ratio of interest is tau_k(P_n) / (k tau(F_0)) with k = n^2 + 2n, which
tends to tau(F_1)/tau(F_0) as n grows.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import constants as C
from .core import (
    SectionPoint,
    alpha,
    big_f,
    bump_coordinate,
    check_mass,
    fixed_point,
    fixed_point_period,
    in_core_domain,
    jacobian,
    return_map,
    roof,
    sample_phase_space,
)
from .orbits import (
    OrbitNotFound,
    find_orbit,
    find_pn,
    flow_period,
    multipliers,
    orbit_dm,
)
from .symbolic import Itinerary, envelope_fit, separated_pair


# -- closed-form limits ------------------------------------------------------

def ratio_limit(m):
    """tau(F_1)/tau(F_0) = sqrt(3m - 2m^2) / sqrt(3m - 2m^2 - 3/4)."""
    check_mass(m)
    a = 3.0 * m - 2.0 * m * m
    return math.sqrt(a) / math.sqrt(a - 0.75)


def ratio_limit_general(k, m):
    """Period ratio of F_k and F_{k-1}: (k+1) sqrt(1 - k^2 a) / (k sqrt(1 - (k+1)^2 a))."""
    if k < 1:
        raise ValueError("k >= 1 required")
    a = alpha(m)
    return (k + 1) * math.sqrt(1.0 - k * k * a) / (k * math.sqrt(1.0 - (k + 1) ** 2 * a))


def dratio_limit_dm(m):
    """d/dm of ratio_limit, closed form."""
    check_mass(m)
    a = 3.0 * m - 2.0 * m * m
    b = a - 0.75
    return -3.0 * (3.0 - 4.0 * m) * ratio_limit(m) / (8.0 * a * b)


def f0_period_dm(m):
    """d/dm of tau(F_0) = 2m / sqrt(3m - 2m^2)."""
    a = 3.0 * m - 2.0 * m * m
    return 2.0 / math.sqrt(a) - m * (3.0 - 4.0 * m) / a**1.5


# -- P_n ratios ---------------------------------------------------------------

@dataclass
class RatioRecord:
    m: float
    n: int
    ratio_n: float
    ratio_limit: float
    dratio_n_dm: float = math.nan
    dratio_limit_dm: float = math.nan
    dratio_n_dm_fd: float = math.nan
    failure: str | None = None

    @property
    def error(self):
        return abs(self.ratio_n - self.ratio_limit)

    @property
    def derror(self):
        return abs(self.dratio_n_dm - self.dratio_limit_dm)

    @property
    def fd_rel_diff(self):
        return abs(self.dratio_n_dm - self.dratio_n_dm_fd) / abs(self.dratio_n_dm_fd)


def pn_ratio(orbit):
    k = orbit.period
    return flow_period(orbit) / (k * fixed_point_period(0, orbit.m))


def pn_ratio_dm(orbit):
    """d/dm of the P_n ratio from the implicit orbit derivative."""
    k, m = orbit.period, orbit.m
    tau_k = flow_period(orbit)
    tau0 = fixed_point_period(0, m)
    dtau_k = orbit_dm(orbit).dtau_dm
    return (dtau_k * tau0 - tau_k * f0_period_dm(m)) / (k * tau0 * tau0)


def pn_ratio_dm_fd(orbit, delta=None):
    m = orbit.m
    delta = C.FD_STEP_MASS if delta is None else delta
    hi = find_orbit(orbit.itinerary, m + delta, seed=orbit.points)
    lo = find_orbit(orbit.itinerary, m - delta, seed=orbit.points)
    return (pn_ratio(hi) - pn_ratio(lo)) / (2.0 * delta)


def _records(m, n_max, derivatives):
    n_max = C.PN_MAX if n_max is None else n_max
    out = []
    for n in range(1, n_max + 1):
        try:
            orbit = find_pn(n, m)
        except OrbitNotFound as exc:
            out.append(RatioRecord(m, n, math.nan, ratio_limit(m), failure=str(exc)))
            continue
        rec = RatioRecord(m, n, pn_ratio(orbit), ratio_limit(m))
        if derivatives:
            rec.dratio_limit_dm = dratio_limit_dm(m)
            try:
                rec.dratio_n_dm = pn_ratio_dm(orbit)
                rec.dratio_n_dm_fd = pn_ratio_dm_fd(orbit)
            except (OrbitNotFound, ArithmeticError) as exc:
                rec.failure = str(exc)
        out.append(rec)
    return out


def c0_convergence(m, n_max=None):
    """Ratio records for P_1 .. P_{n_max}; failed solves carry ``failure``."""
    return _records(m, n_max, False)


def c1_convergence(m, n_max=None):
    """As c0_convergence, with the m-derivative computed implicitly and by finite differences."""
    return _records(m, n_max, True)


@dataclass
class ConvergenceSummary:
    n: list
    errors: list
    decreasing_from_3: bool
    slope: float
    envelope_A: float
    notes: list = field(default_factory=list)


def summarize(records, key="error", floor=1e-12):
    """Monotonicity for n >= 3 and the log-log slope of the error sequence."""
    good = [r for r in records if r.failure is None]
    n = [r.n for r in good]
    err = [getattr(r, key) for r in good]
    tail = [e for k, e in zip(n, err) if k >= 3]
    # errors at rounding level count as converged
    decreasing = all(b < a or max(a, b) < floor for a, b in zip(tail, tail[1:]))
    use = [(k, e) for k, e in zip(n, err) if k >= 3 and e > 0]
    slope = math.nan
    if len(use) >= 2:
        slope = float(np.polyfit(np.log([k for k, _ in use]), np.log([e for _, e in use]), 1)[0])
    A = max((k * e for k, e in zip(n, err)), default=math.nan)
    notes = ["convergence tested at finitely many m; uniformity in m is not certified"]
    if len(good) < len(records):
        notes.append(f"{len(records) - len(good)} orbit solves failed")
    return ConvergenceSummary(n, err, decreasing, slope, A, notes)


def pn_distances_to_f1(orbit):
    """Distances |T^i P_n - F_1| for i in the block of ones."""
    n = int(round(math.sqrt(orbit.period + 1))) - 1
    f1 = np.array(fixed_point(1, orbit.m)[0])
    idx = np.arange(n, n * n + n)
    return idx, np.hypot(*(orbit.points[idx] - f1).T)


# -- continued fractions -----------------------------------------------------

@dataclass
class ContinuedFraction:
    value: float
    quotients: list
    truncated: bool = False
    reliable_depth: int = 0

    @property
    def max_quotient(self):
        return max(self.quotients[1:], default=0)

    def convergents(self):
        p0, q0, p1, q1 = 1, 0, self.quotients[0], 1
        out = [(p1, q1)]
        for a in self.quotients[1:]:
            p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
            out.append((p1, q1))
        return out


def _cf_exact(x, depth):
    q = []
    for _ in range(depth + 1):
        a = math.floor(x)
        q.append(int(a))
        x = x - a
        if x == 0:
            return q, True
        x = 1 / x
    return q, False


def continued_fraction(x, depth=20):
    """Partial quotients of the binary64 value x, up to ``depth``.

    The expansion is exact for the stored double; ``reliable_depth`` is
    the number of quotients shared with the expansions of x(1 -+ 2^-52),
    i.e. the ones not decided by the last bit.  ``truncated`` is set when
    the expansion terminates because x is a short rational.
    """
    if not x > 0:
        raise ValueError("x > 0 required")
    if depth > 40:
        raise ValueError("depth <= 40 (binary64 limit)")
    fx = Fraction(x)
    q, finished = _cf_exact(fx, depth)
    eps = Fraction(2) ** -52 * fx
    lo, _ = _cf_exact(fx - eps, depth)
    hi, _ = _cf_exact(fx + eps, depth)
    reliable = 0
    for a, b, c in zip(q, lo, hi):
        if a == b == c:
            reliable += 1
        else:
            break
    return ContinuedFraction(x, q, finished and len(q) <= depth, reliable)


# -- Lyapunov exponents ------------------------------------------------------

def _lyap_loop(h, z, m, iterations, vh, vz):
    """Iterate T with its tangent map; returns (sum of log growth, steps, start of failure)."""
    a = alpha(m)
    s2 = math.sqrt(2.0)
    wf = 1.0 / (1.0 - m)
    total = 0.0
    for i in range(iterations):
        f = 1.0 - h / m + a * z * z
        up = (1.0 - 2.0 * m * f) * wf
        if f <= 0 or up <= 0:
            return total, i, h, z, vh, vz
        w = math.sqrt(2.0 * f)
        psi = (math.sqrt(up) - w - z) / (2.0 * w)
        n = math.floor(psi)
        if abs(psi - round(psi)) * 2.0 * w < 1e-11:
            return total, i, h, z, vh, vz
        sf = math.sqrt(f)
        j10 = s2 * (n + 1) / (m * sf)
        j11 = -1.0 - (2 * n + 2) * s2 * a * z / sf
        nh = -vh + 2.0 * m * a * z * vz
        nz = j10 * vh + j11 * vz
        g = math.hypot(nh, nz)
        total += math.log(g)
        vh, vz = nh / g, nz / g
        h, z = m * f, -(2 * n + 2) * w - z
    return total, iterations, h, z, vh, vz


@dataclass
class LyapunovResult:
    exponent: float
    iterations: int
    restarts: int

    @property
    def spectrum(self):
        return self.exponent, -self.exponent


def lyapunov_exponent(m, iterations=10**6, seed=0, burn_in=1000, orbit=None):
    """Top Lyapunov exponent of T with per-step renormalisation of a tangent vector.

    With ``orbit`` (a PeriodicOrbit) the tangent map is iterated along that
    cycle instead of a generic orbit.  Generic orbits that come within the
    singularity band are restarted from a fresh sample.
    """
    check_mass(m)
    if orbit is not None:
        A = jacobian(SectionPoint(orbit.points[:, 0], orbit.points[:, 1]), m, np.array(orbit.symbols))
        v = np.array([1.0, -1.0]) / math.sqrt(2.0)
        total, k = 0.0, len(A)
        for i in range(burn_in + iterations):
            v = A[i % k] @ v
            g = math.hypot(*v)
            v /= g
            if i >= burn_in:
                total += math.log(g)
        return LyapunovResult(total / iterations, iterations, 0)
    rng = np.random.default_rng(seed)
    done, total, restarts = 0, 0.0, 0
    while done < iterations:
        p = sample_phase_space(m, 1, rng)
        h, z = float(p.h[0]), float(p.z[0])
        s, k, h, z, vh, vz = _lyap_loop(h, z, m, burn_in, 1.0, -1.0)
        if k < burn_in:
            restarts += 1
            continue
        s, k, *_ = _lyap_loop(h, z, m, iterations - done, vh, vz)
        total += s
        done += k
        if done < iterations:
            restarts += 1
    return LyapunovResult(total / done, done, restarts)


# -- appendix checks ---------------------------------------------------------

@dataclass
class AngleCheck:
    max_derivative: float
    lambda_est: float
    max_angle_ratio: float
    samples: int


def _cone_vectors(rng, size):
    # unit vectors strictly inside the decreasing-direction cone
    th = rng.uniform(-0.5 * math.pi, 0.0, size)
    return np.column_stack([np.cos(th), np.sin(th)])


def angle_contraction_check(m, samples=10**5, seed=0, core=True):
    """Angle contraction of unstable-cone vector pairs under DT.

    For det DT = 1 the angle derivative is 1/|DT v|^2, so the ratio of
    angles is bounded by 1/Lambda with Lambda = min |DT v|^2.
    """
    rng = np.random.default_rng(seed)
    pts = sample_phase_space(m, samples, rng)
    if core:
        keep = in_core_domain(pts, m)
        while keep.sum() < samples:
            more = sample_phase_space(m, samples, rng)
            pts = SectionPoint(np.concatenate([pts.h[keep], more.h]), np.concatenate([pts.z[keep], more.z]))
            keep = in_core_domain(pts, m)
        pts = SectionPoint(pts.h[keep][:samples], pts.z[keep][:samples])
    n = np.floor(bump_coordinate(pts, m)).astype(int)
    A = jacobian(pts, m, n)
    v1, v2 = _cone_vectors(rng, samples), _cone_vectors(rng, samples)
    w1 = np.einsum("kij,kj->ki", A, v1)
    w2 = np.einsum("kij,kj->ki", A, v2)
    # edge vectors of the cone bound |DT v| from below on each sample
    edges = [np.array([1.0, 0.0]), np.array([0.0, -1.0])]
    norms = [np.einsum("kij,j->ki", A, e) for e in edges] + [w1, w2]
    lam = float(min(np.min(np.sum(w * w, axis=1)) for w in norms))

    def ang(a, b):
        return np.abs(np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], np.sum(a * b, axis=1)))

    before = ang(v1, v2)
    ok = before > 1e-12
    ratio = float(np.max(ang(w1, w2)[ok] / before[ok]))
    deriv = float(np.max(1.0 / np.sum(w1 * w1, axis=1)))
    return AngleCheck(deriv, lam, ratio, samples)


def pushed_direction(orbit, index, steps=60, stable=False):
    """Unit direction at points[index] from pushing a cone vector along the periodic past.

    The stable direction uses the future and inverse Jacobians.
    """
    k = orbit.period
    sym = np.array(orbit.symbols)
    A = jacobian(SectionPoint(orbit.points[:, 0], orbit.points[:, 1]), orbit.m, sym)
    if not stable:
        v = np.array([1.0, -1.0])
        for j in range(index - steps, index):
            v = A[j % k] @ v
            v /= math.hypot(*v)
    else:
        v = np.array([1.0, 1.0])
        for j in range(index + steps - 1, index - 1, -1):
            v = np.linalg.solve(A[j % k], v)
            v /= math.hypot(*v)
    return v if v[0] > 0 else -v


@dataclass
class HolderFit:
    C_u: float
    gamma_u: float
    r2_u: float
    C_s: float
    gamma_s: float
    r2_s: float
    depths: list
    distances_u: list
    distances_s: list


def holder_direction_check(m, depth_max=12, pairs=8, seed=0, steps=60):
    """Fit |u(x) - u(y)| <= C gamma^d over pairs with separation time d (3 <= d <= depth_max).

    Pairs are periodic {0,1} orbits; u is pushed ``steps`` steps along the
    periodic past, the stable direction s along the periodic future.
    """
    rng = np.random.default_rng(seed)
    ds, du, dsd = [], [], []
    for d in range(3, depth_max + 1):
        for _ in range(pairs):
            a, b = separated_pair(d, rng)
            oa, ob = find_orbit(a, m), find_orbit(b, m)
            ua, ub = pushed_direction(oa, 0, steps), pushed_direction(ob, 0, steps)
            sa, sb = pushed_direction(oa, 0, steps, True), pushed_direction(ob, 0, steps, True)
            ds.append(d)
            du.append(max(float(np.hypot(*(ua - ub))), 1e-300))
            dsd.append(max(float(np.hypot(*(sa - sb))), 1e-300))
    cu, gu, ru = envelope_fit(ds, du)
    cs, gs, rs = envelope_fit(ds, dsd)
    return HolderFit(cu, gu, ru, cs, gs, rs, ds, du, dsd)


def pn_direction_decay(n, m):
    """Distance of P_n's invariant directions from F_1's, against the depth of agreement with 1-bar.

    The depth at T^i P_n (n <= i < n^2 + n) is min(i - n + 1, n^2 + n - i).
    """
    orbit = find_pn(n, m)
    mult = multipliers(orbit)
    f1 = find_orbit(Itinerary.constant(1), m)
    m1 = multipliers(f1)
    idx = np.arange(n, n * n + n)
    depth = np.minimum(idx - n + 1, n * n + n - idx)
    du = np.hypot(*(mult.unstable[idx] - m1.unstable[0]).T)
    dsd = np.hypot(*(mult.stable[idx] - m1.stable[0]).T)
    return depth, du, dsd


# -- correlations ------------------------------------------------------------

def _phase(h, z, t, tau):
    return np.sin(np.pi * t / tau)


OBSERVABLES = {
    "const": lambda h, z, t, tau: np.ones_like(h),
    "phase": _phase,
    "phase_h": lambda h, z, t, tau: _phase(h, z, t, tau) * h,
    "phase_z": lambda h, z, t, tau: _phase(h, z, t, tau) * z,
}
DEFAULT_OBSERVABLES = ("phase_h", "phase_z")


def tau_max(m):
    return 2.0 / math.sqrt(m) + 2.0 / math.sqrt(1.0 - m)


def sample_suspension(m, size, rng):
    """Uniform sample of {(x, t): 0 <= t < tau(x)} by rejection under tau_max."""
    top = tau_max(m)
    hs, zs, ts = [], [], []
    count = 0
    while count < size:
        batch = 2 * (size - count) + 64
        p = sample_phase_space(m, batch, rng)
        t = rng.uniform(0.0, top, batch)
        n = np.floor(bump_coordinate(p, m)).astype(int)
        ok = t < roof(p, m, n)
        hs.append(p.h[ok])
        zs.append(p.z[ok])
        ts.append(t[ok])
        count += int(ok.sum())
    return np.concatenate(hs)[:size], np.concatenate(zs)[:size], np.concatenate(ts)[:size]


def _advance(h, z, t, dt, m, alive):
    """Suspension flow by dt via the closed-form map; kills points leaving the section."""
    t = t + dt
    while True:
        p = SectionPoint(h, z)
        f = big_f(p, m, check=False)
        good = alive & (f > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.floor(bump_coordinate(SectionPoint(np.where(good, h, 0.25), np.where(good, z, -1.0)), m)).astype(int)
            tau = roof(SectionPoint(np.where(good, h, 0.25), np.where(good, z, -1.0)), m, n)
        alive = good
        jump = alive & (t >= tau)
        if not jump.any():
            return h, z, t, np.where(alive, tau, 1.0), alive
        img = return_map(SectionPoint(h[jump], z[jump]), m, n[jump])
        h, z = h.copy(), z.copy()
        h[jump], z[jump] = img
        t = np.where(jump, t - tau, t)


def _chunk_curve(m, size, ss, grid, pair):
    rng = np.random.default_rng(ss)
    h, z, t = sample_suspension(m, size, rng)
    vf, wf = OBSERVABLES[pair[0]], OBSERVABLES[pair[1]]
    alive = np.ones(size, dtype=bool)
    n = np.floor(bump_coordinate(SectionPoint(h, z), m)).astype(int)
    tau = roof(SectionPoint(h, z), m, n)
    v0 = vf(h, z, t, tau)
    out = []
    prev = 0.0
    for s in grid:
        h, z, t, tau, alive = _advance(h, z, t, s - prev, m, alive)
        prev = s
        w = wf(h, z, t, tau)
        out.append((np.sum(v0 * w * alive), np.sum(v0 * alive), np.sum(w * alive),
                    np.sum((v0 * w) ** 2 * alive), int(alive.sum())))
    return np.array(out)


@dataclass
class CorrelationCurve:
    t: np.ndarray
    corr: np.ndarray
    stderr: np.ndarray
    head: float
    tail: float
    decays: bool | None
    samples: int
    seed: int
    observables: tuple


def _workers():
    try:
        return max(1, int(os.environ.get("FBL_THREADS", "1")))
    except ValueError:
        return 1


def correlation_diagnostic(m, t_max=40.0, observables=DEFAULT_OBSERVABLES, samples=10**6,
                           seed=0, points=121, chunks=8):
    """Monte Carlo estimate of |E[v w o Phi^t] - E v E w| on a uniform t-grid.

    Samples come in ``chunks`` independent streams, so results do not
    depend on the worker count (FBL_THREADS).  ``decays`` compares the tail
    average over [t_max/2, t_max] with the head average over [0, t_max/10];
    it is None when the head is not resolved above the noise.
    """
    check_mass(m)
    grid = np.linspace(0.0, t_max, points)
    streams = np.random.SeedSequence(seed).spawn(chunks)
    sizes = [samples // chunks + (1 if i < samples % chunks else 0) for i in range(chunks)]
    with ThreadPoolExecutor(_workers()) as ex:
        parts = list(ex.map(lambda a: _chunk_curve(m, a[0], a[1], grid, tuple(observables)),
                            zip(sizes, streams)))
    acc = np.sum(parts, axis=0)
    cnt = acc[:, 4]
    evw = acc[:, 0] / cnt
    corr = np.abs(evw - (acc[:, 1] / cnt) * (acc[:, 2] / cnt))
    stderr = np.sqrt(np.maximum(acc[:, 3] / cnt - evw**2, 0.0) / cnt)
    head = float(np.mean(corr[grid <= t_max / 10]))
    tail = float(np.mean(corr[grid >= t_max / 2]))
    noise = float(np.mean(stderr))
    decays = None if head <= 3.0 * noise else tail < head
    return CorrelationCurve(grid, corr, stderr, head, tail, decays, samples, seed, tuple(observables))
