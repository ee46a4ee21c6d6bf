"""Symbolic coding of orbits and the geometry of the full-shift subsystems."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from . import constants as C
from .core import (
    AmbiguousRegion,
    InvalidStateError,
    SectionPoint,
    big_f,
    bump_coordinate,
    check_mass,
    corner_points,
    in_phase_space,
    section_z_bounds,
    involution,
    map_t,
    inverse_map,
    region_index,
    region_of,
)


@dataclass(frozen=True)
class Itinerary:
    """Symbol sequence; ``symbols[j]`` sits at position ``j - offset``.

    A periodic itinerary stands for the bi-infinite periodic extension of
    ``symbols``.  ``truncated`` marks a finite itinerary cut short by a
    singularity.
    """

    symbols: tuple
    offset: int = 0
    periodic: bool = False
    truncated: bool = False

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("empty itinerary")
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    def __len__(self):
        return len(self.symbols)

    def __getitem__(self, i):
        j = i + self.offset
        if self.periodic:
            return self.symbols[j % len(self.symbols)]
        if not 0 <= j < len(self.symbols):
            raise IndexError(f"position {i} outside itinerary")
        return self.symbols[j]

    @property
    def period(self):
        return len(self.symbols) if self.periodic else None

    @property
    def first(self):
        return -self.offset

    @property
    def stop(self):
        return len(self.symbols) - self.offset

    @property
    def alphabet(self):
        return frozenset(self.symbols)

    def word(self, start=0):
        """One period read from ``start`` (periodic itineraries only)."""
        return tuple(self[start + i] for i in range(len(self.symbols)))

    def shifted(self, k):
        """Itinerary of T^k: position i carries the old symbol at i + k."""
        return Itinerary(self.symbols, self.offset + k, self.periodic, self.truncated)

    @classmethod
    def constant(cls, symbol):
        return cls((symbol,), 0, True)


class SeparationRecord(NamedTuple):
    s_plus: int
    s_minus: int
    s: int
    saturated: bool = False


class SingularityPolyline(NamedTuple):
    n: int
    vertices: np.ndarray
    kind: str = "r"


class QuadCheck(NamedTuple):
    holds: bool
    margins: tuple


class ShapeReport(NamedTuple):
    shape: str
    arc_count: int
    figure_case: str
    consistent: bool
    near_threshold: bool


class MetricFit(NamedTuple):
    C: float
    theta: float
    r2: float
    pairs: int


# -- itineraries -------------------------------------------------------------

def itinerary_of(p, m, n_fwd, n_bwd=0):
    """Symbols region_of(T^i p) for -n_bwd <= i < n_fwd.

    Stops at the first ambiguous or invalid iterate and returns what was
    collected with ``truncated=True``.
    """
    fwd, truncated = [], False
    q = p
    try:
        for _ in range(n_fwd):
            n = region_of(q, m)
            fwd.append(n)
            q = map_t(q, m, n)
    except (AmbiguousRegion, InvalidStateError):
        truncated = True
    bwd = []
    q = p
    try:
        for _ in range(n_bwd):
            q = inverse_map(q, m)
            bwd.append(region_of(q, m))
    except (AmbiguousRegion, InvalidStateError):
        truncated = True
    symbols = bwd[::-1] + fwd
    if not symbols:
        raise AmbiguousRegion((None, None), 0.0)
    return Itinerary(tuple(symbols), len(bwd), False, truncated)


def separation(a, b):
    """Future, past and two-sided separation times of two itineraries."""
    if a.periodic and b.periodic:
        span = math.lcm(len(a), len(b))
        lo, hi = -span, span
    else:
        lo = max(a.first if not a.periodic else b.first, b.first if not b.periodic else a.first)
        hi = min(a.stop if not a.periodic else b.stop, b.stop if not b.periodic else a.stop)
    if lo > 0 or hi < 0:
        raise ValueError("itineraries do not overlap around position 0")
    s_plus = next((k for k in range(0, hi) if a[k] != b[k]), None)
    s_minus = next((k for k in range(1, -lo + 1) if a[-k] != b[-k]), None)
    saturated = s_plus is None or s_minus is None
    if s_plus is None:
        s_plus = hi
    if s_minus is None:
        s_minus = -lo
    return SeparationRecord(s_plus, s_minus, min(s_plus, s_minus), saturated)


# -- singularity curves ------------------------------------------------------

def _bisect(pred, a, b, tol):
    # pred(a) != pred(b); returns the switching point
    fa = pred(a)
    while abs(b - a) > tol:
        c = 0.5 * (a + b)
        if pred(c) == fa:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def _beyond(h, z, n, m):
    # bump count exceeds n; F -> 0 sends the count to infinity
    try:
        return bump_coordinate(SectionPoint(h, z), m) >= n + 1
    except InvalidStateError:
        return big_f(SectionPoint(h, z), m, check=False) <= 0


def _vertical_crossing(n, h, m, tol):
    """z where r_n meets the vertical line at h, or None.

    Along a vertical slice the bump count decreases with z.
    """
    if not 0 < h < 0.5:
        return None
    lo, hi = section_z_bounds(h, m)
    if not lo < hi:
        return None
    pad = 1e-13 * max(1.0, abs(lo))
    a, b = lo + pad, hi - pad
    if not _beyond(h, a, n, m) or _beyond(h, b, n, m):
        return None
    return _bisect(lambda z: _beyond(h, z, n, m), a, b, tol)


def _h_range(n, m, tol, grid=2000):
    hs = np.linspace(0.0, 0.5, grid + 2)[1:-1]
    ok = np.array([_vertical_crossing(n, h, m, 1e-3) is not None for h in hs])
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return None

    def has(h):
        return _vertical_crossing(n, h, m, 1e-3) is not None

    i, j = idx[0], idx[-1]
    left = _bisect(has, hs[i - 1], hs[i], tol) if i > 0 else _bisect(has, 0.0, hs[0], tol)
    right = _bisect(has, hs[j], hs[j + 1], tol) if j + 1 < len(hs) else _bisect(has, hs[-1], 0.5, tol)
    return left, right


def _endpoint(n, h, inward, m, tol):
    # step inside the crossing range until the slice sees r_n, then take the crossing
    for k in range(4):
        z = _vertical_crossing(n, h + inward * 10.0**k, m, tol)
        if z is not None:
            return h + inward * 10.0**k, z
    raise ArithmeticError(f"lost r_{n} near h={h}")


def trace_singularity(n, m, samples=64, tol=None):
    """Polyline along r_n, found by bisection on the region classifier.

    Vertices come from bisection along vertical lines; the endpoints are the
    extreme vertical lines that still cross the curve, found by bisection in h.
    """
    check_mass(m)
    tol = C.TRACE_TOL if tol is None else tol
    span = _h_range(n, m, tol * 1e-2)
    if span is None:
        return SingularityPolyline(n, np.empty((0, 2)))
    h0, h1 = span
    verts = [_endpoint(n, h0, tol * 1e-2, m, tol)]
    for h in np.linspace(h0, h1, samples + 2)[1:-1]:
        z = _vertical_crossing(n, float(h), m, tol)
        if z is not None:
            verts.append((float(h), z))
    verts.append(_endpoint(n, h1, -tol * 1e-2, m, tol))
    return SingularityPolyline(n, np.array(verts))


def inverse_singularity(poly, m):
    """Image of a traced r_n under the involution: the curve I(r_n)."""
    v = poly.vertices
    img = involution(SectionPoint(v[:, 0], v[:, 1]), m)
    return SingularityPolyline(poly.n, np.column_stack([img.h, img.z]), "I(r)")


# -- full-shift parameter intervals ------------------------------------------

def full_shift_interval(k):
    """Exact mass interval on which {k-1, k}^Z is realised."""
    if k < 1:
        raise ValueError("k >= 1 required")
    return Fraction(1 + k, 2 + k), Fraction(2 * k * k + 2 * k - 1, 2 * k * k + 2 * k)


def full_shift_alphabet_interval(symbols):
    """Interval for an alphabet {k-1, k} (or a single symbol within one)."""
    s = sorted(set(symbols))
    if len(s) > 2 or (len(s) == 2 and s[1] - s[0] != 1):
        raise ValueError(f"alphabet {s} is not of the form {{k-1, k}}")
    k = max(s[-1], 1)
    return full_shift_interval(k)


def inverse_x1_z(m):
    """Second coordinate of T^{-1}(X_1(m))."""
    return 8.0 * (m - 1.0) / math.sqrt(9.0 - 8.0 * m)


def verify_quadrangular(k, m):
    """Corner-point inequalities behind the {k-1, k} full shift.

    Margins are signed so that non-negative means the inequality holds:
    Ibxh_k - Bxh_k (left end of the interval) and, for k >= 2,
    Ixz_k - Bxz_{k-2}; for k = 1 the second margin compares Ixz_1 with
    the z-coordinate of T^{-1}(X_1).
    """
    if k < 1:
        raise ValueError("k >= 1 required")
    m = float(m)
    ck = corner_points(k, m)
    first = ck.Ibx.h - ck.Bx.h
    if k == 1:
        second = ck.Ix.z - inverse_x1_z(m)
    else:
        second = ck.Ix.z - corner_points(k - 2, m).Bx.z
    margins = (first, second)
    return QuadCheck(all(x >= 0 for x in margins), margins)


# -- shape of R_i n T(R_j) ---------------------------------------------------

_THRESHOLDS = (7 / 12, 2 / 3)


def figure_case(m):
    """Which of the three pictured configurations m falls in."""
    if m <= _THRESHOLDS[0]:
        return "triangular"
    return "pentagonal" if m < _THRESHOLDS[1] else "quadrangular"


def _cell_mask(i, j, m, h, z):
    p = SectionPoint(h, z)
    ok = in_phase_space(p, m)
    out = np.zeros(h.shape, dtype=bool)
    q = SectionPoint(h[ok], z[ok])
    n = region_index(q, m)
    inv = involution(q, m)
    inside = in_phase_space(inv, m)
    nb = np.full(n.shape, -1)
    nb[inside] = region_index(SectionPoint(inv.h[inside], inv.z[inside]), m)
    out[ok] = (n == i) & (nb == j)
    return out


def _boundary_functions(i, j, m):
    def g2(h, z):
        return 0.5 - h - 0.5 * (1 - m) * (z + np.sqrt(2 * h / m)) ** 2

    def g3(h, z):
        return -(m * (1 - m) * z * (2 * np.sqrt(2 * h / m) - z) - 2 * h + m)

    def psi(h, z):
        with np.errstate(invalid="ignore"):
            return bump_coordinate(SectionPoint(h, z), m)

    def psi_inv(h, z):
        q = involution(SectionPoint(h, z), m)
        with np.errstate(invalid="ignore"):
            return bump_coordinate(q, m)

    funcs = {"g2": g2, "g3": g3, "h": lambda h, z: h}
    funcs[f"r{i}"] = lambda h, z: psi(h, z) - (i + 1)
    funcs[f"Ir{j}"] = lambda h, z: psi_inv(h, z) - (j + 1)
    if i > 0:
        funcs[f"r{i - 1}"] = lambda h, z: psi(h, z) - i
    if j > 0:
        funcs[f"Ir{j - 1}"] = lambda h, z: psi_inv(h, z) - j
    return funcs


def boundary_arcs(i, j, m, resolution=500, min_run=0.02):
    """Number of smooth boundary arcs of R_i n T(R_j), by contour tracing.

    Returns the cyclic sequence of (curve name, contour fraction) runs.
    Each boundary sample is labelled by the defining curve closest to it
    (value over gradient norm); cyclic runs shorter than ``min_run`` of the
    contour are treated as corner noise.
    """
    from skimage import measure

    zlo = -(math.sqrt(1 / m) + math.sqrt(1 / (1 - m)))
    h = np.linspace(1e-6, 0.5 - 1e-6, 400)
    z = np.linspace(zlo, -1e-6, 400)
    H, Z = np.meshgrid(h, z, indexing="ij")
    mask = _cell_mask(i, j, m, H, Z)
    if not mask.any():
        return []
    hi, zi = np.nonzero(mask)
    dh, dz = h[1] - h[0], z[1] - z[0]
    h0, h1 = max(h[hi.min()] - 3 * dh, 1e-9), min(h[hi.max()] + 3 * dh, 0.5 - 1e-9)
    z0, z1 = z[zi.min()] - 3 * dz, min(z[zi.max()] + 3 * dz, -1e-9)
    h = np.linspace(h0, h1, resolution)
    z = np.linspace(z0, z1, resolution)
    H, Z = np.meshgrid(h, z, indexing="ij")
    mask = _cell_mask(i, j, m, H, Z).astype(float)
    padded = np.pad(mask, 1)
    contours = measure.find_contours(padded, 0.5)
    contour = max(contours, key=len)[:-1] - 1
    ch = np.interp(contour[:, 0], np.arange(resolution), h)
    cz = np.interp(contour[:, 1], np.arange(resolution), z)

    funcs = _boundary_functions(i, j, m)
    eps_h, eps_z = 1e-7, 1e-7
    dist = []
    with np.errstate(invalid="ignore", divide="ignore"):
        for f in funcs.values():
            try:
                v = f(ch, cz)
                gh = (f(ch + eps_h, cz) - f(ch - eps_h, cz)) / (2 * eps_h)
                gz = (f(ch, cz + eps_z) - f(ch, cz - eps_z)) / (2 * eps_z)
                d = np.abs(v) / np.hypot(gh, gz)
            except InvalidStateError:
                d = np.full(ch.shape, np.inf)
            dist.append(np.where(np.isfinite(d), d, np.inf))
    labels = np.argmin(np.vstack(dist), axis=0)

    # cyclic run-length encoding, dropping short runs until stable
    start = np.nonzero(labels != np.roll(labels, 1))[0]
    names = list(funcs)
    if start.size == 0:
        return [(names[labels[0]], 1.0)]
    labels = np.roll(labels, -start[0])
    runs = []
    for lab in labels:
        if runs and runs[-1][0] == lab:
            runs[-1][1] += 1
        else:
            runs.append([lab, 1])
    total = len(labels)
    changed = True
    while changed and len(runs) > 1:
        changed = False
        k = min(range(len(runs)), key=lambda r: runs[r][1])
        if runs[k][1] < min_run * total:
            runs[k - 1][1] += runs[k][1]
            del runs[k]
            changed = True
        merged = []
        for lab, cnt in runs:
            if merged and merged[-1][0] == lab:
                merged[-1][1] += cnt
            else:
                merged.append([lab, cnt])
        if len(merged) > 1 and merged[0][0] == merged[-1][0]:
            merged[0][1] += merged.pop()[1]
        runs = merged
    return [(names[lab], cnt / total) for lab, cnt in runs]


def count_boundary_arcs(i, j, m, resolution=500, min_run=0.02):
    """Number of smooth boundary arcs of R_i n T(R_j)."""
    return len(boundary_arcs(i, j, m, resolution, min_run))


_SHAPES = {3: "triangular", 4: "quadrangular", 5: "pentagonal"}


def classify_intersection_shape(i, j, m, resolution=1500):
    """Shape of R_i n T(R_j) by counting its smooth boundary arcs.

    ``figure_case`` is the configuration predicted by the mass thresholds
    7/12 and 2/3; ``consistent`` is False when the counted shape cannot
    occur in that configuration (R_0 n T(R_0) is always quadrangular, and
    in the last configuration all four sets are).
    """
    if i not in (0, 1) or j not in (0, 1):
        raise ValueError("only i, j in {0, 1} are classified")
    check_mass(m)
    count = count_boundary_arcs(i, j, m, resolution, 0.005)
    shape = _SHAPES.get(count, f"{count}-gon")
    case = figure_case(m)
    if (i, j) == (0, 0) or case == "quadrangular":
        consistent = shape == "quadrangular"
    else:
        consistent = shape in ("quadrangular", case) or (case == "triangular" and shape == "pentagonal")
    near = any(abs(m - t) < 1e-9 for t in _THRESHOLDS)
    return ShapeReport(shape, count, case, consistent, near)


def intersection_shapes(m, resolution=1500):
    """Shapes of the four sets R_i n T(R_j), keyed by (i, j)."""
    return {(i, j): classify_intersection_shape(i, j, m, resolution) for i in (0, 1) for j in (0, 1)}


# -- symbolic metric ---------------------------------------------------------

def separated_pair(s, rng, bias=0.5, extra=(2, 6)):
    """Two periodic {0,1} itineraries with separation time exactly s.

    They agree on positions -s..s-1 and differ at s and -s-1; symbols are
    1 with probability ``bias``.
    """
    length = 2 * s + 2 + int(rng.integers(*extra))
    w = (rng.random(length) < bias).astype(int)
    v = w.copy()
    v[0] ^= 1           # position -s-1
    v[2 * s + 1] ^= 1   # position s
    return Itinerary(tuple(w), s + 1, True), Itinerary(tuple(v), s + 1, True)


def envelope_fit(s, y):
    """Least squares of log(max y at each s) on s; returns (C, theta, r2).

    C is the smallest constant with y <= C theta^s on every sample.
    """
    s, y = np.asarray(s, float), np.asarray(y, float)
    levels = np.unique(s)
    if len(levels) < 3:
        raise ArithmeticError("need at least three distinct separation times")
    env = np.log([y[s == k].max() for k in levels])
    slope, icpt = np.polyfit(levels, env, 1)
    resid = env - (slope * levels + icpt)
    r2 = 1.0 - resid.var() / env.var() if env.var() > 0 else 0.0
    theta = math.exp(slope)
    return float(np.max(y / theta**s)), theta, float(r2)


def estimate_symbolic_metric(m, pairs=120, rng=None, s_min=3, s_max=10):
    """Fit d(pi x, pi y) <= C theta^s over {0,1} pairs with known separation time s.

    Points are periodic orbits built by :func:`separated_pair`; the symbol
    bias is varied so that long blocks of either symbol (the least
    expanding stretches) are represented.  theta comes from the envelope
    of log-distance over s >= s_min.
    """
    from .orbits import find_orbit

    lo, hi = full_shift_interval(1)
    if not lo <= m <= hi:
        raise ValueError("symbolic metric needs m in the {0,1} full-shift interval")
    rng = np.random.default_rng(rng)
    biases = (0.05, 0.25, 0.5, 0.75, 0.95)
    ss, ds = [], []
    for k in range(pairs):
        s = s_min + k % (s_max - s_min + 1)
        a, b = separated_pair(s, rng, biases[(k // (s_max - s_min + 1)) % len(biases)])
        pa, pb = find_orbit(a, m).points[0], find_orbit(b, m).points[0]
        ss.append(separation(a, b).s)
        ds.append(float(np.hypot(*(pa - pb))))
    C, theta, r2 = envelope_fit(ss, ds)
    if not theta < 1:
        raise ArithmeticError("distances do not decay with separation time")
    return MetricFit(C, theta, r2, len(ss))
