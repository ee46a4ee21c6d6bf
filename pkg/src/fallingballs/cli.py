"""Command-line front end: ``fallingballs <command> [options]``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 assertion failure.
"""
from __future__ import annotations

import argparse
import contextlib
import sys

import numpy as np

from . import analysis, constants, core, eventsim, orbits, symbolic
from .report import write_csv, write_json

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_ASSERT = 0, 2, 3, 4

# config keys that override numerical defaults
TOLERANCES = {
    "eps_boundary": "EPS_BOUNDARY",
    "newton_tol": "NEWTON_TOL",
    "newton_step_tol": "NEWTON_STEP_TOL",
    "newton_max_iter": "NEWTON_MAX_ITER",
    "orbit_residual_ok": "ORBIT_RESIDUAL_OK",
    "fd_step_mass": "FD_STEP_MASS",
    "trace_tol": "TRACE_TOL",
}


class InputError(ValueError):
    pass


class AssertionFailure(RuntimeError):
    def __init__(self, msg, emit=None):
        super().__init__(msg)
        self.emit = emit


# -- configuration -----------------------------------------------------------

def read_config(path):
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise InputError(f"{path}:{lineno}: expected key = value")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def parse_grid(text):
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError as exc:
        raise InputError(f"--m-grid expects lo:hi:steps, got {text!r}") from exc
    if steps < 1:
        raise InputError("--m-grid needs steps >= 1")
    return [lo] if steps == 1 else np.linspace(lo, hi, steps).tolist()


def parse_point(text):
    try:
        h, z = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"point expects h,z, got {text!r}") from exc
    return core.SectionPoint(h, z)


def parse_itinerary(text):
    """'pn:<n>' or a comma-separated periodic word such as '0,0,1'."""
    text = text.strip()
    if text.startswith("pn:"):
        return orbits.pn_itinerary(int(text[3:]))
    try:
        word = tuple(int(s) for s in text.replace(" ", "").split(",") if s != "")
    except ValueError as exc:
        raise InputError(f"bad itinerary {text!r}") from exc
    if not word or min(word) < 0:
        raise InputError(f"bad itinerary {text!r}")
    return symbolic.Itinerary(word, 0, True)


_INT = {"n_max", "samples", "seed", "depth", "returns", "iterations", "k_max", "pairs", "points", "burn_in"}
_FLOAT = {"m", "t_max"}


def build_config(args, defaults):
    cfg = dict(defaults)
    if args.config:
        cfg.update(read_config(args.config))
    for key, val in vars(args).items():
        if key in ("command", "config", "func") or val is None:
            continue
        cfg[key] = val
    for key in list(cfg):
        if key in _INT:
            cfg[key] = int(cfg[key])
        elif key in _FLOAT or key in TOLERANCES:
            cfg[key] = float(cfg[key])
    for key, name in TOLERANCES.items():
        if key in cfg:
            if not cfg[key] > 0:
                raise InputError(f"{key} must be positive")
            value = int(cfg[key]) if name == "NEWTON_MAX_ITER" else cfg[key]
            setattr(constants, name, value)
    if "m_grid" in cfg and isinstance(cfg["m_grid"], str):
        cfg["masses"] = parse_grid(cfg["m_grid"])
    elif "m" in cfg:
        cfg["masses"] = [cfg["m"]]
    for m in cfg.get("masses", []):
        if not 0.5 < m < 1.0:
            raise InputError(f"mass {m} outside (1/2, 1)")
    return cfg


def _masses(cfg, default):
    return cfg.get("masses") or [default]


# -- commands ----------------------------------------------------------------

def cmd_simulate(cfg):
    m = _masses(cfg, 0.75)[0]
    if "point" in cfg:
        p = parse_point(cfg["point"])
    else:
        p, _ = core.fixed_point(int(cfg.get("fixed_point", 0)), m)
    if not core.in_phase_space(p, m):
        raise InputError(f"initial point {tuple(p)} is not in the section for m={m}")
    events = eventsim.simulate(p, m, int(cfg.get("returns", 10)))
    rows = [(e.state.t, e.state.x1, e.state.v1, e.state.x2, e.state.v2, e.kind, eventsim.energy(e.state, m))
            for e in events]
    header = ["t", "x1", "v1", "x2", "v2", "kind", "energy"]
    return header, rows, {"events": [dict(zip(header, r)) for r in rows]}


def cmd_map(cfg):
    m = _masses(cfg, 0.7)[0]
    if "point" not in cfg:
        raise InputError("map needs --point h,z")
    p = parse_point(cfg["point"])
    if not core.in_phase_space(p, m):
        raise InputError(f"{tuple(p)} is not in the section for m={m}")
    n = core.region_of(p, m)
    img = core.map_t(p, m, n)
    J = core.jacobian_dt(p, m, n)
    th, tz, tm = core.tau_partials(p, m, n)
    ev = eventsim.poincare_return(p, m)
    res = {
        "h": p.h, "z": p.z, "m": m, "region": n,
        "image_h": img.h, "image_z": img.z, "tau": core.roof_tau(p, m, n),
        "dtau_dh": th, "dtau_dz": tz, "dtau_dm": tm,
        "jacobian": J.tolist(), "det": float(np.linalg.det(J)),
        "sim_h": ev.point.h, "sim_z": ev.point.z, "sim_time": ev.time, "sim_bumps": ev.bumps,
    }
    header = [k for k in res if k != "jacobian"]
    return header, [[res[k] for k in header]], res


def _check_alphabet(itin, m):
    alphabet = sorted(itin.alphabet)
    if len(alphabet) == 1:
        _, physical = core.fixed_point(alphabet[0], m)
        if not physical:
            raise InputError(f"F_{alphabet[0]} is not physical at m={m}")
        return
    try:
        lo, hi = symbolic.full_shift_alphabet_interval(alphabet)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if not lo <= m <= hi:
        raise InputError(f"m={m} outside the full-shift interval [{float(lo)}, {float(hi)}] of {alphabet}")


def cmd_orbit(cfg):
    itin = parse_itinerary(str(cfg.get("itinerary", "pn:2")))
    results = []
    for m in _masses(cfg, 0.7):
        _check_alphabet(itin, m)
        orbit = orbits.find_orbit(itin, m)
        deriv = orbits.orbit_dm(orbit)
        rec = orbits.orbit_to_dict(orbit, deriv)
        rec["dpoints_dm"] = deriv.dpoints_dm.tolist()
        results.append(rec)
    header = ["m", "period_discrete", "flow_period", "lambda", "mu", "residual", "dtau_dm"]
    rows = [[r["m"], r["period_discrete"], r["flow_period"], *r["multipliers"], r["residual"], r["dtau_dm"]]
            for r in results]
    return header, rows, results[0] if len(results) == 1 else results


def cmd_geometry(cfg):
    """Full-shift intervals with corner margins; k = 1 rows also carry the R_i n T(R_j) shapes."""
    k_max = int(cfg.get("k_max", 10))
    masses = cfg.get("masses")
    keys = [(0, 0), (0, 1), (1, 0), (1, 1)]
    rows, shapes = [], []
    for k in range(1, k_max + 1):
        lo, hi = symbolic.full_shift_interval(k)
        for m in masses or [float(lo), 0.5 * float(lo + hi), float(hi)]:
            q = symbolic.verify_quadrangular(k, m)
            row = [k, str(lo), str(hi), float(lo), float(hi), m, q.holds, q.margins[0], q.margins[1]]
            if k == 1:
                found = symbolic.intersection_shapes(m)
                shapes += [{"m": m, "i": i, "j": j, **found[i, j]._asdict()} for i, j in keys]
                row += [found[key].shape for key in keys]
            else:
                row += [None] * 4
            rows.append(row)
    header = ["k", "m_lo_exact", "m_hi_exact", "m_lo", "m_hi", "m", "quadrangular", "margin_left",
              "margin_right", "shape_00", "shape_01", "shape_10", "shape_11"]
    return header, rows, {"intervals": [dict(zip(header[:9], r)) for r in rows], "shapes": shapes}


def cmd_ratio_scan(cfg):
    depth = int(cfg.get("depth", 20))
    rows = []
    for m in _masses(cfg, 0.7):
        r = analysis.ratio_limit(m)
        cf = analysis.continued_fraction(r, depth)
        rows.append([m, r, analysis.dratio_limit_dm(m), analysis.ratio_limit_general(2, m),
                     cf.max_quotient, cf.reliable_depth, " ".join(map(str, cf.quotients))])
    header = ["m", "ratio_limit", "dratio_limit_dm", "ratio_limit_k2", "max_quotient", "reliable_depth", "quotients"]
    return header, rows, [dict(zip(header, r)) for r in rows]


def cmd_convergence(cfg):
    n_max = int(cfg.get("n_max", constants.PN_MAX))
    rows, summaries, failed = [], [], []
    for m in _masses(cfg, 0.7):
        if not 2 / 3 <= m <= 3 / 4:
            raise InputError(f"convergence needs m in [2/3, 3/4], got {m}")
        recs = analysis.c1_convergence(m, n_max)
        for r in recs:
            rows.append([r.m, r.n, r.ratio_n, r.ratio_limit, r.error, r.dratio_n_dm, r.dratio_n_dm_fd,
                         r.dratio_limit_dm, r.derror, r.failure or ""])
        s0, s1 = analysis.summarize(recs), analysis.summarize(recs, "derror")
        summaries.append({"m": m, "c0": s0, "c1": s1})
        if any(r.failure for r in recs) or not (s0.decreasing_from_3 and s1.decreasing_from_3):
            failed.append(m)
    header = ["m", "n", "ratio_n", "ratio_limit", "error", "dratio_n_dm", "dratio_n_dm_fd",
              "dratio_limit_dm", "derror", "failure"]
    res = {"records": [dict(zip(header, r)) for r in rows], "summaries": summaries}
    if failed:
        raise AssertionFailure(f"convergence checks failed for m in {failed}", (header, rows, res))
    return header, rows, res


def cmd_lyapunov(cfg):
    its = int(cfg.get("iterations", 10**6))
    seed = int(cfg.get("seed", 0))
    rows = []
    for m in _masses(cfg, 0.7):
        r = analysis.lyapunov_exponent(m, its, seed)
        rows.append([m, seed, r.exponent, -r.exponent, r.iterations, r.restarts])
    header = ["m", "seed", "exponent", "stable_exponent", "iterations", "restarts"]
    return header, rows, [dict(zip(header, r)) for r in rows]


def cmd_appendix(cfg):
    m = _masses(cfg, 0.7)[0]
    seed = int(cfg.get("seed", 0))
    ang = analysis.angle_contraction_check(m, int(cfg.get("samples", 10**5)), seed)
    hf = analysis.holder_direction_check(m, int(cfg.get("depth", 12)), seed=seed)
    res = {
        "m": m, "lambda_est": ang.lambda_est, "max_angle_ratio": ang.max_angle_ratio,
        "max_derivative": ang.max_derivative, "C_u": hf.C_u, "gamma_u": hf.gamma_u, "fit_quality": hf.r2_u,
        "C_s": hf.C_s, "gamma_s": hf.gamma_s, "fit_quality_s": hf.r2_s,
    }
    header = list(res)
    return header, [[res[k] for k in header]], res


def cmd_correlate(cfg):
    m = _masses(cfg, 0.7)[0]
    obs = tuple(str(cfg.get("observables", ",".join(analysis.DEFAULT_OBSERVABLES))).split(","))
    if len(obs) != 2 or any(o not in analysis.OBSERVABLES for o in obs):
        raise InputError(f"observables must be two of {sorted(analysis.OBSERVABLES)}")
    c = analysis.correlation_diagnostic(m, float(cfg.get("t_max", 40.0)), obs, int(cfg.get("samples", 10**5)),
                                        int(cfg.get("seed", 0)))
    header = ["t", "correlation", "stderr"]
    rows = list(zip(c.t, c.corr, c.stderr))
    res = {"t": c.t, "correlation": c.corr, "stderr": c.stderr, "head": c.head, "tail": c.tail,
           "decays": c.decays, "samples": c.samples, "seed": c.seed, "observables": list(c.observables)}
    return header, rows, res


COMMANDS = {
    "simulate": (cmd_simulate, "event-driven trajectory log"),
    "map": (cmd_map, "return map, roof and Jacobian at a point"),
    "orbit": (cmd_orbit, "periodic orbit for an itinerary"),
    "geometry": (cmd_geometry, "full-shift intervals and region shapes"),
    "ratio-scan": (cmd_ratio_scan, "limit period ratio and continued fractions over m"),
    "convergence": (cmd_convergence, "P_n period ratios and their m-derivatives"),
    "lyapunov": (cmd_lyapunov, "top Lyapunov exponent"),
    "appendix": (cmd_appendix, "angle contraction and direction Hoelder fit"),
    "correlate": (cmd_correlate, "flow correlation diagnostic"),
}

STOCHASTIC = {"lyapunov", "appendix", "correlate"}


def make_parser():
    p = argparse.ArgumentParser(prog="fallingballs", description="Two falling balls: maps, orbits and diagnostics.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--m", type=float)
        s.add_argument("--m-grid", dest="m_grid", help="lo:hi:steps")
        s.add_argument("--n-max", dest="n_max", type=int)
        s.add_argument("--samples", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--depth", type=int)
        s.add_argument("--out", help="output file (default stdout)")
        s.add_argument("--format", choices=("csv", "json"))
        s.add_argument("--config", help="flat key = value file")
        if name in ("simulate", "map"):
            s.add_argument("--point", help="h,z")
        if name == "simulate":
            s.add_argument("--fixed-point", dest="fixed_point", type=int, help="start at F_n")
            s.add_argument("--returns", type=int)
        if name == "orbit":
            s.add_argument("--itinerary", help="'pn:<n>' or a word such as '0,0,1'")
        if name == "geometry":
            s.add_argument("--k-max", dest="k_max", type=int)
        if name == "lyapunov":
            s.add_argument("--iterations", type=int)
        if name == "correlate":
            s.add_argument("--t-max", dest="t_max", type=float)
            s.add_argument("--observables", help="two names, comma separated")
    return p


def _emit(cfg, command, header, rows, res):
    fmt = cfg.get("format", "csv")
    out = cfg.get("out")
    with (open(out, "w", newline="") if out else contextlib.nullcontext(sys.stdout)) as fh:
        echo = {k: v for k, v in cfg.items() if k not in ("masses", "out")}
        if fmt == "json":
            write_json(fh, res, command, echo)
        else:
            write_csv(fh, header, rows, command, echo)


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    saved = {name: getattr(constants, name) for name in TOLERANCES.values()}
    try:
        cfg = build_config(args, {"format": "csv"})
        if args.command in STOCHASTIC and "seed" not in cfg:
            cfg["seed"] = 0
        func = COMMANDS[args.command][0]
        header, rows, res = func(cfg)
        _emit(cfg, args.command, header, rows, res)
        return EXIT_OK
    except AssertionFailure as exc:
        if exc.emit:
            _emit(cfg, args.command, *exc.emit)
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (orbits.OrbitNotFound, orbits.SingularSystem) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, core.ParameterError, core.InvalidStateError, core.AmbiguousRegion, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        for name, val in saved.items():
            setattr(constants, name, val)


if __name__ == "__main__":
    sys.exit(main())
