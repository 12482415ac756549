"""Command-line entry point.

Exit codes: 0 success, 2 when a checked condition fails (certification or
envelope), 1 for usage and input errors.
"""

import argparse
import concurrent.futures
import io
import json
import math
import os
import sys as _sys
import tempfile

import numpy as np

from . import certifier, planar, scaling, sim
from .errors import CertificationFailure, HypissError
from .model import SpatialGrid, build_system

DEFAULT_SEED = 42

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["lambda"],
    "properties": {
        "L": {"type": "number", "exclusiveMinimum": 0},
        "lambda": {"type": "array", "items": {"$ref": "#/coefficient"}},
        "m": {"type": "integer"},
        "source_jacobian": {"type": "array", "items": {"type": "array", "items": {"$ref": "#/coefficient"}}},
        "boundary_jacobian": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "nonlinear": {"type": "object", "properties": {
            "speed": {"type": "array", "items": {"type": "string"}},
            "source": {"type": "array", "items": {"type": "string"}},
            "boundary": {"type": "array", "items": {"type": "string"}}}},
    },
    "coefficient": {"oneOf": [{"type": "number"}, {"type": "string"},
                              {"type": "object", "required": ["expr"]},
                              {"type": "object", "required": ["samples"]}]},
}

DISTURBANCE_SCHEMA = {
    "type": "object",
    "required": ["boundary"],
    "properties": {
        "boundary": {"type": "array", "items": {"type": ["number", "string"]}, "description": "d_i(t)"},
        "internal": {"type": "array", "items": {"type": ["number", "string"]}, "description": "d2_i(t, x)"},
        "bound": {"type": "number"},
        "horizon": {"type": "number"},
    },
}

U0_SCHEMA = {"oneOf": [
    {"type": "array", "items": {"type": ["number", "string"]}, "description": "u0_i(x)"},
    {"type": "object", "required": ["values"], "properties": {"values": {"type": "array"}}},
]}

OUTPUT_SCHEMAS = {
    "certify": {"type": "object", "required": ["status"], "properties": {
        "status": {"enum": ["success", "failure"]}, "mode": {"type": "string"},
        "theta": {"type": "number"}, "alpha": {"type": "number"}, "mu": {"type": "number"},
        "delta": {"type": "array"}, "gains": {"type": "object"},
        "interior": {"type": "object"}, "boundary": {"type": "object"},
        "interior_margin": {"type": "number"}, "boundary_margin": {"type": "number"}}},
    "rho": {"type": "object", "required": ["value", "delta", "oracle", "agrees"]},
    "compare-2x2": {"type": "object", "required": ["ours", "kk"]},
    "simulate": {"type": "object", "required": ["holds", "worst_ratio"]},
}


def _schema_text(name, inputs):
    blob = {"inputs": inputs}
    if name in OUTPUT_SCHEMAS:
        blob["output"] = OUTPUT_SCHEMAS[name]
    return "JSON schemas:\n" + json.dumps(blob, indent=2)


# serialization

def _num(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj):
    """JSON with every float written to 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return json.dumps(str(obj))


def _csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")
    return buf.getvalue()


def write_atomic(path, text):
    """Write via a temporary file in the target directory and rename."""
    if path in (None, "-"):
        _sys.stdout.write(text)
        if not text.endswith("\n"):
            _sys.stdout.write("\n")
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".hypiss-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(arg, what):
    """Inline JSON or a path to a JSON file."""
    if os.path.exists(arg):
        with open(arg) as fh:
            return json.load(fh)
    try:
        return json.loads(arg)
    except json.JSONDecodeError:
        raise UsageError(f"{what}: not a file and not valid JSON: {arg!r}") from None


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _threads():
    try:
        cap = int(os.environ.get("HYPISS_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, cap)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        if self.epilog:
            _sys.stderr.write(self.epilog + "\n")
        _sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# subcommands

def cmd_certify(args):
    sysd = _load_json(args.system, "--system")
    system = build_system(sysd)
    grid = SpatialGrid.uniform(system.L, args.grid_points)
    sweep = certifier.INIT_SWEEP
    if args.init_sweep:
        sweep = tuple(_float_list(args.init_sweep))
    if args.eps0 is not None:
        sweep = tuple(sorted({v for v in sweep if v >= args.eps0} | {args.eps0}))
    try:
        cert = certifier.certify(system, mu=args.mu, grid=grid, init_sweep=sweep,
                                 boundary_form=args.boundary_form)
    except CertificationFailure as exc:
        write_atomic(args.out, dumps(exc.to_dict()))
        return 2
    write_atomic(args.out, dumps(cert.to_dict(include_profile=args.profile)))
    return 0


def cmd_rho(args):
    K = np.array(_load_json(args.matrix, "--matrix"), dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise UsageError("--matrix must be square")
    r = scaling.rho_inf(K)
    oracle = scaling.perron_root(np.abs(K))
    out = {"value": r.value, "delta": r.delta, "iterations": r.iterations,
           "converged": r.converged, "oracle": oracle,
           "agrees": abs(r.value - oracle) <= 1e-6}
    if args.two:
        r2 = scaling.rho_two(K, seed=args.seed)
        out["rho_two"] = {"value": r2.value, "delta": r2.delta}
    write_atomic(args.out, dumps(out))
    return 0


def _planar_from_args(args):
    def coef(v):
        try:
            return float(v)
        except ValueError:
            return v
    return planar.PlanarParams(coef(args.a), coef(args.b), args.lambda1, args.lambda2,
                               args.k1, args.k2)


def _kk_summary(p):
    K = planar.kk_exists(p)
    if K is None:
        margins = [planar.kk_margin(p, k) for k in planar.KK_GRID]
        return {"holds": False, "K": None, "best_margin": max(margins)}
    return {"holds": True, "K": K, "margin": planar.kk_margin(p, K)}


def cmd_compare(args):
    p = _planar_from_args(args)
    ours = planar.check_planar(p)
    out = {"params": p.to_dict(), "ours": ours.to_dict(), "kk": _kk_summary(p)}
    write_atomic(args.out, dumps(out))
    return 0


def _sweep_row(job):
    a, b, l1, l2, k1, k2 = job
    p = planar.PlanarParams(a, b, l1, l2, k1, k2)
    ours = planar.check_planar(p)
    return (k1, k2, int(ours.holds), float(ours.margin), int(planar.kk_exists(p) is not None))


def cmd_sweep(args):
    k1s = np.linspace(args.k1_min, args.k1_max, args.points)
    k2s = np.linspace(args.k2_min, args.k2_max, args.points)
    jobs = [(float(args.a), float(args.b), args.lambda1, args.lambda2, float(k1), float(k2))
            for k1 in k1s for k2 in k2s]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_sweep_row, jobs, chunksize=16))
    else:
        rows = [_sweep_row(j) for j in jobs]
    write_atomic(args.out, _csv(["k1", "k2", "ours_holds", "ours_margin", "kk_holds"], rows))
    return 0


def _default_length_system():
    return build_system(L=1.0, lam=[1.0, -1.0], source_jacobian=[[0, 1], [1, 0]])


def cmd_max_length(args):
    system = build_system(_load_json(args.system, "--system")) if args.system else _default_length_system()
    rows = []
    for C in _float_list(args.C):
        rows.append((C, certifier.max_iss_length(system, C, step=args.step, L_cap=args.cap)))
    write_atomic(args.out, _csv(["C", "L"], rows))
    return 0


def _initial(obj, system, grid):
    if isinstance(obj, dict) and "values" in obj:
        return np.array(obj["values"], dtype=float)
    if isinstance(obj, list):
        return obj
    raise UsageError("--u0 must be a list of expressions or {\"values\": [...]}")


def cmd_simulate(args):
    system = build_system(_load_json(args.system, "--system"))
    grid = SpatialGrid.uniform(system.L, args.grid_points)
    u0 = _initial(_load_json(args.u0, "--u0"), system, grid) if args.u0 else np.zeros((system.n, grid.count))
    dist = (sim.DisturbanceSpec.from_dict(_load_json(args.disturbance, "--disturbance"))
            if args.disturbance else sim.DisturbanceSpec.zero(system.n))
    ps = [int(p) for p in _float_list(args.lyapunov)] if args.lyapunov else []
    lyap = None
    if ps:
        try:
            cert = certifier.certify(system, mu=args.mu)
            f, mu = cert.f, cert.mu
        except CertificationFailure:
            print("hypiss: certification failed; Lyapunov weights use f = 1", file=_sys.stderr)
            f = certifier.FProfile.constant(np.ones(system.n), system.default_grid())
            mu = args.mu or 0.05 / system.L
        f = certifier.FProfile(grid, np.stack([np.interp(grid.points, f.x, v) for v in f.values]), None)
        lyap = {"f": f, "mu": mu, "p": ps}
    traj = sim.simulate(system, u0, dist, grid, args.T, mode=args.mode, cfl=args.cfl,
                        record_every=args.record_every, strict=args.strict, lyapunov=lyap)
    header = ["t", "c0", "c1"]
    cols = [traj.times, traj.c0_norms, traj.c1_norms]
    if lyap:
        header.append("V")
        cols.append(traj.lyapunov["V"])
        for p in ps:
            header.append(f"W{p}")
            W = traj.lyapunov["W"][p]
            cols.append(W[:, 0] + W[:, 1])
    write_atomic(args.out, _csv(header, zip(*[np.asarray(c, dtype=float) for c in cols])))
    if args.envelope is None:
        return 0
    if args.envelope == "fit":
        rep = sim.envelope_check(traj, dist)
    else:
        g = _load_json(args.envelope, "--envelope")
        g = g.get("gains", g)
        rep = sim.envelope_check(traj, dist, gains=(g["C1"], g["C2"], g["gamma"]))
    out = rep.to_dict()
    out["diverged"] = traj.diverged
    write_atomic(args.report, dumps(out))
    return 0 if rep.holds else 2


# parser

def build_parser():
    p = _Parser(prog="hypiss", description="ISS certification for 1-D hyperbolic systems.",
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, inputs, help_):
        sp = sub.add_parser(name, help=help_, epilog=_schema_text(name, inputs),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=fn)
        sp.add_argument("--out", default="-", help="output path ('-' for stdout)")
        return sp

    sp = add("certify", cmd_certify, {"system": SYSTEM_SCHEMA}, "certify ISS for a system")
    sp.add_argument("--system", required=True, help="system JSON (path or inline)")
    sp.add_argument("--mu", type=float, default=None, help="weight exponent (default 0.05/L)")
    sp.add_argument("--grid-points", type=int, default=certifier.DEFAULT_GRID_POINTS)
    sp.add_argument("--init-sweep", default=None, help="comma-separated f(0) values")
    sp.add_argument("--eps0", type=float, default=None, help="smallest f(0) value in the sweep")
    sp.add_argument("--boundary-form", choices=certifier.BOUNDARY_FORMS, default="sharp")
    sp.add_argument("--profile", action="store_true", help="include the f profile")

    sp = add("rho", cmd_rho, {"matrix": {"type": "array", "items": {"type": "array"}}},
             "scaled inf-norm of a matrix")
    sp.add_argument("--matrix", required=True, help="square matrix JSON (path or inline)")
    sp.add_argument("--two", action="store_true", help="also compute rho_two")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    planar_inputs = {"a": "number or expression in x", "b": "number or expression in x",
                     "lambda1": "number > 0", "lambda2": "number < 0", "k1": "number", "k2": "number"}
    sp = add("compare-2x2", cmd_compare, planar_inputs, "compare the two 2x2 conditions")
    for name in ("a", "b"):
        sp.add_argument(f"--{name}", required=True)
    sp.add_argument("--lambda1", type=float, required=True)
    sp.add_argument("--lambda2", type=float, required=True)
    sp.add_argument("--k1", type=float, required=True)
    sp.add_argument("--k2", type=float, required=True)

    sp = add("sweep", cmd_sweep, {k: v for k, v in planar_inputs.items() if k[0] != "k"},
             "CSV region map over a (k1, k2) grid")
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--b", type=float, required=True)
    sp.add_argument("--lambda1", type=float, required=True)
    sp.add_argument("--lambda2", type=float, required=True)
    sp.add_argument("--k1-min", type=float, default=0.0)
    sp.add_argument("--k1-max", type=float, default=1.5)
    sp.add_argument("--k2-min", type=float, default=0.0)
    sp.add_argument("--k2-max", type=float, default=1.5)
    sp.add_argument("--points", type=int, default=31)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = add("max-length", cmd_max_length, {"system": SYSTEM_SCHEMA}, "L(C) table as CSV")
    sp.add_argument("--system", default=None,
                    help="system JSON (default: speeds (1, -1), antidiagonal ones)")
    sp.add_argument("--C", default="1,10,100,1000", help="comma-separated C values")
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--cap", type=float, default=10.0)

    sp = add("simulate", cmd_simulate,
             {"system": SYSTEM_SCHEMA, "u0": U0_SCHEMA, "disturbance": DISTURBANCE_SCHEMA,
              "envelope gains": {"type": "object", "required": ["C1", "C2", "gamma"]}},
             "simulate and check the ISS envelope")
    sp.add_argument("--system", required=True)
    sp.add_argument("--u0", default=None)
    sp.add_argument("--disturbance", default=None)
    sp.add_argument("--T", type=float, default=10.0)
    sp.add_argument("--grid-points", type=int, default=257)
    sp.add_argument("--cfl", type=float, default=sim.MAX_CFL)
    sp.add_argument("--record-every", type=float, default=None)
    sp.add_argument("--mode", choices=sim.MODES, default="linear")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--lyapunov", default=None, help="comma-separated p values")
    sp.add_argument("--envelope", default=None, help="'fit' or a gains JSON")
    sp.add_argument("--report", default="-", help="EnvelopeReport output path")
    sp.add_argument("--strict", action="store_true", help="error on compatibility violations")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if getattr(args, "func", None) is None:
        parser.print_help(_sys.stderr)
        return 1
    try:
        return args.func(args)
    except (UsageError, HypissError, OSError, KeyError, TypeError) as exc:
        _sys.stderr.write(f"hypiss {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
