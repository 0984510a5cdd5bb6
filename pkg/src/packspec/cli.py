"""Command-line entry point.

    packspec gen circle --L 6.2831853 --n 128 --out c.json
    packspec pack --space c.json --k 3 --mode exact
    packspec eig --space c.json --support 1,2,3 --p 8
    packspec fakespec --space c.json --k 1 --p 16 --strategy local --seed 7
    packspec sweep --space c.json --k 1 --p 8,16,32,64 --seed 7 --format csv
    packspec audit --space c.json --k-max 2 --p 2,3,4
    packspec refine --generator interval --n-list 21,41,81 --quantity dirichlet --p 2
    packspec morrey --cd 4 --cp 1 --sigma 2 --p 8
    packspec morrey check --space c.json --f dist:0 --p 16

Exit status: 0 on success, 1 on invalid input, 2 when --strict is set and a
solver did not converge.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import fakespec as fs
from . import morrey, packing, penergy, space as sp, sweep

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; 2 is reserved here
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file (written atomically); stdout if omitted")
    p.add_argument("--strict", action="store_true", help="exit 2 if any solve did not converge")
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (fallback: PACKSPEC_THREADS); results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="packspec", description="Packing radii and p-Laplacian fake spectra on graphs.")
    parser.add_argument("--version", action="version", version=f"packspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a benchmark space file")
    g.add_argument("generator", choices=sorted(sp.GENERATORS))
    g.add_argument("--L", type=float, default=2 * math.pi)
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--L1", type=float, default=1.0)
    g.add_argument("--L2", type=float, default=1.0)
    g.add_argument("--n1", type=int, default=8)
    g.add_argument("--n2", type=int, default=8)
    g.add_argument("--h", type=float, default=0.1)
    g.add_argument("--radius", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    _common(g)

    p = sub.add_parser("pack", help="packing radius pack_{k+1}")
    p.add_argument("--space", required=True)
    p.add_argument("--k", type=int, required=True, help="number of balls minus one")
    p.add_argument("--mode", choices=["exact", "greedy", "auto"], default="auto")
    p.add_argument("--sweep-k", type=int, default=None, metavar="KMAX",
                   help="emit CSV rows k, pack_k, k*pack_k^dim for k = 2..KMAX")
    p.add_argument("--dim", type=int, default=1)
    _common(p)

    e = sub.add_parser("eig", help="first Dirichlet eigenvalue of a vertex set")
    e.add_argument("--space", required=True)
    e.add_argument("--support", type=_int_list, required=True)
    e.add_argument("--p", type=float, required=True)
    e.add_argument("--minimizer", action="store_true", help="include the minimizing function")
    _solver_flags(e)
    _common(e)

    f = sub.add_parser("fakespec", help="lambda_bar and lambda_under for one (k, p)")
    f.add_argument("--space", required=True)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--p", type=float, required=True)
    f.add_argument("--strategy", choices=["exhaustive", "local", "anneal"], default="local")
    f.add_argument("--omega", type=_int_list, default=None, help="Dirichlet region (k supports inside)")
    _solver_flags(f)
    _common(f)

    s = sub.add_parser("sweep", help="p-sweep toward 1/pack_{k+1} (or 1/inpack_k)")
    s.add_argument("--space", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--p", type=_float_list, required=True)
    s.add_argument("--strategy", choices=["exhaustive", "local", "anneal"], default="local")
    s.add_argument("--omega", type=_int_list, default=None)
    s.add_argument("--format", choices=["json", "csv"], default="json")
    _solver_flags(s)
    _common(s)

    a = sub.add_parser("audit", help="run the invariant audit")
    a.add_argument("--space", required=True)
    a.add_argument("--k-max", type=int, default=2)
    a.add_argument("--p", type=_float_list, default=[2.0, 3.0, 4.0])
    a.add_argument("--strategy", choices=["exhaustive", "local", "anneal"], default="exhaustive")
    _solver_flags(a)
    _common(a)

    r = sub.add_parser("refine", help="refinement study over mesh sizes")
    r.add_argument("--generator", choices=["interval", "circle", "theta_space"], required=True)
    r.add_argument("--n-list", type=_int_list, required=True,
                   help="vertex counts (for theta_space: 1/h values)")
    r.add_argument("--quantity", choices=["dirichlet", "pack", "diam"], required=True)
    r.add_argument("--L", type=float, default=math.pi)
    r.add_argument("--k", type=int, default=1)
    r.add_argument("--p", type=float, default=2.0)
    r.add_argument("--reference", type=float, default=None)
    _solver_flags(r)
    _common(r)

    m = sub.add_parser("morrey", help="explicit Hoelder constants, or 'check' on a space")
    m.add_argument("action", nargs="?", choices=["check"])
    m.add_argument("--cd", type=float)
    m.add_argument("--cp", type=float)
    m.add_argument("--sigma", type=float, default=1.0)
    m.add_argument("--p", type=float, required=True)
    m.add_argument("--diam", type=float, default=1.0)
    m.add_argument("--space")
    m.add_argument("--f", help="dist:X | cone:X:R | comma-separated values")
    m.add_argument("--p0", type=float, default=1.0)
    m.add_argument("--safety", type=float, default=2.0)
    _common(m)
    return parser


# --- helpers -----------------------------------------------------------------------


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PACKSPEC_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"PACKSPEC_THREADS must be an integer, got {env!r}") from None
    return 1


def _config(args) -> dict:
    out = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "threads")}
    out["threads"] = _threads(args)
    return out


def _energy(args, p: float) -> penergy.EnergyConfig:
    return penergy.EnergyConfig(p, args.tol, args.max_iter, args.restarts, args.seed)


def _load(path: str) -> sp.MetricMeasureSpace:
    try:
        return sp.load(path)
    except FileNotFoundError:
        raise UsageError(f"space file not found: {path}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    target = Path(out)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _envelope(args, result) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": _config(args),
        "result": result,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


# --- commands -------------------------------------------------------------------------


def _cmd_gen(args):
    gen = args.generator
    if gen == "circle":
        space = sp.circle(args.L, args.n)
    elif gen == "interval":
        space = sp.interval(args.L, args.n)
    elif gen == "torus_grid":
        space = sp.torus_grid(args.L1, args.L2, args.n1, args.n2)
    elif gen == "theta_space":
        space = sp.theta_space(args.h)
    else:
        space = sp.random_geometric(args.n, args.radius, args.seed)
    return sp.dumps(space) + "\n", True


def _cmd_pack(args):
    space = _load(args.space)
    if args.sweep_k is not None:
        rows = ["# schema_version=1", "k,pack_k,k_pack_k_pow_dim"]
        for kk in range(2, min(args.sweep_k, space.n) + 1):
            r = packing.pack_radius(space, kk, args.mode).radius
            rows.append(f"{kk},{r!r},{kk * r ** args.dim!r}")
        return "\n".join(rows) + "\n", True
    res = packing.pack_radius(space, args.k + 1, args.mode)
    return _envelope(args, res.to_dict()), True


def _cmd_eig(args):
    space = _load(args.space)
    res = penergy.dirichlet_eig1(space, args.support, _energy(args, args.p))
    return _envelope(args, res.to_dict(with_minimizer=args.minimizer)), res.status == "converged"


def _cmd_fakespec(args):
    space = _load(args.space)
    cfg = _energy(args, args.p)
    solver = penergy.DirichletSolver(space, cfg)
    if args.omega is None:
        bar = fs.lambda_bar(space, args.k, args.p, args.strategy, cfg, solver=solver)
        under = fs.lambda_under(space, args.k, args.p, args.strategy, cfg, solver=solver, warm=bar.family)
    else:
        bar = fs.lambda_bar_dirichlet(space, args.omega, args.k, args.p, args.strategy, cfg, solver=solver)
        under = fs.lambda_under_dirichlet(space, args.omega, args.k, args.p, args.strategy, cfg,
                                          solver=solver, warm=bar.family)
    result = {
        "lambda_bar": bar.lambda_bar,
        "lambda_under": under.lambda_under,
        "lambda_bar_root": bar.root("bar"),
        "lambda_under_root": under.root("under"),
        "family": bar.family.to_dict(),
        "under_family": under.family.to_dict(),
        "certificate": bar.certificate,
        "packing_bound": bar.packing_bound,
        "statuses": bar.statuses + under.statuses,
    }
    ok = all(s == "converged" for s in result["statuses"])
    return _envelope(args, result), ok


def _cmd_sweep(args):
    space = _load(args.space)
    cfg = _energy(args, args.p[0])
    if args.omega is None:
        rep = sweep.p_sweep(space, args.k, args.p, args.strategy, cfg)
    else:
        rep = sweep.dirichlet_sweep(space, args.omega, args.k, args.p, args.strategy, cfg)
    ok = all(r.error is None and all(s == "converged" for s in r.statuses) for r in rep.rows)
    if args.format == "csv":
        return rep.to_csv(), ok
    return _envelope(args, rep.to_dict()), ok


def _cmd_audit(args):
    space = _load(args.space)
    rows = sweep.audit(space, args.k_max, args.p, args.strategy, _energy(args, args.p[0]),
                       instance=args.space, seed=args.seed)
    summary = sweep.audit_summary(rows)
    return _envelope(args, {"summary": summary, "rows": [r.to_dict() for r in rows]}), True


def _cmd_refine(args):
    cfg = _energy(args, args.p)
    if args.generator == "interval":
        gen = lambda n: sp.interval(args.L, n)  # noqa: E731
    elif args.generator == "circle":
        gen = lambda n: sp.circle(args.L, n)  # noqa: E731
    else:
        gen = lambda n: sp.theta_space(1.0 / n)  # noqa: E731
    if args.quantity == "dirichlet":
        if args.generator == "interval":
            def q(s):
                return penergy.dirichlet_eig1(s, range(1, s.n - 1), cfg).lambda_
        else:
            def q(s):
                return fs.lambda_bar(s, args.k, args.p, "local", cfg).lambda_bar
    elif args.quantity == "pack":
        def q(s):
            return packing.pack_radius(s, args.k + 1, "auto").radius
    else:
        q = sp.diameter
    return _envelope(args, sweep.refinement_study(gen, args.n_list, q, args.reference)), True


def _parse_function(space, text: str) -> np.ndarray:
    if text is None:
        raise UsageError("morrey check needs --f")
    if text.startswith("dist:"):
        return space.dist[int(text[5:])].copy()
    if text.startswith("cone:"):
        _, x, r = text.split(":")
        return penergy.cone_function(space, int(x), float(r))
    return np.array(_float_list(text))


def _cmd_morrey(args):
    if args.action == "check":
        if args.space is None:
            raise UsageError("morrey check needs --space")
        space = _load(args.space)
        f = _parse_function(space, args.f)
        cd = sp.doubling_constant(space)
        pd = morrey.poincare_estimate(space, args.p0, args.sigma)
        const = morrey.morrey_constants(cd, pd.C_P, args.sigma, args.p, sp.diameter(space), args.p0)
        rep = morrey.holder_check(space, f, args.p, const, args.safety)
        return _envelope(args, {"holder": rep.to_dict(), "constants": const.to_dict(),
                                "poincare": pd.to_dict()}), True
    if args.cd is None or args.cp is None:
        raise UsageError("morrey needs --cd and --cp")
    const = morrey.morrey_constants(args.cd, args.cp, args.sigma, args.p, args.diam)
    return _envelope(args, const.to_dict()), True


COMMANDS = {
    "gen": _cmd_gen,
    "pack": _cmd_pack,
    "eig": _cmd_eig,
    "fakespec": _cmd_fakespec,
    "sweep": _cmd_sweep,
    "audit": _cmd_audit,
    "refine": _cmd_refine,
    "morrey": _cmd_morrey,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _threads(args)
        text, converged = COMMANDS[args.command](args)
        _write(text, args.out)
    except (UsageError, ValueError, sp.SpaceError, packing.InfeasibleError, fs.ExhaustiveRefused) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.strict and not converged:
        print("error: a solve did not converge (--strict)", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
