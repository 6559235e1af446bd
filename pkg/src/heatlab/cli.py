"""``heatlab`` command line.

Every CSV starts with ``# heatlab <version> config=<hash>``; verify-* commands
add their JSON verdict as a ``# verdict=`` comment and, with ``-o``, a sibling
``.json`` file. Exit status: 0 ok, 2 configuration error, 3 numeric failure
(including a FAIL verdict), 4 I/O error. Errors go to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import exit_limit_experiment, kernel_limit_experiment, yaglom_experiment
from .cone import ConeKernelSpec, SeriesError, cone_heat_kernel, cone_survival_series, truncated_harmonic_w
from .geometry import MulticoneDomain, Opening, domain_to_dict, load_domain, validate
from .mc import SimConfig, default_workers, estimate_u, estimate_w, simulate_horizons
from .mc.export import summary_json, write_paths_csv
from .spectral import ShootingError, spectrum


class ConfigError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


# ------------------------------------------------------------------ parsing


def parse_point(text: str) -> tuple[float, ...]:
    try:
        pt = tuple(float(c) for c in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}: expected comma-separated numbers") from exc
    if not all(math.isfinite(c) for c in pt):
        raise ConfigError(f"bad point {text!r}: coordinates must be finite")
    return pt


def parse_grid(text: str) -> list[float]:
    """``"16,32,64"`` or the geometric shorthand ``"start:factor:count"``.

    >>> parse_grid("16:2:3")
    [16.0, 32.0, 64.0]
    """
    try:
        if ":" in text:
            start, factor, count = text.split(":")
            s, f, c = float(start), float(factor), int(count)
            if c < 1 or f <= 1 or s <= 0:
                raise ConfigError("grid shorthand needs start > 0, factor > 1, count >= 1")
            return [s * f**k for k in range(c)]
        grid = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad t-grid {text!r}") from exc
    if any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("t-grid must be positive and strictly increasing")
    return grid


def _opening(args) -> Opening:
    if args.arc is not None and args.cap is not None:
        raise ConfigError("give either --arc or --cap, not both")
    if args.arc is not None:
        op = Opening.arc(*args.arc)
    elif args.cap is not None:
        op = Opening.cap(args.cap, parse_point(args.axis) if args.axis else (0.0, 0.0, 1.0))
    else:
        raise ConfigError("an opening is required (--arc A B or --cap THETA0)")
    probs = op.problems()
    if probs:
        raise ConfigError("; ".join(probs))
    return op


def _domain(path: str) -> MulticoneDomain:
    if not os.path.exists(path):
        raise FileNotFoundError(f"domain file not found: {path}")
    try:
        dom = load_domain(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad domain description in {path}: {exc}") from exc
    probs = validate(dom)
    if probs:
        raise ConfigError("invalid domain: " + "; ".join(probs))
    return dom


def _sim_config(args, paths=None) -> SimConfig:
    cfg = SimConfig(dt=args.dt, dt_min=args.dt_min, paths=args.paths if paths is None else paths,
                    seed=args.seed, bridge=not args.no_bridge,
                    bandwidth=getattr(args, "bandwidth", None), rho=getattr(args, "rho", None),
                    workers=args.workers)
    probs = cfg.problems()
    if probs:
        raise ConfigError("; ".join(probs))
    return cfg


def _config_hash(args, extra: dict | None = None) -> str:
    d = {k: v for k, v in vars(args).items() if k not in ("workers", "output", "func")}
    if extra:
        d.update(extra)
    blob = json.dumps(d, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ----------------------------------------------------------------- commands


def cmd_spectrum(args, out):
    op = _opening(args)
    if args.k < 1:
        raise ConfigError("--k must be at least 1")
    sd = spectrum(op, args.k)
    out.write(f"# kappa={sd.kappa!r} beta={sd.beta!r} I1={sd.I1!r}\n")
    out.write("k,lambda,alpha,mode_integral\n")
    for i in range(sd.K):
        out.write(f"{i + 1},{_num(sd.eigenvalues[i])},{_num(sd.characters[i])},"
                  f"{_num(sd.mode_integrals[i])}\n")
    return 0, None


def _num(v: float) -> str:
    """Shortest round-trip repr, with integral values printed as integers."""
    v = float(v)
    r = round(v)
    if abs(v - r) <= 1e-12 * max(1.0, abs(v)):
        return str(int(r))
    return repr(v)


def _cone_spec(args) -> ConeKernelSpec:
    op = _opening(args)
    vertex = parse_point(args.vertex) if args.vertex else ()
    K = 1 if op.dim == 2 else args.modes
    return ConeKernelSpec(spectrum(op, K), vertex, eps=args.eps)


def cmd_kernel(args, out):
    ks = _cone_spec(args)
    x, y = parse_point(args.x), parse_point(args.y)
    out.write("t,value,tail_bound\n")
    for t in parse_grid(args.t_grid):
        kv = cone_heat_kernel(ks, t, x, y)
        out.write(f"{t!r},{kv.value!r},{kv.tail_bound!r}\n")
    return 0, None


def cmd_survival(args, out):
    ks = _cone_spec(args)
    x = parse_point(args.x)
    out.write("t,value,tail_bound\n")
    for t in parse_grid(args.t_grid):
        sv = cone_survival_series(ks, t, x)
        out.write(f"{t!r},{sv.value!r},{sv.error!r}\n")
    return 0, None


def cmd_simulate(args, out):
    dom = _domain(args.domain)
    cfg = _sim_config(args)
    ens = simulate_horizons(dom, parse_point(args.x), parse_grid(args.t_grid), cfg)
    write_paths_csv(ens, out)
    return 0, json.loads(summary_json(ens))


def cmd_harmonic(args, out):
    dom = _domain(args.domain)
    cfg = _sim_config(args)
    j = args.branch
    if not 0 <= j < dom.n_branches:
        raise ConfigError(f"branch {j} does not exist")
    b = dom.branches[j]
    sd = spectrum(b.opening, 1)
    out.write(",".join([f"x{k}" for k in range(dom.dim)] + ["estimate", "se", "closed_form_w"]) + "\n")
    for text in args.x:
        x = parse_point(text)
        if args.which == "w":
            if dom.core:
                raise ConfigError("w is defined on a single truncated cone; use a domain without core")
            est = estimate_w(b, sd, x, cfg)
        else:
            if cfg.rho is None:
                raise ConfigError("--rho is required for u")
            est = estimate_u(dom, j, x, cfg, sd)
        cf = float(truncated_harmonic_w(sd, x, b.truncation_radius, b.a)) if b.truncation_radius > 0 else float("nan")
        out.write(",".join([repr(float(c)) for c in x]
                           + [repr(est.estimate), repr(est.se), repr(cf)]) + "\n")
    return 0, None


def _u_cfg(args):
    if args.u_paths is None:
        return None
    if args.rho is None:
        raise ConfigError("--rho is required with --u-paths")
    return SimConfig(dt=args.dt, dt_min=args.dt_min, paths=args.u_paths, seed=args.seed + 1,
                     bridge=not args.no_bridge, rho=args.rho, workers=args.workers)


def _report(rep, out):
    header = rep.header()
    out.write(f"# verdict={json.dumps(header, sort_keys=True)}\n")
    out.write(rep.to_csv())
    status = 0 if rep.verdict == "PASS" else 3
    return status, header


def cmd_verify_kernel(args, out):
    dom = _domain(args.domain)
    cfg = None if args.analytic else _sim_config(args)
    rep = kernel_limit_experiment(dom, parse_point(args.x), parse_point(args.y),
                                  parse_grid(args.t_grid), cfg, u_cfg=_u_cfg(args),
                                  tolerance=args.tolerance, bandwidth=args.bandwidth)
    return _report(rep, out)


def cmd_verify_exit(args, out):
    dom = _domain(args.domain)
    cfg = None if args.analytic else _sim_config(args)
    rep = exit_limit_experiment(dom, parse_point(args.x), parse_grid(args.t_grid), cfg,
                                u_cfg=_u_cfg(args), tolerance=args.tolerance)
    return _report(rep, out)


def cmd_verify_yaglom(args, out):
    dom = _domain(args.domain)
    cfg = _sim_config(args)
    if not args.t > 0:
        raise ConfigError("--t must be positive")
    rep = yaglom_experiment(dom, parse_point(args.x), args.t, cfg, u_cfg=_u_cfg(args),
                            min_survivors=args.min_survivors)
    return _report(rep, out)


# ------------------------------------------------------------------- parser


def _add_opening(p):
    p.add_argument("--arc", nargs=2, type=float, metavar=("THETA_A", "THETA_B"))
    p.add_argument("--cap", type=float, metavar="THETA0")
    p.add_argument("--axis", help="cap axis as x,y,z")


def _add_sim(p, paths=100_000):
    p.add_argument("--domain", required=True, help="domain description (JSON)")
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--dt", type=float, default=0.1, help="largest time step")
    p.add_argument("--dt-min", type=float, default=1e-4, help="smallest time step near the boundary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-bridge", action="store_true", help="disable the bridge-crossing correction")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatlab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"heatlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="CSV output path (default: stdout)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: $HEATLAB_WORKERS or 1)")

    p = sub.add_parser("spectrum", parents=[common], help="Dirichlet eigenvalues of an opening")
    _add_opening(p)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_spectrum)

    for name, fn, helptext in (("kernel", cmd_kernel, "heat kernel of a cone"),
                               ("survival", cmd_survival, "survival probability in a cone")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _add_opening(p)
        p.add_argument("--vertex")
        p.add_argument("--x", required=True)
        if name == "kernel":
            p.add_argument("--y", required=True)
        p.add_argument("--t-grid", required=True)
        p.add_argument("--eps", type=float, default=1e-12)
        p.add_argument("--modes", type=int, default=40, help="cap modes to compute (n = 3)")
        p.set_defaults(func=fn)

    p = sub.add_parser("simulate", parents=[common], help="simulate killed paths, one CSV row per path")
    _add_sim(p, paths=10_000)
    p.add_argument("--x", required=True)
    p.add_argument("--t-grid", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("harmonic", parents=[common], help="estimate w or u_j by exit simulation")
    _add_sim(p, paths=20_000)
    p.add_argument("--which", choices=("w", "u"), default="w")
    p.add_argument("--branch", type=int, default=0)
    p.add_argument("--x", action="append", required=True, help="point; repeat for several")
    p.add_argument("--rho", type=float)
    p.set_defaults(func=cmd_harmonic)

    for name, fn in (("verify-kernel", cmd_verify_kernel), ("verify-exit", cmd_verify_exit)):
        p = sub.add_parser(name, parents=[common], help=f"{name[7:]} limit experiment")
        _add_sim(p)
        p.add_argument("--x", required=True)
        if name == "verify-kernel":
            p.add_argument("--y", required=True)
            p.add_argument("--bandwidth", type=float)
        p.add_argument("--t-grid", required=True)
        p.add_argument("--tolerance", type=float, default=0.10)
        p.add_argument("--analytic", action="store_true",
                       help="use the Bessel series (single cone with vertex) instead of simulation")
        p.add_argument("--u-paths", type=int, help="paths per u_j estimate (domains with a core)")
        p.add_argument("--rho", type=float, help="stopping radius for u_j estimates")
        p.set_defaults(func=fn)

    p = sub.add_parser("verify-yaglom", parents=[common], help="Yaglom limit experiment")
    _add_sim(p)
    p.add_argument("--x", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--min-survivors", type=int, default=10_000)
    p.add_argument("--u-paths", type=int)
    p.add_argument("--rho", type=float)
    p.set_defaults(func=cmd_verify_yaglom)
    return ap


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": message, "kind": kind}) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return 2 if exc.code else 0
    try:
        if args.workers is None:
            args.workers = default_workers()
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        extra = None
        if getattr(args, "domain", None) and os.path.exists(args.domain):
            try:
                extra = {"domain": domain_to_dict(load_domain(args.domain))}
            except (ValueError, KeyError, TypeError, json.JSONDecodeError):
                extra = None
        buf = io.StringIO()
        buf.write(f"# heatlab {__version__} config={_config_hash(args, extra)}\n")
        status, meta = args.func(args, buf)
        text = buf.getvalue()
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
            if meta is not None:
                base = os.path.splitext(args.output)[0]
                with open(base + ".json", "w", encoding="utf-8") as fh:
                    json.dump(meta, fh, sort_keys=True, indent=1)
        else:
            sys.stdout.write(text)
        if status == 3:
            sys.stderr.write(json.dumps({"error": "verdict FAIL", "kind": "numeric"}) + "\n")
        return status
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        msg = str(exc) if isinstance(exc, FileNotFoundError) and str(exc).startswith("domain") else f"{exc}"
        return _fail("io", msg, 4)
    except OSError as exc:
        return _fail("io", str(exc), 4)
    except (SeriesError, ShootingError, NumericFailure) as exc:
        return _fail("numeric", str(exc), 3)
    except (ConfigError, ValueError, IndexError) as exc:
        return _fail("config", str(exc), 2)
    except RuntimeError as exc:
        return _fail("numeric", str(exc), 3)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
