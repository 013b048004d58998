"""Command-line front end: ``fracdg {mesh-gen,solve,convergence,cond}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .assembly import FLUX_KINDS, PENALTY_LAWS, Discretization, FluxScheme, PenaltyConfig, assemble_system
from .basis import MAX_ORDER, build_reference_basis
from .fracint import FracParams
from .mesh import MeshError, save_mesh
from .solver import relative_residual, solve_dense
from .verify import (CASES, MeshSpec, StudyConfig, check_trends, condition_table, energy_error,
                     l2_error, run_condition_study, run_convergence_study)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("fracdg")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _param_list(text: str) -> list[tuple[float, float]]:
    """``1.4:1.4,1.1:1.6`` -> [(1.4, 1.4), (1.1, 1.6)]."""
    out = []
    for item in text.split(","):
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected alpha:beta pairs, got {item!r}")
    return out


def _add_common(p: argparse.ArgumentParser, single: bool) -> None:
    p.add_argument("--config", help="text file of key = value defaults (flags win)")
    p.add_argument("--flux", choices=FLUX_KINDS, default="central")
    p.add_argument("--lambda-tilde", type=float, default=None)
    p.add_argument("--penalty-law", choices=PENALTY_LAWS, default=None)
    p.add_argument("--eta-rule", choices=("min-id", "max-id"), default="min-id")
    p.add_argument("--case", choices=sorted(CASES), default="example1")
    p.add_argument("--volume-degree", type=int, default=None, help="volume quadrature degree")
    p.add_argument("--face-points", type=int, default=None, help="Gauss points per face")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    if single:
        p.add_argument("--order", "-N", type=int, default=1)
        p.add_argument("--alpha", type=float, default=1.4)
        p.add_argument("--beta", type=float, default=1.4)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracdg", description="DG solver for 2D Riemann-Liouville fractional elliptic problems")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh-gen", help="write a generated mesh to a file")
    p.add_argument("--config")
    p.add_argument("--gen-mesh", type=int, default=None, metavar="M", help="structured m x m square")
    p.add_argument("--unstructured", type=int, default=None, metavar="K", help="target triangle count")
    p.add_argument("--domain", choices=("square", "lshape"), default="square")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=False)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("solve", help="assemble and solve one problem")
    _add_common(p, single=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--gen-mesh", type=int, default=None, metavar="M")
    src.add_argument("--mesh", default=None, help="mesh file (plain text or gmsh 2.2)")
    src.add_argument("--unstructured", type=int, default=None, metavar="K")
    p.add_argument("--domain", choices=("square", "lshape"), default="square")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-solution", default=None, help="per-element coefficients, text")
    p.add_argument("--dump-matrix", default=None, help="binary A and rhs")
    p.add_argument("--dump-triplets", default=None, help="text (i j value) triplets of A")

    p = sub.add_parser("convergence", help="refinement study, CSV output")
    _add_common(p, single=False)
    p.add_argument("--levels", type=_int_list, default=[2, 4, 8], help="structured m list")
    p.add_argument("--unstructured", type=_int_list, default=None, help="target K list")
    p.add_argument("--lshape", type=_int_list, default=None, help="structured L-shape m list")
    p.add_argument("--domain", choices=("square", "lshape"), default="square")
    p.add_argument("--orders", type=_int_list, default=[1])
    p.add_argument("--params", type=_param_list, default=[(1.4, 1.4)], help="alpha:beta,...")
    p.add_argument("--fluxes", default=None, help="comma list; default is --flux")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timings", action="store_true", help="fill wall_time (breaks byte-identical reruns)")
    p.add_argument("--no-energy", action="store_true")

    p = sub.add_parser("cond", help="condition numbers of the three flux matrices")
    _add_common(p, single=False)
    p.add_argument("--levels", type=_int_list, default=[2, 3, 4, 5], help="structured m list (K = 2 m^2)")
    p.add_argument("--order", "-N", type=int, default=1)
    p.add_argument("--params", type=_param_list, default=None, help="alpha:beta,...")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--check-trends", action="store_true")
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = _read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in known or k in ("help", "config"):
                raise ConfigError(f"{args.config}: unknown key {k!r}")
            action = known[k]
            if action.const is True and action.nargs == 0:  # store_true
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                conv = action.type or str
                try:
                    defaults[k] = conv(v)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ConfigError(f"{args.config}: bad value for {k}: {exc}")
                if action.choices is not None and defaults[k] not in action.choices:
                    raise ConfigError(f"{args.config}: {k} must be one of {list(action.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _validate(args) -> None:
    for name in ("alpha", "beta"):
        v = getattr(args, name, None)
        if v is not None and not 1.0 < v <= 2.0:
            raise ConfigError(f"{name} must lie in (1, 2], got {v}")
    orders = getattr(args, "orders", None) or [getattr(args, "order", 1)]
    for N in orders:
        if not 1 <= N <= MAX_ORDER:
            raise ConfigError(f"order must lie in [1, {MAX_ORDER}], got {N}")
    lt = getattr(args, "lambda_tilde", None)
    if lt is not None and not lt > 0:
        raise ConfigError(f"lambda_tilde must be positive, got {lt}")
    for a, b in getattr(args, "params", None) or []:
        if not (1.0 < a <= 2.0 and 1.0 < b <= 2.0):
            raise ConfigError(f"alpha, beta must lie in (1, 2], got ({a}, {b})")
    if getattr(args, "jobs", 1) < 1:
        raise ConfigError("--jobs must be at least 1")


def _mesh_spec(args) -> MeshSpec:
    if args.mesh:
        return MeshSpec("file", args.mesh)
    if args.unstructured:
        return MeshSpec("unstructured", args.unstructured, args.domain, args.seed)
    m = args.gen_mesh if args.gen_mesh is not None else 4
    if m < 1:
        raise ConfigError("--gen-mesh must be at least 1")
    return MeshSpec("lshape" if args.domain == "lshape" else "structured", m)


def cmd_mesh_gen(args) -> int:
    if args.unstructured:
        spec = MeshSpec("unstructured", args.unstructured, args.domain, args.seed)
    elif args.gen_mesh:
        spec = MeshSpec("lshape" if args.domain == "lshape" else "structured", args.gen_mesh)
    else:
        raise ConfigError("mesh-gen needs --gen-mesh M or --unstructured K")
    mesh = spec.build()
    if args.output:
        save_mesh(mesh, args.output)
    print(f"K={mesh.K} vertices={len(mesh.vertices)} edges={mesh.n_edges}")
    return EXIT_OK


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    mesh = _mesh_spec(args).build()
    params = FracParams(args.alpha, args.beta)
    basis = build_reference_basis(args.order, volume_degree=args.volume_degree, face_points=args.face_points)
    disc = Discretization(mesh, basis)
    case = CASES[args.case](params)
    scheme = FluxScheme(args.flux, args.eta_rule)
    system = assemble_system(disc, params, scheme, PenaltyConfig(args.lambda_tilde, args.penalty_law),
                             case.forcing)
    U = solve_dense(system.A, system.rhs)
    res = relative_residual(system.A, U, system.rhs)
    l2 = l2_error(mesh, basis, U, case.exact)
    en = energy_error(mesh, basis, U, case, params, disc)
    if args.dump_matrix:
        system.dump_binary(args.dump_matrix)
    if args.dump_triplets:
        system.dump_triplets(args.dump_triplets)
    dump = args.dump_solution or args.output
    if dump:
        np.savetxt(dump, U.reshape(mesh.K, basis.np), fmt="%.17e",
                   header=f"K={mesh.K} Np={basis.np} N={args.order} (one element per row)")
    print(f"K={mesh.K}")
    print(f"DOFs={mesh.K * basis.np}")
    print(f"L2 error={l2:.6e}")
    print(f"energy error={en:.6e}")
    print(f"residual={res:.3e}")
    print(f"wall time={time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def _study_config(args, meshes, orders, params, fluxes, **extra) -> StudyConfig:
    return StudyConfig(tuple(meshes), tuple(orders), tuple(params), tuple(fluxes), args.case,
                       args.lambda_tilde, args.penalty_law, args.eta_rule,
                       volume_degree=args.volume_degree, face_points=args.face_points, **extra)


def cmd_convergence(args) -> int:
    if args.unstructured:
        meshes = [MeshSpec("unstructured", k, args.domain) for k in args.unstructured]
    elif args.lshape:
        meshes = [MeshSpec("lshape", m) for m in args.lshape]
    else:
        meshes = [MeshSpec("structured", m) for m in args.levels]
    if len(meshes) < 2:
        raise ConfigError("a convergence study needs at least two refinement levels")
    fluxes = args.fluxes.split(",") if args.fluxes else [args.flux]
    for f in fluxes:
        if f not in FLUX_KINDS:
            raise ConfigError(f"unknown flux {f!r}")
    cfg = _study_config(args, meshes, args.orders, args.params, fluxes,
                        energy=not args.no_energy, timings=args.timings)
    report = run_convergence_study(cfg, jobs=args.jobs)
    text = report.to_csv()
    if args.output:
        out = Path(args.output)
        out.write_text(text)
        for N in cfg.orders:
            for f in fluxes:
                for a, b in cfg.params:
                    rows = report.series(N, a, b, f)
                    side = out.with_name(f"{out.stem}_N{N}_{f}_{a:g}_{b:g}.dat")
                    side.write_text("# h l2_error\n" + "".join(f"{r.h:.6e} {r.l2_error:.6e}\n" for r in rows))
    else:
        sys.stdout.write(text)
    failed = [r for r in report.rows if not np.isfinite(r.l2_error)]
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_cond(args) -> int:
    if args.params:
        params = args.params
    else:
        params = [(args.alpha if args.alpha is not None else 1.6, args.beta if args.beta is not None else 1.6)]
    meshes = [MeshSpec("structured", m) for m in args.levels]
    cfg = _study_config(args, meshes, [args.order], params, FLUX_KINDS)
    report = run_condition_study(cfg, jobs=args.jobs)
    text = condition_table(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.check_trends:
        problems = check_trends(report)
        for msg in problems:
            print(f"trend violation: {msg}", file=sys.stderr)
        if problems:
            return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {"mesh-gen": cmd_mesh_gen, "solve": cmd_solve, "convergence": cmd_convergence, "cond": cmd_cond}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _validate(args)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"fracdg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        msg = str(exc) if "file not found" in str(exc) else f"file not found: {exc.filename}"
        print(f"fracdg: error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, ValueError) as exc:
        print(f"fracdg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fracdg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
