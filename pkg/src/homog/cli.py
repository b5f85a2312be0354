"""Command-line interface: ``homog gen | run | study``.

Exit codes: 0 success (including partial studies), 2 usage error,
3 non-convergence, 4 scheme not applicable to the grid.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .analysis import emit_report, render_csv, selftest_slope, strain_error_study, sweep
from .microstructure import (
    Checkerboard,
    Laminate,
    Sphere,
    VoxelFormatError,
    load_voxels,
    rasterize,
    save_voxels,
)
from .schemes import (
    SCHEMES,
    SchemeConfig,
    UnsupportedSchemeError,
    effective_tensor,
    run_scheme,
)
from .tensors import UNIT_STRAIN_LABELS, LameParams, isotropic_stiffness, void_stiffness

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_UNSUPPORTED = 0, 2, 3, 4
DEFAULT_MATERIALS = ((1.0, 1.0), (10.0, 10.0))

log = logging.getLogger("homog")


def _floats(text, n=None, name="value"):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name}: expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _lame_pair(text):
    lam, mu = _floats(text, 2, "material")
    return lam, mu


def _reference(text):
    if text == "auto":
        return "auto"
    lam, mu = _floats(text, 2, "reference")
    try:
        return LameParams(lam, mu)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _strain(text):
    return tuple(_floats(text, 6, "strain"))


def _resolutions(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolutions: expected integers, got {text!r}")


def _add_geometry(p):
    g = p.add_argument_group("geometry")
    g.add_argument("--geometry", choices=("laminate", "sphere", "checkerboard"), default="sphere")
    g.add_argument("--fractions", type=lambda s: _floats(s, name="fractions"), default=[0.5, 0.5],
                   help="laminate layer fractions, e.g. 0.5,0.5")
    g.add_argument("--axis", type=int, choices=(0, 1, 2), default=0, help="laminate normal axis")
    g.add_argument("--radius", type=float, default=0.25)
    g.add_argument("--center", type=lambda s: _floats(s, 3, "center"), default=[0.5, 0.5, 0.5])
    g.add_argument("--period", type=int, default=2, help="checkerboard period")
    g.add_argument("--material", type=_lame_pair, action="append", metavar="LAMBDA,MU",
                   help="isotropic material, repeat once per id (default 1,1 and 10,10)")
    g.add_argument("--porous", action="store_true", help="make material 1 a void")


def _add_solver(p):
    s = p.add_argument_group("solver")
    s.add_argument("--scheme", choices=SCHEMES, default="fem")
    s.add_argument("--tolerance", type=float, default=1e-8)
    s.add_argument("--max-iterations", type=int, default=10_000)
    s.add_argument("--reference", type=_reference, default="auto", metavar="auto|LAMBDA,MU")
    s.add_argument("--nyquist", choices=("complex", "real"), default="complex",
                   help="basic scheme: treatment of unpaired Nyquist frequencies")
    s.add_argument("--threads", type=int, default=None,
                   help="FFT threads (default: all cores; HOMOG_THREADS overrides)")


def build_parser():
    parser = argparse.ArgumentParser(prog="homog", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="rasterize a geometry into a voxel file")
    gen.add_argument("--N", type=int, required=True, help="voxels per axis")
    gen.add_argument("-o", "--output", "--out", default="micro.vox")
    _add_geometry(gen)

    run = sub.add_parser("run", help="solve one voxel file")
    run.add_argument("-i", "--input", required=True)
    run.add_argument("-o", "--output", help="result JSON path (default: stdout)")
    run.add_argument("--strain", type=_strain, default=(1.0, 0, 0, 0, 0, 0),
                     help="macroscopic strain, 6 tensorial Voigt components (11,22,33,23,13,12)")
    run.add_argument("--full-tensor", action="store_true", help="compute the 6x6 effective tensor")
    _add_solver(run)

    st = sub.add_parser("study", help="resolution sweep with fitted convergence rate")
    st.add_argument("--resolutions", type=_resolutions)
    st.add_argument("--probe", action="append", choices=UNIT_STRAIN_LABELS,
                    help="probe strain (repeatable, default e11)")
    st.add_argument("--strain-error", action="store_true",
                    help="report strain L2 errors against the finest fem solve")
    st.add_argument("-o", "--output", help="report path (default: stdout)")
    st.add_argument("--format", choices=("csv", "json"), default="csv")
    st.add_argument("--timings", action="store_true", help="fill the seconds column of the CSV")
    st.add_argument("--selftest", action="store_true",
                    help="fit the slope of a synthetic N^-1 sequence and exit")
    _add_geometry(st)
    _add_solver(st)
    return parser


def _materials(args):
    pairs = args.material or list(DEFAULT_MATERIALS)
    if args.geometry == "laminate" and len(pairs) < len(args.fractions):
        raise ValueError(f"laminate with {len(args.fractions)} layers needs as many --material")
    mats = [isotropic_stiffness(p) for p in pairs]
    if args.porous:
        if len(mats) < 2:
            raise ValueError("--porous needs a second material to replace with a void")
        mats[1] = void_stiffness()
    return mats


def _geometry(args):
    if args.geometry == "laminate":
        return Laminate(axis=args.axis, fractions=tuple(args.fractions),
                        ids=tuple(range(len(args.fractions))))
    if args.geometry == "sphere":
        return Sphere(radius=args.radius, center=tuple(args.center))
    return Checkerboard(period=args.period)


def _config(args, strain=(1.0, 0, 0, 0, 0, 0)):
    env = os.environ.get("HOMOG_THREADS")
    workers = int(env) if env else args.threads
    return SchemeConfig(scheme=args.scheme, reference=args.reference, tolerance=args.tolerance,
                        max_iterations=args.max_iterations, strain=tuple(strain),
                        nyquist=args.nyquist, workers=workers)


def _config_echo(args):
    out = {}
    for k, v in sorted(vars(args).items()):
        if isinstance(v, LameParams):
            v = {"lambda": v.lam, "mu": v.mu}
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    out["version"] = __version__
    return out


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args):
    if args.N < 2:
        raise ValueError("--N must be at least 2")
    grid = rasterize(_geometry(args), args.N, _materials(args), porous=args.porous)
    save_voxels(grid, args.output)
    counts = np.bincount(grid.material_ids.ravel(), minlength=len(grid.materials))
    print(json.dumps({"output": args.output, "N": grid.N,
                      "voxels": {str(i): int(c) for i, c in enumerate(counts)},
                      "fractions": {str(i): float(f) for i, f in
                                    enumerate(grid.phase_fractions())}}, sort_keys=True))
    return EXIT_OK


def _result_dict(res):
    return {"stress": res.stress.tolist(), "converged": res.converged,
            "iterations": res.iterations, "residuals": list(res.residuals),
            "equilibrium_residual": res.equilibrium_residual, "imag_norm": res.imag_norm,
            "reference": {"lambda": res.reference.lam, "mu": res.reference.mu},
            "seconds": res.seconds}


def cmd_run(args):
    grid = load_voxels(args.input)
    cfg = _config(args, args.strain)
    out = {"config": _config_echo(args), "N": grid.N, "porous": grid.porous,
           "scheme": cfg.scheme}
    if args.full_tensor:
        eff = effective_tensor(grid, cfg)
        out.update({"effective_tensor": eff.tensor.voigt.tolist(), "asymmetry": eff.asymmetry,
                    "converged": eff.converged,
                    "load_cases": {UNIT_STRAIN_LABELS[j]: _result_dict(r)
                                   for j, r in enumerate(eff.results)}})
        converged = eff.converged
    else:
        res = run_scheme(grid, cfg)
        out.update(_result_dict(res))
        converged = res.converged
    _write_json(out, args.output)
    if not converged:
        print("error: solver did not converge within max_iterations", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_study(args, parser):
    if args.selftest:
        print(f"slope selftest: {selftest_slope():.6f}")
        return EXIT_OK
    if not args.resolutions or len(args.resolutions) < (4 if args.strain_error else 3):
        parser.error("study needs --resolutions with at least 3 values "
                     "(4 with --strain-error: the finest is the reference)")
    cfg = _config(args)
    geometry, mats = _geometry(args), _materials(args)
    if args.strain_error:
        study = strain_error_study(geometry, args.resolutions, cfg, mats,
                                   probe=(args.probe or ["e11"])[0], porous=args.porous)
    else:
        study = sweep(geometry, args.scheme, args.resolutions, cfg, mats, probes=args.probe,
                      porous=args.porous)
    if args.output:
        emit_report(study, args.output, args.format, timings=args.timings)
    elif args.format == "csv":
        sys.stdout.write(render_csv(study, timings=args.timings))
    else:
        _write_json(study.to_dict(), None)
    for label, slope in study.slopes.items():
        if slope is None:
            why = "resolved exactly" if study.resolved_exactly else "no rate fitted"
            print(f"slope {label}: n/a ({why})")
        else:
            print(f"slope {label}: {slope:.6f}")
    if study.partial:
        print("status: partial (some solves did not converge)", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_study(args, parser)
    except UnsupportedSchemeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (VoxelFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
