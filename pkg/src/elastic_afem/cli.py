"""Command-line front end: ``elastic-afem {run,paper,selftest}``."""
import argparse
import concurrent.futures
import csv
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptiveConfig, extrapolate, fit_rate, run, write_trace_csv
from .eigensolver import SolverOptions
from .mesh import GEOMETRIES
from .postprocess import theta_matrix
from .vtk import write_vtk

log = logging.getLogger("elastic_afem")

# Lowest eigenfrequencies on the L-shaped domains (extrapolated reference values).
PAPER_OMEGA = {
    "lshape2d": {0.35: 2.37877, 0.49: 3.26873, 0.5: 3.27271},
    "lshape3d": {0.35: 3.01757, 0.49: 3.73062, 0.5: 3.73364},
}
# Reported error slopes vs N on the 2D L-shape.
PAPER_SLOPES_2D = {
    ("adaptive", 0.35): -1.0,
    ("adaptive", 0.49): -1.02,
    ("adaptive", 0.5): -1.02,
    ("uniform", 0.35): -0.6,
    ("uniform", 0.49): -0.58,
    ("uniform", 0.5): -0.57,
}
TABLE_TOL = 1e-2
ADAPTIVE_SLOPE_BAND = (-1.15, -0.85)
UNIFORM_SLOPE_BAND = (-0.70, -0.47)

FLAG_KEYS = (
    "geometry", "nu", "e_modulus", "mode", "variant", "beta", "max_dofs", "levels", "num_eigs",
    "eig_index", "ref_omega", "vtk_every", "seed", "out", "si_tol", "si_maxiter",
)


@dataclass
class ExperimentSpec:
    name: str
    cases: list
    out: Path
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.cases:
            raise ValueError("an experiment needs at least one case")


def max_workers():
    env = os.environ.get("ELASTIC_AFEM_THREADS")
    cores = os.cpu_count() or 1
    if env:
        return max(1, min(int(env), cores))
    return cores


def _load_config(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return {k.replace("-", "_"): v for k, v in data.items()}


def _resolve(args, parser):
    """Merge config file values under explicitly given flags."""
    values = {k: getattr(args, k) for k in FLAG_KEYS if hasattr(args, k)}
    if getattr(args, "config", None):
        for k, v in _load_config(args.config).items():
            if k not in values:
                parser.error(f"unknown config key {k!r}")
            if values[k] is None:
                values[k] = v
    defaults = dict(
        geometry="lshape2d", nu=0.35, e_modulus=1.0, mode="adaptive", variant="auto", beta=0.5,
        num_eigs=None, eig_index=1, vtk_every=0, seed=0, out="out", si_tol=1e-10, si_maxiter=50,
    )
    for k, v in defaults.items():
        if values.get(k) is None:
            values[k] = v
    return values


def case_dirname(geometry, nu, mode):
    return f"{geometry}_{nu:g}_{mode}"


def build_config(values):
    max_iters = values["levels"] if values.get("levels") else 200
    return AdaptiveConfig(
        geometry=values["geometry"],
        nu=float(values["nu"]),
        E=float(values["e_modulus"]),
        eig_index=int(values["eig_index"]),
        beta=float(values["beta"]),
        max_dofs=int(values["max_dofs"]) if values.get("max_dofs") else None,
        max_iters=int(max_iters),
        variant=values["variant"],
        mode=values["mode"],
        num_eigs=int(values["num_eigs"]) if values.get("num_eigs") else None,
        ref_omega=float(values["ref_omega"]) if values.get("ref_omega") is not None else None,
        solver=SolverOptions(tol=float(values["si_tol"]), maxiter=int(values["si_maxiter"]), seed=int(values["seed"])),
    )


def _vtk_fields(mesh, sol, est, idx):
    n = mesh.dim
    u = sol.u_coeffs[idx].reshape(n, -1).T
    cell = {"eta_T_sq": est.per_cell, "generation": mesh.generation.astype(float), "u_h": u}
    for k, name in enumerate(("postprocess", "gradient", "curl", "jump", "boundary")):
        cell[f"eta_{name}"] = est.terms[:, k]
    point = {"theta_u_h": theta_matrix(mesh) @ u}
    return cell, point


def execute_case(values):
    """Run one case and write trace.csv, final.vtk and meta.txt; returns the trace."""
    config = build_config(values)
    outdir = Path(values["out"]) / case_dirname(config.geometry, config.nu, config.mode)
    outdir.mkdir(parents=True, exist_ok=True)
    vtk_every = int(values.get("vtk_every") or 0)
    idx = config.eig_index - 1

    def snapshot(trace, mesh, sol, est):
        it = trace.records[-1].iter
        if vtk_every and it % vtk_every == 0:
            cell, point = _vtk_fields(mesh, sol, est, idx)
            write_vtk(outdir / f"iter_{it:03d}.vtk", mesh, cell, point)

    trace = run(config, callback=snapshot)
    write_trace_csv(trace, outdir / "trace.csv")
    if trace.final_mesh is not None:
        cell, point = _vtk_fields(trace.final_mesh, trace.final_solution, trace.final_estimator, idx)
        write_vtk(outdir / "final.vtk", trace.final_mesh, cell, point)
    with open(outdir / "meta.txt", "w") as fh:
        for k in sorted(values):
            fh.write(f"{k} = {values[k]!r}\n")
        fh.write(f"resolved_max_dofs = {config.max_dofs}\n")
        fh.write(f"elastic_afem = {__version__}\nnumpy = {np.__version__}\n")
        import scipy

        fh.write(f"scipy = {scipy.__version__}\npython = {platform.python_version()}\n")
        fh.write(f"status = {'error: ' + trace.error if trace.error else 'ok'}\n")
    return trace


def cmd_run(args, parser):
    values = _resolve(args, parser)
    try:
        trace = execute_case(values)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if trace.error:
        print(f"error: {trace.error}", file=sys.stderr)
        return 1
    last = trace.records[-1]
    print(f"{len(trace.records)} iterations, N={last.N}, omega_h={last.omega_h:.8f}, eta^2={last.eta_sq:.4e}")
    return 0


def _paper_cases(args):
    cases = []
    for nu in (0.35, 0.49, 0.5):
        for mode in ("uniform", "adaptive"):
            cases.append(dict(geometry="lshape2d", nu=nu, mode=mode, max_dofs=args.max_dofs_2d))
    if not args.skip_3d:
        cases.append(dict(geometry="lshape3d", nu=0.35, mode="adaptive", max_dofs=args.max_dofs_3d))
    base = dict(
        e_modulus=1.0, variant="auto", beta=args.beta, levels=None, num_eigs=None, eig_index=1,
        vtk_every=0, seed=args.seed, out=args.out, si_tol=1e-10, si_maxiter=50,
    )
    out = []
    for c in cases:
        v = dict(base)
        v.update(c)
        v["ref_omega"] = PAPER_OMEGA[c["geometry"]][c["nu"]]
        out.append(v)
    return out


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _check(label, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    return ok


def cmd_paper(args, parser):
    spec = ExperimentSpec(name="paper", cases=_paper_cases(args), out=Path(args.out), seed=args.seed)
    spec.out.mkdir(parents=True, exist_ok=True)
    workers = min(args.workers or max_workers(), len(spec.cases))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(execute_case, spec.cases))
    else:
        traces = [execute_case(c) for c in spec.cases]
    results = {(c["geometry"], c["nu"], c["mode"]): t for c, t in zip(spec.cases, traces)}
    ok_all = True

    rows = []
    for nu in (0.35, 0.49, 0.5):
        uni = results[("lshape2d", nu, "uniform")]
        ada = results[("lshape2d", nu, "adaptive")]
        k = min(6, len(uni.records))
        ex = extrapolate(uni.N[-k:], uni.omegas[-k:], 2) if k >= 4 else None
        ref = PAPER_OMEGA["lshape2d"][nu]
        final = ada.records[-1]
        diff = abs(final.omega_h - ref)
        ok = _check(f"table2 nu={nu:g}", diff <= TABLE_TOL, f"adaptive omega_1={final.omega_h:.6f} (N={final.N}) vs {ref}")
        ok_all &= ok
        rows.append([nu, ref, ex.omega if ex else math.nan, ex.alpha if ex else math.nan, final.omega_h, final.N, diff, ok])
    with open(spec.out / "table2.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["nu", "omega_paper", "omega_extrapolated", "alpha", "omega_adaptive_final", "N_final", "abs_diff", "pass"])
        for r in rows:
            wr.writerow([_fmt(v) for v in r])

    srows = []
    for (geo, nu, mode), tr in results.items():
        ref = PAPER_OMEGA[geo][nu]
        try:
            err_slope = fit_rate(tr, ref)
            eta_slope = fit_rate(tr, ref, "eta_sq")
        except ValueError:
            err_slope = eta_slope = math.nan
        paper = PAPER_SLOPES_2D.get((mode, nu)) if geo == "lshape2d" else None
        if geo == "lshape2d":
            lo, hi = ADAPTIVE_SLOPE_BAND if mode == "adaptive" else UNIFORM_SLOPE_BAND
            ok = lo <= err_slope <= hi
            if mode == "adaptive":
                ok = ok and ADAPTIVE_SLOPE_BAND[0] <= eta_slope <= ADAPTIVE_SLOPE_BAND[1]
            ok_all &= _check(f"slope {geo} nu={nu:g} {mode}", ok, f"err {err_slope:.3f}, eta^2 {eta_slope:.3f}")
        else:
            ok = None
        srows.append([geo, nu, mode, ref, err_slope, eta_slope, paper if paper is not None else "", "" if ok is None else ok])
    with open(spec.out / "slopes.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["geometry", "nu", "mode", "ref_omega", "err_slope", "eta_sq_slope", "paper_slope", "pass"])
        for r in srows:
            wr.writerow([_fmt(v) for v in r])

    if not args.skip_3d:
        tr = results[("lshape3d", 0.35, "adaptive")]
        final = tr.records[-1]
        ref = PAPER_OMEGA["lshape3d"][0.35]
        ok_all &= _check("3d nu=0.35", abs(final.omega_h - ref) < 5e-2, f"omega_1={final.omega_h:.6f} (N={final.N}) vs {ref}")
    if any(t.error for t in traces):
        return 1
    return 0 if ok_all or not args.strict else 2


def cmd_selftest(args, parser):
    from .selftest import run_selftest

    results = run_selftest()
    failed = [r for r in results if not r[1]]
    for name, ok, detail in results:
        if args.verbose or not ok:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print(f"{len(results) - len(failed)}/{len(results)} check groups passed")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="elastic-afem", description=__doc__)
    p.add_argument("-v", "--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one adaptive or uniform case")
    r.add_argument("--config", help="TOML file with flag values; explicit flags win")
    r.add_argument("--geometry", choices=sorted(GEOMETRIES))
    r.add_argument("--nu", type=float)
    r.add_argument("--e-modulus", type=float)
    r.add_argument("--mode", choices=["adaptive", "uniform"])
    r.add_argument("--variant", choices=["standard", "limit", "auto"])
    r.add_argument("--beta", type=float)
    r.add_argument("--max-dofs", type=int)
    r.add_argument("--levels", type=int, help="number of meshes to solve on")
    r.add_argument("--num-eigs", type=int)
    r.add_argument("--eig-index", type=int)
    r.add_argument("--ref-omega", type=float)
    r.add_argument("--vtk-every", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--si-tol", type=float)
    r.add_argument("--si-maxiter", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    pp = sub.add_parser("paper", help="reproduce the L-shape experiments")
    pp.add_argument("--out", default="out")
    pp.add_argument("--beta", type=float, default=0.5)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--max-dofs-2d", type=int, default=200_000)
    pp.add_argument("--max-dofs-3d", type=int, default=300_000)
    pp.add_argument("--skip-3d", action="store_true")
    pp.add_argument("--workers", type=int)
    pp.add_argument("--strict", action="store_true", help="exit 2 when a reproduction check fails")
    pp.set_defaults(func=cmd_paper)

    s = sub.add_parser("selftest", help="fast invariant checks on tiny meshes")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(message)s")
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
