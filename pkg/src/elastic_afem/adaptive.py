"""The solve -> estimate -> mark -> refine loop, rate fits and extrapolation."""
from dataclasses import asdict, dataclass, field
import csv
import logging
import math
import time

import numpy as np
from scipy.optimize import least_squares

from .assembly import assemble_system, material
from .eigensolver import SolverOptions, solve_eigs, spectral_gap
from .estimator import estimate, resolve_variant
from .mesh import GEOMETRIES, preset_mesh
from .postprocess import superconvergence_probe

log = logging.getLogger(__name__)

CSV_HEADER = ["iter", "N", "num_cells", "omega_h", "eta_sq", "err", "eff", "num_marked", "wall_ms"]


class MarkingError(ValueError):
    pass


@dataclass
class MarkSet:
    marked: np.ndarray
    beta: float

    def __len__(self):
        return len(self.marked)


def mark_maximal(field, beta=0.5):
    """Cells whose indicator eta_T reaches beta times the largest one.

    ``field`` is an EstimatorField or an array of per-cell eta_T^2.
    """
    if not 0 < beta < 1:
        raise MarkingError(f"beta must lie in (0, 1), got {beta}")
    eta_sq = field.per_cell if hasattr(field, "per_cell") else np.asarray(field, dtype=float)
    eta = np.sqrt(eta_sq)
    top = eta.max() if eta.size else 0.0
    if top <= 0:
        raise MarkingError("cannot mark from an all-zero estimator")
    return MarkSet(marked=np.flatnonzero(eta >= beta * top), beta=beta)


@dataclass
class AdaptiveConfig:
    geometry: str = "lshape2d"
    nu: float = 0.35
    E: float = 1.0
    eig_index: int = 1
    beta: float = 0.5
    max_dofs: int = None
    max_iters: int = 200
    variant: str = "auto"
    mode: str = "adaptive"
    num_eigs: int = None
    ref_omega: float = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eig_index < 1:
            raise ValueError("eig_index counts from 1")
        if self.max_dofs is None:
            self.max_dofs = 200_000 if GEOMETRIES[self.geometry][0] == 2 else 300_000
        if self.num_eigs is None:
            self.num_eigs = max(self.eig_index, 2)
        if self.num_eigs < self.eig_index:
            raise ValueError("num_eigs must be at least eig_index")


@dataclass
class IterationRecord:
    iter: int
    N: int
    num_cells: int
    omega_h: float
    eta_sq: float
    num_marked: int
    wall_ms: float
    err: float = math.nan
    eff: float = math.nan
    gap: float = math.nan
    theta_term: float = math.nan
    marked_centroids: np.ndarray = field(default=None, repr=False)


@dataclass
class AdaptiveTrace:
    config: AdaptiveConfig
    records: list = field(default_factory=list)
    final_mesh: object = None
    final_solution: object = None
    final_estimator: object = None
    error: str = None

    @property
    def N(self):
        return np.array([r.N for r in self.records], dtype=float)

    @property
    def omegas(self):
        return np.array([r.omega_h for r in self.records])

    @property
    def eta_sq(self):
        return np.array([r.eta_sq for r in self.records])

    def errors(self, ref_omega=None):
        ref = self.config.ref_omega if ref_omega is None else ref_omega
        return np.abs(self.omegas - ref)

    def set_reference(self, ref_omega):
        self.config.ref_omega = ref_omega
        for r in self.records:
            r.err = abs(r.omega_h - ref_omega)
            r.eff = r.err / r.eta_sq if r.eta_sq > 0 else math.nan

    def rows(self):
        return [[getattr(r, k) for k in CSV_HEADER] for r in self.records]


def _next_mesh(mesh, config, est):
    if config.mode == "uniform":
        return mesh.uniform_refine(), np.arange(mesh.num_cells)
    marks = mark_maximal(est, config.beta)
    return mesh.refine(marks.marked), marks.marked


def run(config, mesh=None, callback=None):
    """Run the adaptive (or uniform) loop until the dof budget is spent.

    Only meshes with at most ``max_dofs`` unknowns are solved.  Solver or mesh
    errors stop the loop; the partial trace is returned with ``error`` set.
    """
    mat = material(config.E, config.nu)
    variant = resolve_variant(mat, config.variant)
    mesh = preset_mesh(config.geometry) if mesh is None else mesh
    trace = AdaptiveTrace(config=config)
    idx = config.eig_index - 1
    for it in range(config.max_iters):
        t0 = time.perf_counter()
        try:
            form = "limit" if variant == "limit" else "deviatoric"
            sys = assemble_system(mesh, mat, form=form)
            if sys.num_dofs > config.max_dofs and trace.records:
                break
            sol = solve_eigs(sys, config.num_eigs, config.solver)
            est = estimate(mesh, sol.rho_coeffs[idx], sol.u_coeffs[idx], mat, variant)
            gap = spectral_gap(sol, idx) if len(sol) > 1 else math.nan
            if len(sol) > 1 and gap < 1e-8 * sol.kappas[idx]:
                log.warning("eigenvalue %d is not separated (gap %.3g)", config.eig_index, gap)
            if it + 1 < config.max_iters:
                new_mesh, marked = _next_mesh(mesh, config, est)
            else:
                new_mesh, marked = None, np.empty(0, dtype=np.int64)
        except Exception as exc:  # keep whatever was computed so far
            log.error("iteration %d failed: %s", it, exc)
            trace.error = f"{type(exc).__name__}: {exc}"
            break
        wall = (time.perf_counter() - t0) * 1e3
        rec = IterationRecord(
            iter=it,
            N=sys.num_dofs,
            num_cells=mesh.num_cells,
            omega_h=float(sol.omegas[idx]),
            eta_sq=est.global_sq,
            num_marked=len(marked),
            wall_ms=round(wall, 3),
            gap=gap,
            theta_term=float(np.sqrt(est.terms[:, 0].sum())),
            marked_centroids=mesh.centroids[marked],
        )
        trace.records.append(rec)
        trace.final_mesh, trace.final_solution, trace.final_estimator = mesh, sol, est
        log.info("iter %d  N=%d  omega=%.8f  eta^2=%.3e", it, rec.N, rec.omega_h, rec.eta_sq)
        if callback is not None:
            callback(trace, mesh, sol, est)
        if new_mesh is None:
            break
        mesh = new_mesh
    if config.ref_omega is not None:
        trace.set_reference(config.ref_omega)
    return trace


def fit_loglog(x, y):
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lx = np.log(x)
    if len(x) < 2 or np.ptp(lx) == 0:
        raise ValueError("degenerate abscissas for a slope fit")
    slope, _ = np.polyfit(lx, np.log(y), 1)
    return float(slope)


def tail_window(count):
    return max(4, math.ceil(count / 2))


def fit_rate(trace, ref_omega, quantity="err"):
    """Slope of log|omega_h - ref| (or log eta^2) vs log N over the trailing iterations."""
    N = trace.N if hasattr(trace, "N") else np.asarray(trace[0], dtype=float)
    if quantity == "err":
        om = trace.omegas if hasattr(trace, "omegas") else np.asarray(trace[1], dtype=float)
        y = np.abs(om - ref_omega)
    elif quantity == "eta_sq":
        y = trace.eta_sq if hasattr(trace, "eta_sq") else np.asarray(trace[1], dtype=float)
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    if len(N) < 4:
        raise ValueError("need at least four iterations to fit a rate")
    k = tail_window(len(N))
    if np.any(y[-k:] == 0):
        raise ValueError("reference equals a computed value exactly")
    return fit_loglog(N[-k:], y[-k:])


@dataclass
class Extrapolation:
    omega: float
    C: float
    alpha: float
    residual: float
    success: bool


def extrapolate(N, omegas, dim):
    """Fit omega_h = omega + C N^(-a) and report alpha = dim * a as the h-exponent."""
    N = np.asarray(N, dtype=float)
    w = np.asarray(omegas, dtype=float)
    if len(N) < 4:
        raise ValueError("need at least four levels to extrapolate")
    a0 = 0.5
    C0 = (w[0] - w[-1]) / (N[0] ** -a0 - N[-1] ** -a0)
    # scale the model so all parameters are O(1)
    Nref = N[0]

    def resid(p):
        return p[0] + p[1] * (N / Nref) ** (-p[2]) - w

    p0 = np.array([w[-1], C0 * Nref**-a0, a0])
    sol = least_squares(resid, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    om, c, a = sol.x
    return Extrapolation(
        omega=float(om),
        C=float(c * Nref**a),
        alpha=float(dim * a),
        residual=float(np.linalg.norm(sol.fun)),
        success=bool(sol.success),
    )


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for r in trace.rows():
            wr.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


def read_trace_csv(path):
    """Read a trace CSV back into a list of dicts with native types."""
    ints = {"iter", "N", "num_cells", "num_marked"}
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected trace header {rd.fieldnames}")
        for row in rd:
            out.append({k: int(v) if k in ints else float(v) for k, v in row.items()})
    return out


def config_dict(config):
    d = asdict(config)
    d["solver"] = asdict(config.solver)
    return d


__all__ = [
    "AdaptiveConfig",
    "AdaptiveTrace",
    "CSV_HEADER",
    "Extrapolation",
    "MarkSet",
    "MarkingError",
    "extrapolate",
    "fit_loglog",
    "fit_rate",
    "mark_maximal",
    "read_trace_csv",
    "run",
    "superconvergence_probe",
    "write_trace_csv",
]
