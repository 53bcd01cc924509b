"""Two-grid reduced-order pipeline: offline snapshot/basis/rectification
construction, the cheap online stage, error evaluation, leave-one-out tables,
and mesh-ladder convergence studies."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from nirb import io, models
from nirb.fem import assemble, difference_norms, norms, ritz_projection
from nirb.integrators import (FieldTrajectory, TimeGrid, brusselator_trajectory,
                              heat_backward_euler, heat_crank_nicolson)
from nirb.mesh import build_structured, interpolate_field
from nirb.rectification import (apply_rectification, build_rectification,
                                coarse_to_fine_coefficients)
from nirb.reduced_basis import (coefficients, greedy, h1_reorthogonalize,
                                hierarchical_pod, mass_inner, pod_greedy,
                                reconstruct)
from nirb.time_interp import quadratic_time_interp

log = logging.getLogger(__name__)

ARTIFACT_FILE = "artifacts.nirb"


def worker_count(n_items):
    """Number of parallel workers: min(items, NIRB_THREADS or cpu count)."""
    env = os.environ.get("NIRB_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(n_items, cap))


def parallel_map(fn, items):
    """Order-preserving map, threaded across items when allowed."""
    items = list(items)
    workers = worker_count(len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class Discretization:
    """One mesh with its assembled forms and time grid."""

    mesh: object
    forms: object
    grid: TimeGrid


def discretize(config):
    """Build the fine and coarse discretizations of a study."""
    bc = "dirichlet_zero" if config.problem == "heat" else "neumann_natural"
    out = []
    for which in ("fine", "coarse"):
        nx, ny = config.mesh_counts(which)
        mesh = build_structured(nx, ny, domain=tuple(config.domain))
        steps = config.fine_steps if which == "fine" else config.coarse_steps
        grid = TimeGrid(config.t0, config.T, steps)
        out.append(Discretization(mesh=mesh, forms=assemble(mesh, bc), grid=grid))
    return out[0], out[1]


def heat_initial_fine(config, fine, mu):
    """Fine-mesh initial data for the heat problem at t0.

    Runs start from rest at t = 0.  A window with t0 > 0 starts from the
    Ritz projection of the closed-form solution at mu = 1 and otherwise
    from a source-driven implicit-Euler presolve of [0, t0] on the fine
    mesh, started at zero with the window's own fine step size."""
    n = fine.mesh.n_nodes
    if config.t0 == 0.0:
        return np.zeros(n)
    if mu == 1.0:
        return ritz_projection(
            fine.forms, lambda x, y: models.manufactured_grad(config.t0, x, y),
            cg_tol=min(config.cg_tol, 1e-12))
    steps = max(1, round(config.t0 / fine.grid.dt))
    pre = TimeGrid(0.0, config.t0, steps)
    traj = heat_backward_euler(fine.forms, mu, models.manufactured_f,
                               np.zeros(n), pre, cg_tol=config.cg_tol)
    return traj.values[-1]


def heat_initial_coarse(config, fine, coarse_mesh, mu):
    """Coarse-mesh initial data: nodal interpolation of the closed form at
    mu = 1, of the fine presolve state otherwise.

    Both grids start the window from the same field (up to interpolation),
    which keeps the coarse trajectory of an unseen parameter on the same
    branch as the training pairs the rectification was fitted on."""
    if config.t0 == 0.0:
        return np.zeros(coarse_mesh.n_nodes)
    if mu == 1.0:
        x, y = coarse_mesh.nodes[:, 0], coarse_mesh.nodes[:, 1]
        return models.manufactured_u(config.t0, x, y)
    u0 = heat_initial_fine(config, fine, mu)
    return interpolate_field(fine.mesh, u0, coarse_mesh)


def solve_fine(config, disc, param):
    """High-fidelity trajectory at one parameter (heat: implicit Euler;
    reaction-diffusion: Newton implicit Euler)."""
    if config.problem == "heat":
        mu = float(param)
        u0 = heat_initial_fine(config, disc, mu)
        return heat_backward_euler(disc.forms, mu, models.manufactured_f, u0,
                                   disc.grid, cg_tol=config.cg_tol)
    prob = models.BrusselatorProblem(*param)
    return brusselator_trajectory(disc.forms, tuple(param),
                                  prob.initial_state(disc.mesh), disc.grid,
                                  scheme="newton", newton_tol=config.newton_tol)


def solve_coarse(config, disc, param, fine=None):
    """Cheap trajectory at one parameter (heat: Crank-Nicolson;
    reaction-diffusion: explicit midpoint on the lumped system).

    Heat windows with t0 > 0 need the fine discretization to produce the
    initial data presolve for parameters without a closed form."""
    if config.problem == "heat":
        mu = float(param)
        if config.t0 > 0.0 and mu != 1.0 and fine is None:
            raise ValueError("coarse heat solve at t0 > 0 needs the fine "
                             "discretization for its initial data")
        u0 = heat_initial_coarse(config, fine, disc.mesh, mu)
        return heat_crank_nicolson(disc.forms, mu, models.manufactured_f, u0,
                                   disc.grid, cg_tol=config.cg_tol)
    prob = models.BrusselatorProblem(*param)
    return brusselator_trajectory(disc.forms, tuple(param),
                                  prob.initial_state(disc.mesh), disc.grid,
                                  scheme="rk2")


def _solve_sweep(config, disc, params, which, fine=None):
    """Solve every training parameter, in parallel, as an ordered dict."""

    def one(p):
        try:
            if which == "fine":
                return solve_fine(config, disc, p)
            return solve_coarse(config, disc, p, fine)
        except (RuntimeError, ValueError) as exc:
            raise RuntimeError(f"{which} solve failed at parameter {p}: {exc}") from exc

    return dict(zip(params, parallel_map(one, params)))


def build_basis(config, trajectories, forms):
    """Run the configured selection loop and optional H1 rotation."""
    if config.rb_algorithm == "pod_greedy":
        basis = pod_greedy(trajectories, forms, config.n_max,
                           pod_tol=config.pod_tol)
    elif config.rb_algorithm == "pod":
        basis = hierarchical_pod(trajectories, forms, config.n_max)
    else:
        basis = greedy(trajectories, forms, config.greedy_tol, config.n_max)
    if basis.N == 0:
        raise RuntimeError("basis construction produced no modes")
    if config.h1_reorthonormalize:
        basis = h1_reorthogonalize(basis, forms)
    return basis


@dataclass
class OnlineContext:
    """Assembled forms for both meshes, rebuilt from persisted artifacts."""

    fine: Discretization
    coarse: Discretization


@dataclass
class OfflineArtifacts:
    """Everything the online stage needs, plus a config echo.

    The context (assembled matrices) is derived data: it is rebuilt on demand
    after loading from disk and never persisted."""

    config: object
    fine_mesh: object
    coarse_mesh: object
    fine_grid: TimeGrid
    coarse_grid: TimeGrid
    basis: object
    tensor: object
    _ctx: OnlineContext = field(default=None, repr=False, compare=False)

    def validate(self):
        if self.basis.N != self.tensor.N:
            raise ValueError(f"basis has {self.basis.N} modes but the "
                             f"rectification maps are {self.tensor.N}-dimensional")
        if self.tensor.n_times != self.fine_grid.steps + 1:
            raise ValueError(f"{self.tensor.n_times} rectification maps for "
                             f"{self.fine_grid.steps + 1} fine time knots")
        for g in (self.coarse_grid,):
            if g.t0 != self.fine_grid.t0 or g.T != self.fine_grid.T:
                raise ValueError("fine and coarse grids span different windows")
        if self.basis.modes.shape[1] != self.basis.n_fields * self.fine_mesh.n_nodes:
            raise ValueError("basis width does not match the fine mesh")
        return self

    def context(self):
        if self._ctx is None:
            bc = ("dirichlet_zero" if self.config.problem == "heat"
                  else "neumann_natural")
            self._ctx = OnlineContext(
                fine=Discretization(self.fine_mesh, assemble(self.fine_mesh, bc),
                                    self.fine_grid),
                coarse=Discretization(self.coarse_mesh,
                                      assemble(self.coarse_mesh, bc),
                                      self.coarse_grid))
        return self._ctx


def offline(config, fine_trajs=None, coarse_trajs=None, persist=True):
    """Offline stage: fine snapshots, basis, coarse snapshots, rectification.

    Precomputed trajectory dicts may be passed to reuse solves across
    repeated builds (leave-one-out, basis-size sweeps); only the configured
    training parameters are taken from them.  With persist=True the artifact
    file and the coarse training trajectories land in config.output_dir."""
    config.validate()
    fine, coarse = discretize(config)
    params = config.training_parameters()
    if not params:
        raise ValueError("empty training set")

    if fine_trajs is None:
        fine_trajs = _solve_sweep(config, fine, params, "fine")
    else:
        fine_trajs = {p: fine_trajs[p] for p in params}
    if coarse_trajs is None:
        coarse_trajs = _solve_sweep(config, coarse, params, "coarse", fine=fine)
    else:
        coarse_trajs = {p: coarse_trajs[p] for p in params}

    basis = build_basis(config, fine_trajs, fine.forms)
    log.info("basis built: N=%d from %d training parameters", basis.N, len(params))

    if config.delta_mode == "relative":
        delta, delta_factor = None, config.delta_value
    else:
        delta, delta_factor = config.delta_value, 0.0
    tensor = build_rectification(fine_trajs, coarse_trajs, basis, fine.forms,
                                 fine.grid, delta=delta, delta_factor=delta_factor)

    artifacts = OfflineArtifacts(
        config=config, fine_mesh=fine.mesh, coarse_mesh=coarse.mesh,
        fine_grid=fine.grid, coarse_grid=coarse.grid, basis=basis,
        tensor=tensor, _ctx=OnlineContext(fine=fine, coarse=coarse)).validate()

    if persist:
        outdir = config.output_dir
        os.makedirs(outdir, exist_ok=True)
        io.save_artifacts(os.path.join(outdir, ARTIFACT_FILE), artifacts)
        for i, p in enumerate(params):
            io.save_trajectory(os.path.join(outdir, f"coarse_{i:03d}.traj"),
                               coarse_trajs[p])
    return artifacts


def load_artifacts(config):
    """Load the persisted artifacts of a study from its output directory."""
    return io.load_artifacts(os.path.join(config.output_dir, ARTIFACT_FILE))


@dataclass
class OnlineResult:
    """Online trajectory with its coefficients and the wall-clock split."""

    parameter: object
    mode: str
    trajectory: FieldTrajectory
    coefficients: np.ndarray
    seconds_coarse: float
    seconds_reconstruct: float


def param_key(config, param):
    if config.problem == "heat":
        return float(param)
    a, b, alpha = param
    return (float(a), float(b), float(alpha))


def online(artifacts, param, mode="rectified", coarse_traj=None,
           strict_bounds=None):
    """Online stage at one parameter: coarse solve, time and space lifting,
    projection onto the modes, optional rectification, reconstruction.

    A precomputed coarse trajectory short-circuits the solve (its wall-clock
    share is then reported as zero)."""
    if mode not in ("plain", "rectified"):
        raise ValueError(f"unknown online mode {mode!r}")
    config = artifacts.config
    key = param_key(config, param)
    strict = config.strict_bounds if strict_bounds is None else strict_bounds
    if not config.parameter_in_bounds(key):
        message = f"parameter {key} is outside the configured bounds"
        if strict:
            raise ValueError(message)
        log.warning(message)

    ctx = artifacts.context()
    t_start = time.perf_counter()
    if coarse_traj is None:
        coarse_traj = solve_coarse(config, ctx.coarse, key, fine=ctx.fine)
    seconds_coarse = time.perf_counter() - t_start

    t_start = time.perf_counter()
    coeffs = coarse_to_fine_coefficients(coarse_traj, artifacts.basis,
                                         ctx.fine.forms, artifacts.fine_grid)
    if mode == "rectified":
        coeffs = apply_rectification(artifacts.tensor, coeffs)
    values = reconstruct(artifacts.basis, coeffs)
    trajectory = FieldTrajectory(mesh=artifacts.fine_mesh,
                                 grid=artifacts.fine_grid, values=values,
                                 parameter=key, n_fields=artifacts.basis.n_fields)
    seconds_reconstruct = time.perf_counter() - t_start
    log.info("online %s at %s: coarse solve %.3fs, reconstruction %.3fs",
             mode, key, seconds_coarse, seconds_reconstruct)
    return OnlineResult(parameter=key, mode=mode, trajectory=trajectory,
                        coefficients=coeffs, seconds_coarse=seconds_coarse,
                        seconds_reconstruct=seconds_reconstruct)


def lift_coarse(coarse_traj, fine_mesh, fine_grid):
    """Coarse trajectory carried to the fine discretization: quadratic time
    interpolation, then componentwise P1 interpolation in space."""
    lifted = quadratic_time_interp(coarse_traj, fine_grid)
    src = lifted.mesh
    if src is fine_mesh or (src.n_nodes == fine_mesh.n_nodes
                            and np.array_equal(src.nodes, fine_mesh.nodes)):
        values = lifted.values
    else:
        values = np.concatenate(
            [interpolate_field(src, p, fine_mesh) for p in lifted.split_fields()],
            axis=-1)
    return FieldTrajectory(mesh=fine_mesh, grid=fine_grid, values=values,
                           parameter=coarse_traj.parameter,
                           n_fields=coarse_traj.n_fields)


@dataclass
class ErrorReport:
    """Relative sup-in-time errors plus the per-knot absolute curves.

    The energy norm is the H1 seminorm for Dirichlet problems and the full
    H1 norm for Neumann ones; multi-component fields combine their species
    in quadrature and also report per-species relatives."""

    parameter: object
    energy_norm: str
    rel_l2: float
    rel_energy: float
    l2_curve: np.ndarray
    energy_curve: np.ndarray
    ref_l2_sup: float
    ref_energy_sup: float
    field_rel_l2: tuple = ()
    field_rel_energy: tuple = ()


@dataclass(frozen=True)
class AnalyticReference:
    """Closed-form reference u(t, x, y), optionally with its gradient.

    With the gradient supplied, error norms integrate the continuous
    difference by the midpoint rule.  Without it the reference is sampled
    at the nodes, which on structured meshes measures the superconvergent
    distance to the interpolant instead of the O(h) energy error, so prefer
    passing the gradient whenever rates matter."""

    u: object
    grad: object = None

    def __call__(self, t, x, y):
        return self.u(t, x, y)


def _norm_curves(forms, values, n_fields, energy):
    """Per-knot (L2, energy) curves of stacked fields, combined and split."""
    parts = np.split(np.asarray(values, dtype=float), n_fields, axis=-1)
    l2_f, en_f = [], []
    for p in parts:
        l2, h1 = norms(forms, p)
        l2_f.append(l2)
        en_f.append(np.sqrt(l2 ** 2 + h1 ** 2) if energy == "h1" else h1)
    l2_f = np.stack(l2_f)
    en_f = np.stack(en_f)
    return (np.sqrt((l2_f ** 2).sum(0)), np.sqrt((en_f ** 2).sum(0)),
            l2_f, en_f)


def _rel(err_sup, ref_sup):
    if ref_sup > 0.0:
        return err_sup / ref_sup
    return 0.0 if err_sup == 0.0 else math.inf


def evaluate_errors(candidate, reference, forms):
    """Relative sup-in-time errors of a trajectory against a reference.

    The reference is another trajectory on the same mesh and grid, or a
    callable u(t, x, y) sampled at the nodes (single-component only).
    Relative errors divide the sup-in-time error by the sup-in-time
    reference norm, so a uniformly scaled candidate c = (1+s) u reports s
    exactly in every norm."""
    n_fields = candidate.n_fields
    if callable(reference):
        if n_fields != 1:
            raise ValueError("analytic references support single fields only")
        grad = getattr(reference, "grad", None)
        if grad is not None:
            energy = "h10" if forms.bc == "dirichlet_zero" else "h1"
            rows = [difference_norms(forms, candidate.values[k], reference,
                                     grad, t)
                    for k, t in enumerate(candidate.grid.times())]
            el2, eh1, rl2, rh1 = (np.asarray(v) for v in zip(*rows))
            if energy == "h1":
                een = np.sqrt(el2 ** 2 + eh1 ** 2)
                ren = np.sqrt(rl2 ** 2 + rh1 ** 2)
            else:
                een, ren = eh1, rh1
            rel_l2 = _rel(el2.max(), rl2.max())
            rel_en = _rel(een.max(), ren.max())
            return ErrorReport(
                parameter=candidate.parameter if candidate.parameter
                is not None else "analytic",
                energy_norm=energy, rel_l2=rel_l2, rel_energy=rel_en,
                l2_curve=el2, energy_curve=een,
                ref_l2_sup=float(rl2.max()), ref_energy_sup=float(ren.max()),
                field_rel_l2=(rel_l2,), field_rel_energy=(rel_en,))
        x, y = candidate.mesh.nodes[:, 0], candidate.mesh.nodes[:, 1]
        ref_values = np.stack([reference(t, x, y)
                               for t in candidate.grid.times()])
        ref_param = "analytic"
    else:
        if reference.mesh.n_nodes != candidate.mesh.n_nodes:
            raise ValueError("candidate and reference live on different meshes")
        if (reference.grid.steps != candidate.grid.steps
                or abs(reference.grid.t0 - candidate.grid.t0) > 1e-12
                or abs(reference.grid.T - candidate.grid.T) > 1e-12):
            raise ValueError("candidate and reference time grids differ")
        if reference.n_fields != n_fields:
            raise ValueError("candidate and reference field counts differ")
        ref_values = reference.values
        ref_param = reference.parameter

    energy = "h10" if forms.bc == "dirichlet_zero" else "h1"
    err_l2, err_en, err_l2_f, err_en_f = _norm_curves(
        forms, candidate.values - ref_values, n_fields, energy)
    ref_l2, ref_en, ref_l2_f, ref_en_f = _norm_curves(
        forms, ref_values, n_fields, energy)

    return ErrorReport(
        parameter=candidate.parameter if candidate.parameter is not None
        else ref_param,
        energy_norm=energy,
        rel_l2=_rel(err_l2.max(), ref_l2.max()),
        rel_energy=_rel(err_en.max(), ref_en.max()),
        l2_curve=err_l2, energy_curve=err_en,
        ref_l2_sup=float(ref_l2.max()), ref_energy_sup=float(ref_en.max()),
        field_rel_l2=tuple(_rel(e.max(), r.max())
                           for e, r in zip(err_l2_f, ref_l2_f)),
        field_rel_energy=tuple(_rel(e.max(), r.max())
                               for e, r in zip(err_en_f, ref_en_f)))


def projection_errors(basis, forms, traj):
    """Relative sup-in-time (L2, energy) error of reprojecting a trajectory
    onto the basis span."""
    proj = reconstruct(basis, coefficients(basis, forms, traj.values))
    projected = FieldTrajectory(mesh=traj.mesh, grid=traj.grid, values=proj,
                                parameter=traj.parameter, n_fields=traj.n_fields)
    report = evaluate_errors(projected, traj, forms)
    return report.rel_l2, report.rel_energy


def heat_reference(config, fine, param, fine_traj=None):
    """Reference trajectory for error reporting: the closed-form solution
    when it applies (mu = 1), otherwise the fine solve itself."""
    if config.problem == "heat" and float(param) == 1.0:
        return AnalyticReference(models.manufactured_u, models.manufactured_grad)
    if fine_traj is not None:
        return fine_traj
    return solve_fine(config, fine, param)


@dataclass
class LooRow:
    parameter: object
    rectified: float
    projection: float
    coarse: float


@dataclass
class LooReport:
    """Leave-one-out table: held-out rectified error, in-sample projection
    error of the full-set basis, and lifted-coarse error, all relative
    sup-in-time energy-norm values, with column maxima."""

    energy_norm: str
    rows: list
    max_rectified: float
    max_projection: float
    max_coarse: float

    def csv_rows(self):
        head = ["parameter", "err_rectified", "err_projection", "err_coarse"]
        out = [head]
        for r in self.rows:
            out.append([param_label(r.parameter), r.rectified, r.projection,
                        r.coarse])
        out.append(["max", self.max_rectified, self.max_projection,
                    self.max_coarse])
        return out


def param_label(param):
    if isinstance(param, tuple):
        return "(" + ", ".join(f"{v:g}" for v in param) + ")"
    return f"{param:g}"


def leave_one_out(config):
    """Hold out each training parameter in turn, rebuild the offline stage
    on the rest, and measure the rectified online error at the held-out
    point against its fine solve."""
    config.validate()
    params = config.training_parameters()
    if len(params) < 2:
        raise ValueError("leave-one-out needs at least two training parameters")
    fine, coarse = discretize(config)
    fine_trajs = _solve_sweep(config, fine, params, "fine")
    coarse_trajs = _solve_sweep(config, coarse, params, "coarse", fine=fine)

    basis_full = build_basis(config, fine_trajs, fine.forms)

    def held_out(k):
        rest = [p for p in params if p != params[k]]
        sub_fine = {p: fine_trajs[p] for p in rest}
        sub_coarse = {p: coarse_trajs[p] for p in rest}
        basis = build_basis(config, sub_fine, fine.forms)
        if config.delta_mode == "relative":
            delta, factor = None, config.delta_value
        else:
            delta, factor = config.delta_value, 0.0
        tensor = build_rectification(sub_fine, sub_coarse, basis, fine.forms,
                                     fine.grid, delta=delta, delta_factor=factor)
        coeffs = coarse_to_fine_coefficients(coarse_trajs[params[k]], basis,
                                             fine.forms, fine.grid)
        coeffs = apply_rectification(tensor, coeffs)
        traj = FieldTrajectory(mesh=fine.mesh, grid=fine.grid,
                               values=reconstruct(basis, coeffs),
                               parameter=params[k], n_fields=basis.n_fields)
        return evaluate_errors(traj, fine_trajs[params[k]], fine.forms).rel_energy

    rect_errors = parallel_map(held_out, range(len(params)))

    rows = []
    for k, p in enumerate(params):
        _, proj_en = projection_errors(basis_full, fine.forms, fine_trajs[p])
        lifted = lift_coarse(coarse_trajs[p], fine.mesh, fine.grid)
        coarse_en = evaluate_errors(lifted, fine_trajs[p], fine.forms).rel_energy
        rows.append(LooRow(parameter=p, rectified=rect_errors[k],
                           projection=proj_en, coarse=coarse_en))

    energy = "h10" if config.problem == "heat" else "h1"
    return LooReport(energy_norm=energy, rows=rows,
                     max_rectified=max(r.rectified for r in rows),
                     max_projection=max(r.projection for r in rows),
                     max_coarse=max(r.coarse for r in rows))


@dataclass
class StudyLevel:
    """Errors of the four methods at one rung of the mesh ladder."""

    n: int
    h: float
    H: float
    dt_fine: float
    dt_coarse: float
    errors: dict  # (method, norm) -> relative error


METHODS = ("fine", "coarse", "nirb", "rect")


@dataclass
class StudyReport:
    """Ladder of per-level errors with least-squares log-log slopes in h."""

    coupling: str
    parameter: object
    energy_norm: str
    levels: list
    slopes: dict

    def csv_rows(self):
        head = ["level", "h", "H", "dtF", "dtG"]
        head += [f"err_{m}_h1" for m in METHODS]
        head += [f"err_{m}_l2" for m in METHODS]
        out = [head]
        for lv in self.levels:
            row = [lv.n, lv.h, lv.H, lv.dt_fine, lv.dt_coarse]
            row += [lv.errors[m, "energy"] for m in METHODS]
            row += [lv.errors[m, "l2"] for m in METHODS]
            out.append(row)
        slope_row = ["slope", "", "", "", ""]
        slope_row += [self.slopes[m, "energy"] for m in METHODS]
        slope_row += [self.slopes[m, "l2"] for m in METHODS]
        out.append(slope_row)
        return out


def loglog_slope(h, err):
    """Least-squares slope of log(err) against log(h) over all usable levels."""
    x, y = [], []
    for hi, ei in zip(h, err):
        if math.isfinite(ei) and ei > 0.0:
            x.append(math.log(hi))
            y.append(math.log(ei))
    n = len(x)
    if n < 2:
        return math.nan
    sx, sy = sum(x), sum(y)
    sxx = sum(v * v for v in x)
    sxy = sum(u * v for u, v in zip(x, y))
    denom = n * sxx - sx * sx
    return (n * sxy - sx * sy) / denom


def level_config(config, n, coupling):
    """Derive one ladder rung: fine counts n, coarse counts per coupling.

    '2h' halves the mesh count and the step count; 'sqrt' couples the coarse
    width and step to the square root of the fine ones, so halving h in
    space costs only a factor sqrt(2) on the coarse side."""
    span = config.T - config.t0
    fine_steps = max(1, round(span * n))
    if coupling == "2h":
        if n % 2:
            raise ValueError(f"the 2h coupling needs even mesh counts, got {n}")
        coarse_nx = n // 2
        coarse_steps = max(2, fine_steps // 2)
    elif coupling == "sqrt":
        coarse_nx = max(2, round(math.sqrt(n)))
        coarse_steps = max(2, round(span * math.sqrt(n)))
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    return replace(config, fine_nx=n, fine_ny=0, coarse_nx=coarse_nx,
                   coarse_ny=0, fine_steps=fine_steps,
                   coarse_steps=coarse_steps)


def convergence_study(config, coupling=None):
    """Run the mesh ladder and collect fine, coarse, plain, and rectified
    errors per level, plus their log-log slopes in h."""
    config.validate()
    coupling = coupling or config.study_coupling
    if len(config.study_levels) < 1:
        raise ValueError("empty mesh ladder")
    test_param = config.test_parameter()
    levels = []
    energy = "h10" if config.problem == "heat" else "h1"

    for n in config.study_levels:
        cfg = level_config(config, n, coupling)
        artifacts = offline(cfg, persist=False)
        ctx = artifacts.context()
        fine_traj = solve_fine(cfg, ctx.fine, test_param)
        reference = heat_reference(cfg, ctx.fine, test_param, fine_traj)
        coarse_traj = solve_coarse(cfg, ctx.coarse, test_param, fine=ctx.fine)

        errors = {}
        if callable(reference):
            rep = evaluate_errors(fine_traj, reference, ctx.fine.forms)
            errors["fine", "l2"], errors["fine", "energy"] = rep.rel_l2, rep.rel_energy
        else:
            errors["fine", "l2"] = errors["fine", "energy"] = 0.0
        lifted = lift_coarse(coarse_traj, artifacts.fine_mesh, artifacts.fine_grid)
        rep = evaluate_errors(lifted, reference, ctx.fine.forms)
        errors["coarse", "l2"], errors["coarse", "energy"] = rep.rel_l2, rep.rel_energy
        for mode, name in (("plain", "nirb"), ("rectified", "rect")):
            result = online(artifacts, test_param, mode=mode,
                            coarse_traj=coarse_traj)
            rep = evaluate_errors(result.trajectory, reference, ctx.fine.forms)
            errors[name, "l2"], errors[name, "energy"] = rep.rel_l2, rep.rel_energy

        levels.append(StudyLevel(n=n, h=ctx.fine.mesh.h, H=ctx.coarse.mesh.h,
                                 dt_fine=ctx.fine.grid.dt,
                                 dt_coarse=ctx.coarse.grid.dt, errors=errors))
        log.info("level %d done: rect %s error %.3e", n, energy,
                 errors["rect", "energy"])

    hs = [lv.h for lv in levels]
    slopes = {}
    for m in METHODS:
        for nm in ("l2", "energy"):
            slopes[m, nm] = loglog_slope(hs, [lv.errors[m, nm] for lv in levels])
    return StudyReport(coupling=coupling, parameter=test_param,
                       energy_norm=energy, levels=levels, slopes=slopes)
