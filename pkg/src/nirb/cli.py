"""Command-line front end: offline/online stages, error tables, leave-one-out
studies, and mesh-ladder convergence runs, all driven by one config file."""

from __future__ import annotations

import argparse
import os
import sys

from nirb import io, models, pipeline
from nirb.config import load_config


class CliError(Exception):
    """Failure with a stable slug for the machine-readable error line."""

    def __init__(self, slug, message):
        super().__init__(message)
        self.slug = slug


def _fail(slug, message):
    print(f"nirb: error [{slug}] {message}", file=sys.stderr)
    return 1


def _read_config(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise CliError("bad-config", f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError("bad-config", f"bad config {path}: {exc}") from exc


def _parse_param(config, text):
    if text is None:
        return config.test_parameter()
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise CliError("bad-parameter", f"cannot parse parameter {text!r}") from exc
    if config.problem == "heat":
        if len(values) != 1:
            raise CliError("bad-parameter",
                           "the heat problem takes a single diffusivity value")
        return values[0]
    if len(values) != 3:
        raise CliError("bad-parameter",
                       "the reaction-diffusion problem takes a,b,alpha")
    return tuple(values)


def _param_tag(config, param):
    if config.problem == "heat":
        return f"mu{param:g}"
    a, b, alpha = param
    return f"a{a:g}_b{b:g}_alpha{alpha:g}"


def _outdir(config):
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def cmd_offline(args):
    config = _read_config(args.config)
    artifacts = pipeline.offline(config, persist=True)
    path = os.path.join(config.output_dir, pipeline.ARTIFACT_FILE)
    picks = artifacts.basis.provenance.get("selected", [])
    print(f"offline complete: {artifacts.basis.N} modes from "
          f"{len(config.training_parameters())} training parameters")
    if picks:
        print("selected: " + ", ".join(pipeline.param_label(p)
                                       for p, _ in picks))
    print(f"artifacts written to {path}")
    return 0


def cmd_online(args):
    config = _read_config(args.config)
    artifacts = pipeline.load_artifacts(config)
    param = _parse_param(config, args.mu)
    mode = "plain" if args.plain else "rectified"
    try:
        result = pipeline.online(artifacts, param, mode=mode)
    except ValueError as exc:
        raise CliError("bad-parameter", str(exc)) from exc

    outdir = _outdir(config)
    tag = _param_tag(config, result.parameter)
    traj_path = os.path.join(outdir, f"online_{mode}_{tag}.traj")
    io.save_trajectory(traj_path, result.trajectory)
    print(f"online {mode} at {pipeline.param_label(result.parameter)}: "
          f"coarse solve {result.seconds_coarse:.3f}s, "
          f"reconstruction {result.seconds_reconstruct:.3f}s")
    print(f"trajectory written to {traj_path}")

    if config.problem == "heat" and float(result.parameter) == 1.0:
        forms = artifacts.context().fine.forms
        report = pipeline.evaluate_errors(
            result.trajectory,
            pipeline.AnalyticReference(models.manufactured_u,
                                       models.manufactured_grad),
            forms)
        rows = [["t", "err_l2", f"err_{report.energy_norm}"]]
        times = result.trajectory.grid.times()
        for k, t in enumerate(times):
            rows.append([t, report.l2_curve[k], report.energy_curve[k]])
        csv_path = os.path.join(outdir, f"online_{mode}_{tag}_errors.csv")
        io.write_csv(csv_path, rows)
        print(f"relative errors vs closed form: L2 {report.rel_l2:.6e}, "
              f"{report.energy_norm} {report.rel_energy:.6e}")
        print(f"error table written to {csv_path}")
    else:
        print("no closed-form reference at this parameter; "
              "use the errors command for a fine-solve comparison")
    return 0


def cmd_errors(args):
    config = _read_config(args.config)
    artifacts = pipeline.load_artifacts(config)
    param = _parse_param(config, args.mu)
    ctx = artifacts.context()
    try:
        fine_traj = pipeline.solve_fine(config, ctx.fine, param)
    except RuntimeError as exc:
        raise CliError("solver-failure", str(exc)) from exc
    coarse_traj = pipeline.solve_coarse(config, ctx.coarse, param,
                                        fine=ctx.fine)
    lifted = pipeline.lift_coarse(coarse_traj, artifacts.fine_mesh,
                                  artifacts.fine_grid)

    reports = {"coarse": pipeline.evaluate_errors(lifted, fine_traj,
                                                  ctx.fine.forms)}
    for mode, name in (("plain", "nirb"), ("rectified", "rect")):
        try:
            result = pipeline.online(artifacts, param, mode=mode,
                                     coarse_traj=coarse_traj)
        except ValueError as exc:
            raise CliError("bad-parameter", str(exc)) from exc
        reports[name] = pipeline.evaluate_errors(result.trajectory, fine_traj,
                                                 ctx.fine.forms)

    energy = reports["coarse"].energy_norm
    rows = [["t"] + [f"err_{m}_{n}" for m in ("coarse", "nirb", "rect")
                     for n in ("l2", energy)]]
    times = artifacts.fine_grid.times()
    for k, t in enumerate(times):
        row = [t]
        for m in ("coarse", "nirb", "rect"):
            row += [reports[m].l2_curve[k], reports[m].energy_curve[k]]
        rows.append(row)
    outdir = _outdir(config)
    tag = _param_tag(config, pipeline.param_key(config, param))
    csv_path = os.path.join(outdir, f"errors_{tag}.csv")
    io.write_csv(csv_path, rows)
    for m in ("coarse", "nirb", "rect"):
        print(f"{m}: relative L2 {reports[m].rel_l2:.6e}, "
              f"{energy} {reports[m].rel_energy:.6e}")
    print(f"error curves written to {csv_path}")
    return 0


def cmd_loo(args):
    config = _read_config(args.config)
    try:
        report = pipeline.leave_one_out(config)
    except RuntimeError as exc:
        raise CliError("solver-failure", str(exc)) from exc
    outdir = _outdir(config)
    csv_path = os.path.join(outdir, "loo.csv")
    io.write_csv(csv_path, report.csv_rows())
    print(f"leave-one-out over {len(report.rows)} parameters "
          f"({report.energy_norm} norm):")
    print(f"  max rectified error  {report.max_rectified:.6e}")
    print(f"  max projection error {report.max_projection:.6e}")
    print(f"  max coarse error     {report.max_coarse:.6e}")
    print(f"table written to {csv_path}")
    return 0


def cmd_study(args):
    config = _read_config(args.config)
    coupling = args.coupling or config.study_coupling
    try:
        report = pipeline.convergence_study(config, coupling)
    except RuntimeError as exc:
        raise CliError("solver-failure", str(exc)) from exc
    outdir = _outdir(config)
    csv_path = os.path.join(outdir, f"study_{coupling}.csv")
    io.write_csv(csv_path, report.csv_rows())
    print(f"convergence study, coupling {coupling}, "
          f"levels {list(config.study_levels)}:")
    for m in pipeline.METHODS:
        print(f"  {m}: {report.energy_norm} slope "
              f"{report.slopes[m, 'energy']:.3f}, "
              f"L2 slope {report.slopes[m, 'l2']:.3f}")
    print(f"table written to {csv_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nirb",
        description="Two-grid reduced-basis solver for parabolic problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="compute snapshots, basis, and "
                                       "rectification maps")
    p.add_argument("config")
    p.set_defaults(handler=cmd_offline)

    p = sub.add_parser("online", help="cheap solve at one parameter using "
                                      "stored artifacts")
    p.add_argument("config")
    p.add_argument("--mu", help="parameter value (heat: one float; "
                                "reaction-diffusion: a,b,alpha)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--plain", action="store_true",
                       help="skip the rectification maps")
    group.add_argument("--rectified", action="store_true",
                       help="apply the rectification maps (default)")
    p.set_defaults(handler=cmd_online)

    p = sub.add_parser("errors", help="error curves of every method against "
                                      "the fine solve")
    p.add_argument("config")
    p.add_argument("--mu")
    p.set_defaults(handler=cmd_errors)

    p = sub.add_parser("loo", help="leave-one-out error table over the "
                                   "training set")
    p.add_argument("config")
    p.set_defaults(handler=cmd_loo)

    p = sub.add_parser("study", help="mesh-ladder convergence study")
    p.add_argument("config")
    p.add_argument("--coupling", choices=("2h", "sqrt"))
    p.set_defaults(handler=cmd_study)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CliError as exc:
        return _fail(exc.slug, exc)
    except io.ArtifactError as exc:
        return _fail(exc.slug, exc)
    except RuntimeError as exc:
        return _fail("solver-failure", exc)
    except ValueError as exc:
        return _fail("invalid-input", exc)


if __name__ == "__main__":
    sys.exit(main())
