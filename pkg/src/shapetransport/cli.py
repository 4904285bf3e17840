"""Command-line interface.

Subcommands: shoot, transport, register, regress, exp-parallelize,
convergence, oracle-check.  Every subcommand accepts --config pointing at a
flat key=value file whose keys mirror the long flag names; explicit flags
override file values.  Exit codes: 0 success, 1 usage error, 2 numeric
failure (blow-up or ill-conditioning).
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .kernels import KernelConfig, KernelSolveError
from .oracle import oracle_transport
from .pointio import format_float, read_config, read_point_set, write_config, write_point_set
from .registration import (
    FitConfig,
    FitDivergenceError,
    TimedShape,
    TimeReparam,
    exp_parallelize,
    fit_geodesic,
    regression_constraints,
    reparametrize_time,
)
from .shooting import BlowupError, GeodesicState, IntegratorConfig, flow_shape, shoot
from .transport import (
    VARIANTS,
    ConservationError,
    parallel_transport,
    relative_k_error,
    variant_config,
)

_NUMERIC_ERRORS = (
    BlowupError,
    KernelSolveError,
    ConservationError,
    FitDivergenceError,
    np.linalg.LinAlgError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _index_width(count: int) -> int:
    return max(4, len(str(count)))


def _parse_floats(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise _UsageError(f"expected comma-separated numbers, got {text!r}: {exc}") from exc


def _parse_ints(text):
    values = _parse_floats(text)
    out = [int(v) for v in values]
    if any(i != v for i, v in zip(out, values)):
        raise _UsageError(f"expected comma-separated integers, got {text!r}")
    return out


class _Options:
    """Merged view of CLI flags over an optional key=value config file."""

    def __init__(self, args):
        self.args = vars(args)
        self.file = {}
        if self.args.get("config"):
            self.file = read_config(self.args["config"])

    def get(self, key, default=None, convert=str, required=False):
        flag = self.args.get(key.replace("-", "_"))
        if flag is not None:
            return flag
        if key in self.file:
            raw = self.file[key]
            try:
                if convert is bool:
                    return raw.strip().lower() in ("1", "true", "yes", "on")
                return convert(raw)
            except ValueError as exc:
                raise _UsageError(f"bad config value {key}={raw!r}: {exc}") from exc
        if required and default is None:
            raise _UsageError(f"missing required option --{key}")
        return default


def _kernel(opts) -> KernelConfig:
    sigma = opts.get("sigma", convert=float, required=True)
    try:
        return KernelConfig(sigma=sigma)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _load_points(opts, key, required=True):
    path = opts.get(key, required=required)
    if path is None:
        return None
    return read_point_set(path)


def _out_dir(opts):
    import os

    out = opts.get("out", required=True)
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path, header, rows):
    lines = [header]
    lines.extend(",".join(row) for row in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_shoot(opts):
    import os

    kcfg = _kernel(opts)
    c0 = _load_points(opts, "cp")
    a0 = _load_points(opts, "mom")
    steps = opts.get("steps", 10, convert=int)
    order = opts.get("order", 2, convert=int)
    horizon = opts.get("time", 1.0, convert=float)
    shape = _load_points(opts, "shape", required=False)
    out = _out_dir(opts)
    path = shoot(GeodesicState(c0, horizon * a0), IntegratorConfig(steps=steps, order=order), kcfg)
    width = _index_width(steps)
    for k, state in enumerate(path.states):
        write_point_set(os.path.join(out, f"cp_{k:0{width}d}.txt"), state.c)
        write_point_set(os.path.join(out, f"mom_{k:0{width}d}.txt"), state.alpha)
    write_point_set(os.path.join(out, "control_points.txt"), path.states[0].c)
    write_point_set(os.path.join(out, "momenta.txt"), path.states[0].alpha)
    cfg = {"sigma": format_float(kcfg.sigma), "steps": str(steps), "order": str(order)}
    if shape is not None:
        flows = flow_shape(path, shape)
        for k in range(len(path.states)):
            write_point_set(os.path.join(out, f"shape_{k:0{width}d}.txt"), flows[k])
        write_point_set(os.path.join(out, "shape.txt"), shape)
    write_config(os.path.join(out, "run.cfg"), cfg)
    return 0


def _cmd_transport(opts):
    import os

    kcfg = _kernel(opts)
    c0 = _load_points(opts, "cp")
    a0 = _load_points(opts, "mom")
    omega0 = _load_points(opts, "omega")
    steps = opts.get("steps", 100, convert=int)
    variant = opts.get("variant", "main")
    if variant not in VARIANTS:
        raise _UsageError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    out = _out_dir(opts)
    result = parallel_transport(GeodesicState(c0, a0), omega0, variant_config(variant, steps), kcfg)
    width = _index_width(steps)
    for k, omega in enumerate(result.omegas):
        write_point_set(os.path.join(out, f"omega_{k:0{width}d}.txt"), omega)
    rows = [
        (str(k), format_float(result.sq_norms[k]), format_float(result.pairings[k]))
        for k in range(len(result.omegas))
    ]
    _write_csv(os.path.join(out, "diagnostics.csv"), "step,norm,pairing", rows)
    write_config(
        os.path.join(out, "run.cfg"),
        {"sigma": format_float(kcfg.sigma), "steps": str(steps), "variant": variant},
    )
    return 0


def _fit_config(opts):
    steps = opts.get("steps", 10, convert=int)
    order = opts.get("order", 2, convert=int)
    return FitConfig(
        max_iters=opts.get("max-iters", 500, convert=int),
        step_size=opts.get("step-size", 1.0, convert=float),
        tolerance=opts.get("tolerance", 1e-10, convert=float),
        integrator=IntegratorConfig(steps=steps, order=order),
        optimize_control_points=opts.get("optimize-cp", False, convert=bool),
    )


def _write_fit(out, kcfg, fcfg, result, baseline):
    import os

    write_point_set(os.path.join(out, "momenta.txt"), result.state.alpha)
    write_point_set(os.path.join(out, "control_points.txt"), result.state.c)
    write_point_set(os.path.join(out, "shape.txt"), baseline)
    rows = [(str(i), format_float(loss)) for i, loss in enumerate(result.losses)]
    _write_csv(os.path.join(out, "loss_history.csv"), "iteration,loss", rows)
    write_config(
        os.path.join(out, "run.cfg"),
        {
            "sigma": format_float(kcfg.sigma),
            "steps": str(fcfg.integrator.steps),
            "order": str(fcfg.integrator.order),
            "max-iters": str(fcfg.max_iters),
            "step-size": format_float(fcfg.step_size),
            "tolerance": format_float(fcfg.tolerance),
            "optimize-cp": str(fcfg.optimize_control_points).lower(),
        },
    )


def _cmd_register(opts):
    kcfg = _kernel(opts)
    source = _load_points(opts, "source")
    target = _load_points(opts, "target")
    c0 = _load_points(opts, "cp")
    fcfg = _fit_config(opts)
    if source.shape != target.shape:
        raise _UsageError(f"source shape {source.shape} != target shape {target.shape}")
    out = _out_dir(opts)
    result = fit_geodesic(c0, source, [(fcfg.integrator.steps, target)], fcfg, kcfg)
    _write_fit(out, kcfg, fcfg, result, source)
    return 0


def _cmd_regress(opts):
    kcfg = _kernel(opts)
    baseline = _load_points(opts, "baseline")
    c0 = _load_points(opts, "cp")
    fcfg = _fit_config(opts)
    specs = opts.args.get("obs") or []
    observations = []
    for spec in specs:
        if "," not in spec:
            raise _UsageError(f"--obs expects FILE,TIME, got {spec!r}")
        path, _, timestr = spec.rpartition(",")
        try:
            t = float(timestr)
        except ValueError as exc:
            raise _UsageError(f"bad observation time in {spec!r}: {exc}") from exc
        observations.append(TimedShape(points=read_point_set(path), time=t))
    try:
        constraints = regression_constraints(observations, fcfg.integrator.steps)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    out = _out_dir(opts)
    result = fit_geodesic(c0, baseline, constraints, fcfg, kcfg)
    _write_fit(out, kcfg, fcfg, result, baseline)
    return 0


def _cmd_exp_parallelize(opts):
    import os

    ref_dir = opts.get("reference", required=True)
    ref_cfg = read_config(os.path.join(ref_dir, "run.cfg"))
    merged = dict(ref_cfg)
    merged.update(opts.file)
    opts.file = merged
    kcfg = _kernel(opts)
    c0 = read_point_set(os.path.join(ref_dir, "control_points.txt"))
    a0 = read_point_set(os.path.join(ref_dir, "momenta.txt"))
    shape_path = os.path.join(ref_dir, "shape.txt")
    if not os.path.exists(shape_path):
        raise _UsageError(f"reference directory {ref_dir} has no shape.txt to carry")
    baseline = read_point_set(shape_path)
    omega0 = _load_points(opts, "omega")
    steps = opts.get("steps", 100, convert=int)
    variant = opts.get("variant", "main")
    if variant not in VARIANTS:
        raise _UsageError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    tcfg = variant_config(variant, steps)
    rp = TimeReparam(
        tau=opts.get("onset", 0.0, convert=float), rho=opts.get("pace", 1.0, convert=float)
    )
    subject_times = _parse_floats(opts.get("times", required=True))
    ref_times = [reparametrize_time(t, rp, 0.0) for t in subject_times]
    for t_sub, t_ref in zip(subject_times, ref_times):
        if not 0.0 <= t_ref <= 1.0:
            raise _UsageError(
                f"subject time {t_sub} maps to reference time {t_ref} outside [0, 1]"
            )
    out = _out_dir(opts)
    path = shoot(GeodesicState(c0, a0), IntegratorConfig(steps=steps, order=tcfg.main_order), kcfg)
    predictions = exp_parallelize(path, omega0, ref_times, baseline, tcfg, kcfg)
    width = max(2, len(str(max(len(ref_times) - 1, 0))))
    rows = []
    for idx, (t_sub, t_ref) in enumerate(zip(subject_times, ref_times)):
        node = int(np.floor(t_ref * steps + 0.5))
        write_point_set(os.path.join(out, f"prediction_{idx:0{width}d}.txt"), predictions[idx])
        rows.append((str(idx), format_float(t_sub), format_float(t_ref), str(node)))
    _write_csv(os.path.join(out, "schedule.csv"), "index,subject_time,reference_time,node", rows)
    write_config(
        os.path.join(out, "run.cfg"),
        {
            "sigma": format_float(kcfg.sigma),
            "steps": str(steps),
            "variant": variant,
            "onset": format_float(rp.tau),
            "pace": format_float(rp.rho),
        },
    )
    return 0


def _cmd_convergence(opts):
    kcfg = _kernel(opts)
    c0 = _load_points(opts, "cp")
    a0 = _load_points(opts, "mom")
    omega0 = _load_points(opts, "omega")
    grid = sorted(set(_parse_ints(opts.get("grid", "10,25,50,100,200,400,800,1600"))))
    if not grid:
        raise _UsageError("empty N grid")
    variants = [v.strip() for v in opts.get("variants", "main,wec,rk4,spg").split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise _UsageError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    out = opts.get("out", required=True)
    s0 = GeodesicState(c0, a0)
    ref_n = max(grid)
    reference = parallel_transport(s0, omega0, variant_config("main", ref_n), kcfg)
    c_ref = reference.states[-1].c
    records = []
    for variant in variants:
        for n in grid:
            t0 = time.perf_counter()
            if variant == "main" and n == ref_n:
                result = reference
            else:
                result = parallel_transport(s0, omega0, variant_config(variant, n), kcfg)
            wall = time.perf_counter() - t0
            err = relative_k_error(result.omega_final, reference.omega_final, c_ref, kcfg)
            records.append((variant, n, err, wall))
    records.sort(key=lambda rec: (rec[0], rec[1]))
    rows = [
        (variant, str(n), format_float(err), f"{wall:.3f}")
        for variant, n, err, wall in records
    ]
    _write_csv(out, "variant,N,relative_error,wall_time_seconds", rows)
    return 0


def _cmd_oracle_check(opts):
    kcfg = _kernel(opts)
    c0 = _load_points(opts, "cp")
    a0 = _load_points(opts, "mom")
    omega0 = _load_points(opts, "omega")
    fine = opts.get("fine", 10000, convert=int)
    grid = sorted(set(_parse_ints(opts.get("grid", "10,25,50,100,200,400"))))
    out = opts.get("out", required=True)
    s0 = GeodesicState(c0, a0)
    try:
        omega_oracle, final = oracle_transport(s0, omega0, fine, kcfg)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    rows = []
    for n in grid:
        result = parallel_transport(s0, omega0, variant_config("main", n), kcfg)
        err = relative_k_error(result.omega_final, omega_oracle, final.c, kcfg)
        rows.append((str(n), format_float(err)))
    _write_csv(out, "N,relative_error", rows)
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="key=value file supplying defaults for the flags")
    sub.add_argument("--sigma", type=float, help="Gaussian kernel width")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shapetransport", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("shoot", help="integrate a geodesic and optionally carry a shape")
    _add_common(p)
    p.add_argument("--cp", help="control-point file")
    p.add_argument("--mom", help="momenta file")
    p.add_argument("--steps", type=int, help="number of time steps (default 10)")
    p.add_argument("--order", type=int, choices=(2, 4), help="integrator order (default 2)")
    p.add_argument("--time", type=float, help="time horizon, applied by momenta scaling (default 1)")
    p.add_argument("--shape", help="optional passive shape file to carry")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_shoot)

    p = subs.add_parser("transport", help="parallel-transport momenta along a geodesic")
    _add_common(p)
    p.add_argument("--cp", help="control-point file")
    p.add_argument("--mom", help="geodesic momenta file")
    p.add_argument("--omega", help="momenta to transport")
    p.add_argument("--steps", type=int, help="number of fanning steps (default 100)")
    p.add_argument("--variant", choices=VARIANTS, help="scheme variant (default main)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_transport)

    for name, extra in (("register", ("--source", "--target")), ("regress", ("--baseline",))):
        p = subs.add_parser(
            name,
            help="fit a geodesic to landmark data"
            + (" at t=1" if name == "register" else " at observed times"),
        )
        _add_common(p)
        for flag in extra:
            p.add_argument(flag, help=f"{flag[2:]} shape file")
        if name == "regress":
            p.add_argument(
                "--obs",
                action="append",
                help="observation as FILE,TIME; repeat for each observation",
            )
        p.add_argument("--cp", help="control-point file")
        p.add_argument("--steps", type=int, help="integrator steps (default 10)")
        p.add_argument("--order", type=int, choices=(2, 4), help="integrator order (default 2)")
        p.add_argument("--max-iters", type=int, help="gradient-descent iteration cap (default 500)")
        p.add_argument("--step-size", type=float, help="initial gradient step (default 1)")
        p.add_argument("--tolerance", type=float, help="relative loss-decrease stop (default 1e-10)")
        p.add_argument(
            "--optimize-cp", action="store_const", const=True, help="also optimize control points"
        )
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=_cmd_register if name == "register" else _cmd_regress)

    p = subs.add_parser(
        "exp-parallelize", help="predict a trajectory exp-parallel to a reference geodesic"
    )
    _add_common(p)
    p.add_argument("--reference", help="directory produced by shoot/regress (reference geodesic)")
    p.add_argument("--omega", help="registration momenta to transport")
    p.add_argument("--times", help="comma-separated subject times to predict at")
    p.add_argument("--onset", type=float, help="subject onset time tau (default 0)")
    p.add_argument("--pace", type=float, help="subject pace rho (default 1)")
    p.add_argument("--steps", type=int, help="transport steps (default 100)")
    p.add_argument("--variant", choices=VARIANTS, help="transport variant (default main)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_exp_parallelize)

    p = subs.add_parser("convergence", help="error-vs-N study against the largest-N main run")
    _add_common(p)
    p.add_argument("--cp", help="control-point file")
    p.add_argument("--mom", help="geodesic momenta file")
    p.add_argument("--omega", help="momenta to transport")
    p.add_argument("--grid", help="comma-separated step counts (default 10,...,1600)")
    p.add_argument("--variants", help="comma-separated variants (default main,wec,rk4,spg)")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=_cmd_convergence)

    p = subs.add_parser("oracle-check", help="fanning vs Christoffel-symbol oracle errors")
    _add_common(p)
    p.add_argument("--cp", help="control-point file")
    p.add_argument("--mom", help="geodesic momenta file")
    p.add_argument("--omega", help="momenta to transport")
    p.add_argument("--fine", type=int, help="oracle integration steps (default 10000)")
    p.add_argument("--grid", help="comma-separated fanning step counts")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _Options(args)
        return args.func(opts)
    except _UsageError as exc:
        print(f"shapetransport: error: {exc}", file=sys.stderr)
        return 1
    except _NUMERIC_ERRORS as exc:
        print(f"shapetransport: numeric failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"shapetransport: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
