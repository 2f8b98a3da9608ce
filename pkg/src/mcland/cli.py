"""Command-line front end.

Four subcommands: `gen` materializes an instance record, `solve` runs one
solver and certifies the endpoint, `scan` certifies endpoints from many
random starts, `conc` sweeps a concentration experiment over a p grid.
Configs are strict JSON (unknown keys are errors); outputs are CSV files
with deterministic bytes, so a rerun of the same config is byte-identical
regardless of --threads.

Exit codes: 0 success, 1 failed --assert-clean, 2 config error, 3 internal
error.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import solvers
from .certify import CertTolerances, PointClass, certify_point, landscape_scan, scan_to_csv
from .concentration import ConcentrationTrial, Kind, fit_scaling, run_concentration, trials_to_csv
from .instance import InstanceSpec, default_hyperparams, HyperParams
from .objective import ObjectiveConfig


class ConfigError(Exception):
    pass


_MISSING = object()


def _type_name(spec):
    return " or ".join(t.__name__ for t in spec)


def _get(block, path, key, types, default=_MISSING, allow_none=False):
    if key not in block:
        if default is _MISSING:
            raise ConfigError(f"missing required key '{path}.{key}'")
        return default
    val = block.pop(key)
    if val is None and allow_none:
        return None
    if isinstance(val, bool) and bool not in types:
        raise ConfigError(f"'{path}.{key}' must be {_type_name(types)}, got a boolean")
    if not isinstance(val, tuple(types)):
        raise ConfigError(f"'{path}.{key}' must be {_type_name(types)}, got {type(val).__name__}")
    return val


def _check_empty(block, path):
    if block:
        key = sorted(block)[0]
        raise ConfigError(f"unknown key '{path}.{key}'")


def _number(block, path, key, default=_MISSING, allow_none=False):
    v = _get(block, path, key, (int, float), default=default, allow_none=allow_none)
    return float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _parse_instance(cfg):
    block = cfg.pop("instance", _MISSING)
    if block is _MISSING:
        raise ConfigError("missing required block 'instance'")
    if not isinstance(block, dict):
        raise ConfigError("'instance' must be an object")
    block = dict(block)
    try:
        spec = InstanceSpec(
            d=_get(block, "instance", "d", (int,)),
            r=_get(block, "instance", "r", (int,)),
            seed=_get(block, "instance", "seed", (int,)),
            scale=_number(block, "instance", "scale", default=1.0),
            p=_number(block, "instance", "p"),
            sigma=_number(block, "instance", "sigma", default=0.0),
            include_diagonal=_get(block, "instance", "include_diagonal", (bool,), default=True),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid instance block: {exc}") from exc
    _check_empty(block, "instance")
    return spec


def _parse_hyper(cfg, gt, p):
    block = cfg.pop("hyper", None)
    base = default_hyperparams(gt, p)
    if block is None:
        return base
    if not isinstance(block, dict):
        raise ConfigError("'hyper' must be an object")
    block = dict(block)
    alpha = _number(block, "hyper", "alpha", default=base.alpha)
    weight = _number(block, "hyper", "lambda", default=base.reg_weight)
    tau = _number(block, "hyper", "tau", default=base.tau)
    _check_empty(block, "hyper")
    try:
        return HyperParams(alpha=alpha, reg_weight=weight, tau=tau)
    except ValueError as exc:
        raise ConfigError(f"invalid hyper block: {exc}") from exc


def _parse_solver(cfg):
    block = cfg.pop("solver", None)
    if block is None:
        return solvers.SolverConfig()
    if not isinstance(block, dict):
        raise ConfigError("'solver' must be an object")
    block = dict(block)
    method = _get(block, "solver", "method", (str,), default="gd")
    try:
        method = solvers.Method(method)
    except ValueError as exc:
        names = ", ".join(m.value for m in solvers.Method)
        raise ConfigError(f"'solver.method' must be one of: {names}") from exc

    kwargs = dict(
        method=method,
        max_iters=_get(block, "solver", "max_iters", (int,), default=20000),
        grad_tol=_number(block, "solver", "grad_tol", default=None, allow_none=True),
        seed=_get(block, "solver", "seed", (int,), default=0),
    )
    sub = _get(block, "solver", "armijo", (dict,), default=None, allow_none=True)
    if sub is not None:
        sub = dict(sub)
        kwargs["armijo"] = solvers.ArmijoParams(
            c1=_number(sub, "solver.armijo", "c1", default=1e-4),
            backtrack=_number(sub, "solver.armijo", "backtrack", default=0.5),
            step0=_number(sub, "solver.armijo", "step0", default=None, allow_none=True),
        )
        _check_empty(sub, "solver.armijo")
    sub = _get(block, "solver", "sgd", (dict,), default=None, allow_none=True)
    if sub is not None:
        sub = dict(sub)
        kwargs["sgd"] = solvers.SgdParams(
            batch=_get(sub, "solver.sgd", "batch", (int,), default=64),
            step_base=_number(sub, "solver.sgd", "step_base", default=None, allow_none=True),
            step_decay=_number(sub, "solver.sgd", "step_decay", default=1e-3),
        )
        _check_empty(sub, "solver.sgd")
    sub = _get(block, "solver", "perturb", (dict,), default=None, allow_none=True)
    if sub is not None:
        sub = dict(sub)
        kwargs["perturb"] = solvers.PerturbParams(
            radius=_number(sub, "solver.perturb", "radius", default=None, allow_none=True),
            trigger_grad_norm=_number(
                sub, "solver.perturb", "trigger_grad_norm", default=None, allow_none=True
            ),
            cooldown_iters=_get(sub, "solver.perturb", "cooldown_iters", (int,), default=100),
        )
        _check_empty(sub, "solver.perturb")
    _check_empty(block, "solver")
    try:
        return solvers.SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid solver block: {exc}") from exc


def _parse_scan(cfg):
    block = cfg.pop("scan", _MISSING)
    if block is _MISSING:
        raise ConfigError("missing required block 'scan'")
    if not isinstance(block, dict):
        raise ConfigError("'scan' must be an object")
    block = dict(block)
    n_starts = _get(block, "scan", "n_starts", (int,))
    base_seed = _get(block, "scan", "base_seed", (int,))
    global_rel = _number(block, "scan", "global_rel", default=1e-2)
    _check_empty(block, "scan")
    if n_starts < 1:
        raise ConfigError("'scan.n_starts' must be >= 1")
    return n_starts, base_seed, CertTolerances(global_rel=global_rel)


def _parse_concentration(cfg):
    block = cfg.pop("concentration", _MISSING)
    if block is _MISSING:
        raise ConfigError("missing required block 'concentration'")
    if not isinstance(block, dict):
        raise ConfigError("'concentration' must be an object")
    block = dict(block)
    kind = _get(block, "concentration", "kind", (str,))
    try:
        kind = Kind(kind)
    except ValueError as exc:
        names = ", ".join(k.value for k in Kind)
        raise ConfigError(f"'concentration.kind' must be one of: {names}") from exc
    d = _get(block, "concentration", "d", (int,))
    r = _get(block, "concentration", "r", (int,), default=1)
    p_grid = _get(block, "concentration", "p_grid", (list,))
    sigma = _number(block, "concentration", "sigma", default=1.0)
    trials = _get(block, "concentration", "trials", (int,), default=50)
    seed = _get(block, "concentration", "seed", (int,), default=0)
    _check_empty(block, "concentration")
    if not p_grid or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in p_grid):
        raise ConfigError("'concentration.p_grid' must be a non-empty list of numbers")
    specs = []
    for p in p_grid:
        try:
            specs.append(
                ConcentrationTrial(kind=kind, d=d, p=float(p), r=r, sigma=sigma, trials=trials, seed=seed)
            )
        except ValueError as exc:
            raise ConfigError(f"invalid concentration block: {exc}") from exc
    return specs


def _fmt(x):
    return repr(float(x))


def cmd_gen(cfg, out_dir, threads):
    spec = _parse_instance(cfg)
    _check_empty(cfg, "config")
    try:
        gt, obs = spec.regenerate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    hyper = default_hyperparams(gt, spec.p)
    (out_dir / "instance.json").write_text(spec.to_json())
    print(f"mu={_fmt(gt.incoherence)}")
    print(f"kappa={_fmt(gt.condition_number)}")
    print(f"alpha={_fmt(hyper.alpha)}")
    print(f"lambda={_fmt(hyper.reg_weight)}")
    print(f"tau={_fmt(hyper.tau)}")
    print(f"observed_pairs={obs.mask.n_pairs}")
    return 0


def cmd_solve(cfg, out_dir, threads):
    spec = _parse_instance(cfg)
    try:
        gt, obs = spec.regenerate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    hyper = _parse_hyper(cfg, gt, spec.p)
    scfg = _parse_solver(cfg)
    _check_empty(cfg, "config")
    ocfg = ObjectiveConfig(hyper, obs)
    X0 = solvers.random_init(spec.d, spec.r, obs, scfg.seed)
    res = solvers.solve(ocfg, scfg, X0)
    tols = CertTolerances(global_rel=1e-3 if spec.sigma == 0 else 1e-2)
    rep = certify_point(res.X, ocfg, gt, tols)
    with open(out_dir / "trace.csv", "w", newline="") as fh:
        solvers.trace_to_csv(res.trace, fh)
    print(f"status={res.status.value}")
    print(f"f={_fmt(res.f)}")
    print(f"grad_norm={_fmt(res.grad_norm)}")
    print(f"lambda_min={_fmt(rep.lambda_min)}")
    print(f"recovery_fro={_fmt(rep.recovery_fro)}")
    print(f"classification={rep.classification.value}")
    return 0


def cmd_scan(cfg, out_dir, threads, assert_clean=False):
    spec = _parse_instance(cfg)
    try:
        gt, obs = spec.regenerate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    hyper = _parse_hyper(cfg, gt, spec.p)
    scfg = _parse_solver(cfg)
    n_starts, base_seed, tols = _parse_scan(cfg)
    _check_empty(cfg, "config")
    summary = landscape_scan(
        gt, obs, hyper, scfg, n_starts=n_starts, base_seed=base_seed, tols=tols, threads=threads
    )
    with open(out_dir / "scan.csv", "w", newline="") as fh:
        scan_to_csv(summary, fh)
    for cls in PointClass:
        print(f"{cls.value}={summary.counts[cls]}")
    print(f"worst_recovery={_fmt(summary.worst_recovery)}")
    spurious = summary.counts[PointClass.SPURIOUS_LOCAL_MIN]
    if assert_clean and spurious > 0:
        print(f"assert-clean failed: {spurious} spurious endpoint(s)", file=sys.stderr)
        return 1
    return 0


def cmd_conc(cfg, out_dir, threads):
    specs = _parse_concentration(cfg)
    _check_empty(cfg, "config")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_concentration, specs))
    else:
        results = [run_concentration(s) for s in specs]
    with open(out_dir / "conc.csv", "w", newline="") as fh:
        trials_to_csv(results, fh)
    points = [(res.spec.p * res.spec.d, res.median_normalized) for res in results]
    try:
        fit = fit_scaling(points)
    except ValueError as exc:
        print(f"fit=skipped ({exc})")
        return 0
    if fit.degenerate:
        print("fit=degenerate")
    else:
        print(f"slope={_fmt(fit.slope)}")
        print(f"r2={_fmt(fit.r2)}")
    return 0


_COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "scan": cmd_scan, "conc": cmd_conc}


def _build_parser():
    parser = argparse.ArgumentParser(prog="mcland", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config file")
        p.add_argument("--out", default=".", help="output directory (created if absent)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results unchanged)")
        if name == "scan":
            p.add_argument(
                "--assert-clean",
                action="store_true",
                help="exit nonzero if any endpoint classifies as a spurious local minimum",
            )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        cfg = _load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "scan":
            return cmd_scan(cfg, out_dir, args.threads, assert_clean=args.assert_clean)
        return _COMMANDS[args.command](cfg, out_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure: report and exit 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
