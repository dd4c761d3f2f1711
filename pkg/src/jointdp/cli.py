"""Command-line front end.

Subcommands: compare, sweep, user-sweep, stability, calibrate, gen. Runs are
configured by a TOML file with sections [task], [problem], [domain], [loss],
[optimizer], [sweep], [output]; --seed, --out, --repetitions and
--eval-samples override the file. Results go to <out>/results.csv (fixed
column set, deterministic bytes) and <out>/runs.jsonl (full run records
including wall time). The JOINTDP_OUT environment variable supplies the
default output directory.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import harness
from .data import ProblemSpec, generate, save_federation
from .harness import ExperimentConfig, LossSpec, OptSpec, SweepSpec, TaskSpec
from .params import ConfigurationError, DomainSpec
from .privacy import PrivacySpec, budget_report, make_noise_plan, no_privacy


def _section(doc: dict, name: str) -> dict:
    sec = doc.pop(name, {})
    if not isinstance(sec, dict):
        raise ConfigurationError(f"config section [{name}] must be a table")
    return dict(sec)


def _take(sec: dict, key: str, default):
    return sec.pop(key, default)


def _check_empty(sec: dict, name: str) -> None:
    if sec:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(sec)}")


def load_config(path: str) -> tuple[ExperimentConfig, str | None]:
    """Parse a TOML experiment config; returns (config, output dir or None)."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)

    task_sec = _section(doc, "task")
    task = TaskSpec(
        kind=_take(task_sec, "kind", "shared_mean"),
        noise_scale=float(_take(task_sec, "noise_scale", 0.1)),
        heterogeneity=float(_take(task_sec, "heterogeneity", 0.5)),
        shared_offset=float(_take(task_sec, "shared_offset", 0.75)),
        seed=int(_take(task_sec, "seed", 0)),
    )
    _check_empty(task_sec, "task")

    prob_sec = _section(doc, "problem")
    n = int(_take(prob_sec, "n", 4))
    m = int(_take(prob_sec, "m", 16))
    r = int(_take(prob_sec, "r", 0))
    _check_empty(prob_sec, "problem")

    dom_sec = _section(doc, "domain")
    domain = DomainSpec(
        n=n,
        k=int(_take(dom_sec, "k", 1)),
        ell=int(_take(dom_sec, "ell", 8)),
        d_x=float(_take(dom_sec, "d_x", 1.0)),
        d_u=float(_take(dom_sec, "d_u", 2.0)),
    )
    _check_empty(dom_sec, "domain")

    loss_sec = _section(doc, "loss")
    loss = LossSpec(
        kind=_take(loss_sec, "kind", "shared_mean_norm"),
        mu=float(_take(loss_sec, "mu", 0.1)),
        feature_bound=float(_take(loss_sec, "feature_bound", 1.0)),
    )
    _check_empty(loss_sec, "loss")

    opt_sec = _section(doc, "optimizer")
    opt = OptSpec(
        paradigm=_take(opt_sec, "paradigm", "joint_dp"),
        epsilon=float(_take(opt_sec, "epsilon", 1.0)),
        delta=float(_take(opt_sec, "delta", 1e-5)),
        level=_take(opt_sec, "level", "auto"),
        T=int(_take(opt_sec, "T", 0)),
        eta=float(_take(opt_sec, "eta", 0.0)),
        gamma=float(_take(opt_sec, "gamma", 0.0)),
        privatize_shared_only=bool(_take(opt_sec, "privatize_shared_only", False)),
        force_zero_noise=bool(_take(opt_sec, "force_zero_noise", False)),
        init=_take(opt_sec, "init", "origin"),
    )
    _check_empty(opt_sec, "optimizer")

    sweep_sec = _section(doc, "sweep")
    sweep = None
    if sweep_sec:
        axes_tab = _take(sweep_sec, "axes", {})
        axes = tuple((name, tuple(values)) for name, values in axes_tab.items())
        sweep = SweepSpec(
            axes=axes,
            mode=_take(sweep_sec, "mode", "product"),
            fit_against=tuple(_take(sweep_sec, "fit_against", ())),
        )
        _check_empty(sweep_sec, "sweep")

    out_sec = _section(doc, "output")
    out_dir = _take(out_sec, "dir", None)
    repetitions = int(_take(out_sec, "repetitions", 20))
    eval_samples = int(_take(out_sec, "eval_samples", 2000))
    base_seed = int(_take(out_sec, "seed", 0))
    t_cap = int(_take(out_sec, "t_cap", 1_000_000))
    compute_phi_opt = bool(_take(out_sec, "compute_phi_opt", False))
    _check_empty(out_sec, "output")
    _check_empty(doc, "config")

    cfg = ExperimentConfig(
        domain=domain,
        m=m,
        r=r,
        task=task,
        loss=loss,
        opt=opt,
        repetitions=repetitions,
        eval_samples=eval_samples,
        base_seed=base_seed,
        t_cap=t_cap,
        compute_phi_opt=compute_phi_opt,
        sweep=sweep,
    )
    return cfg, out_dir


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    if getattr(args, "repetitions", None) is not None:
        cfg = dataclasses.replace(cfg, repetitions=args.repetitions)
    if getattr(args, "eval_samples", None) is not None:
        cfg = dataclasses.replace(cfg, eval_samples=args.eval_samples)
    return cfg


def _out_dir(args: argparse.Namespace, cfg_dir: str | None) -> Path:
    path = getattr(args, "out", None) or cfg_dir or os.environ.get("JOINTDP_OUT") or "runs"
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_outputs(reports, out: Path) -> None:
    harness.write_csv(reports, str(out / "results.csv"))
    harness.write_jsonl(reports, str(out / "runs.jsonl"))
    print(f"wrote {len(reports)} runs to {out / 'results.csv'} and {out / 'runs.jsonl'}")


def _summarize(reports) -> None:
    by_key: dict[tuple, list] = {}
    for rep in reports:
        by_key.setdefault((rep.paradigm, rep.n, rep.m, rep.r, rep.ell, rep.epsilon), []).append(rep)
    for key, group in sorted(by_key.items()):
        paradigm, n, m, r, ell, eps = key
        losses = [g.excess_loss for g in group]
        mean = sum(losses) / len(losses)
        print(
            f"{paradigm:>15}  n={n:<4} m={m:<5} r={r:<5} ell={ell:<5} eps={eps:<6g} "
            f"mean_excess={mean:.6g} over {len(group)} seeds (bound {group[0].bound_value:.4g})"
        )


def cmd_compare(args: argparse.Namespace) -> int:
    cfg, cfg_dir = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out = _out_dir(args, cfg_dir)
    reports = harness.compare_paradigms(cfg, jobs=args.jobs)
    _write_outputs(reports, out)
    _summarize(reports)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg, cfg_dir = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out = _out_dir(args, cfg_dir)
    reports, fits = harness.scaling_sweep(cfg, jobs=args.jobs)
    _write_outputs(reports, out)
    _summarize(reports)
    for fit in fits:
        print(
            f"slope of log(excess) vs log({fit.variable}): {fit.slope:+.4f} "
            f"(stderr {fit.stderr:.4f}, 95% CI [{fit.ci_low:+.4f}, {fit.ci_high:+.4f}])"
        )
    return 0


def cmd_user_sweep(args: argparse.Namespace) -> int:
    cfg, cfg_dir = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out = _out_dir(args, cfg_dir)
    if args.r_grid:
        r_grid = [int(v) for v in args.r_grid.split(",")]
    elif cfg.sweep and len(cfg.sweep.axes) == 1 and cfg.sweep.axes[0][0] == "r":
        r_grid = [int(v) for v in cfg.sweep.axes[0][1]]
    else:
        raise ConfigurationError("user-sweep needs --r-grid or a [sweep] with a single r axis")
    reports = harness.user_level_sweep(cfg, r_grid, jobs=args.jobs)
    _write_outputs(reports, out)
    _summarize(reports)
    return 0


def cmd_stability(args: argparse.Namespace) -> int:
    cfg, cfg_dir = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out = _out_dir(args, cfg_dir)
    report = harness.stability_experiment(cfg, args.pairs)
    text = (
        f"pairs={report.pairs}\n"
        f"mean_output_distance={report.mean_output_distance!r}\n"
        f"max_output_distance={report.max_output_distance!r}\n"
        f"bound={report.bound!r}\n"
    )
    (out / "stability.txt").write_text(text)
    print(text, end="")
    print(f"bound satisfied: {report.mean_output_distance <= report.bound}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    if args.config:
        cfg, _ = load_config(args.config)
        paradigm = cfg.opt.paradigm
        level = harness.resolve_level(cfg, paradigm)
        T = harness.resolve_T(cfg, paradigm)
        L = harness.make_loss(cfg).lipschitz
        m, n, r = cfg.m, cfg.domain.n, cfg.resolved_r
        eps, dlt = cfg.opt.epsilon, cfg.opt.delta
    else:
        required = {"L": args.L, "T": args.T, "epsilon": args.epsilon, "delta": args.delta,
                    "m": args.m, "n": args.n}
        missing = [k for k, v in required.items() if v is None]
        if missing:
            raise ConfigurationError(f"calibrate needs --config or all of: {missing}")
        L, T, eps, dlt = args.L, args.T, args.epsilon, args.delta
        m, n = args.m, args.n
        r = args.r if args.r else m
        level = args.level
    spec = no_privacy() if level == "none" else PrivacySpec(eps, dlt, level)
    plan = make_noise_plan(spec, L, T, m, n, r)
    problem = ProblemSpec(n, m, r, 1, 0)
    report = budget_report(spec, plan, problem)
    print(report.describe())
    print("---")
    print(report.to_text(), end="")
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    cfg, cfg_dir = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out = _out_dir(args, cfg_dir)
    task = harness.make_task(cfg)
    seed = harness.derive_streams(harness.rep_seed(cfg.base_seed, 0))["fed"]
    problem = ProblemSpec(cfg.domain.n, cfg.m, cfg.resolved_r, harness.record_dim(cfg), seed)
    fed = generate(task, problem)
    path = out / (args.name or "federation.txt")
    save_federation(fed, str(path))
    print(f"wrote federation ({fed.n} owners x {fed.m} records, r={fed.r}) to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointdp",
        description="Simulate collaborative convex optimization under joint differential privacy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--out", default=None, help="output directory (default: $JOINTDP_OUT or ./runs)")
        p.add_argument("--repetitions", type=int, default=None, help="override repetition count")
        p.add_argument("--eval-samples", dest="eval_samples", type=int, default=None,
                       help="override Monte-Carlo evaluation samples per owner")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("compare", help="run all four paradigms on paired seeds")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="grid sweep with fitted log-log exponents")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("user-sweep", help="vary users per owner r under user-level DP")
    common(p)
    p.add_argument("--r-grid", default=None, help="comma-separated r values (each must divide m)")
    p.set_defaults(func=cmd_user_sweep)

    p = sub.add_parser("stability", help="output distance on record-level neighbors")
    common(p)
    p.add_argument("--pairs", type=int, default=200, help="neighbor pairs to run")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("calibrate", help="print the privacy budget report")
    common(p, config_required=False)
    p.add_argument("--L", type=float, default=None, help="Lipschitz constant")
    p.add_argument("--T", type=int, default=None, help="iteration count")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--level", default="record",
                   choices=["record", "user", "none", "full_dp_record", "full_dp_user"])
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("gen", help="write a federation file")
    common(p)
    p.add_argument("--name", default=None, help="file name inside the output directory")
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
