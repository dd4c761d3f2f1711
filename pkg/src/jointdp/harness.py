"""Experiment orchestration: paradigm comparisons, scaling sweeps, stability
experiments, risk decomposition, and report persistence.

Every run is an isolated deterministic unit: a single repetition seed expands
into independent streams for data generation, record sampling, gradient noise,
initialization, and evaluation, so any CSV row can be regenerated from its
embedded seed and config hash. Excess losses on shared_mean tasks are measured
against the analytic population minimizer (the task centers) with common
random numbers; logistic tasks fall back to a long non-private oracle run and
reports label which reference was used.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import optim
from .data import Federation, ProblemSpec, SyntheticTask, draw_records, generate, replace_record, sample_task
from .losses import (
    LossModel,
    empirical_loss,
    grad_blocks,
    logistic_model,
    paired_excess_estimate,
    population_loss_estimate,
    shared_mean_huber_model,
    shared_mean_norm_model,
)
from .params import ConfigurationError, DomainSpec, PartitionedParams, radius
from .privacy import PrivacySpec, no_privacy

log = logging.getLogger("jointdp")

CSV_COLUMNS = (
    "config_hash",
    "n",
    "m",
    "r",
    "k",
    "ell",
    "epsilon",
    "delta",
    "paradigm",
    "seed",
    "excess_loss",
    "stderr",
    "phi_opt",
    "phi_gen",
    "bound_value",
)

SWEEP_AXES = ("n", "m", "r", "ell", "epsilon", "eta", "T")


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "shared_mean"
    noise_scale: float = 0.1
    heterogeneity: float = 0.5
    shared_offset: float = 0.75
    seed: int = 0


@dataclass(frozen=True)
class LossSpec:
    kind: str = "shared_mean_norm"
    mu: float = 0.1  # huber threshold
    feature_bound: float = 1.0  # logistic


@dataclass(frozen=True)
class OptSpec:
    paradigm: str = "joint_dp"
    epsilon: float = 1.0
    delta: float = 1e-5
    level: str = "auto"  # auto derives the level from paradigm and r
    T: int = 0  # 0 resolves to the paradigm default
    eta: float = 0.0  # 0 resolves to the balanced default
    gamma: float = 0.0  # 0 resolves to 1/n^2 (smooth variant)
    privatize_shared_only: bool = False
    force_zero_noise: bool = False
    init: str = "origin"


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple[tuple[str, tuple], ...]  # ((axis, values), ...)
    mode: str = "product"  # "product" | "zip"
    fit_against: tuple[str, ...] = ()  # extra fit variables, e.g. ("mn",)

    def __post_init__(self) -> None:
        if self.mode not in ("product", "zip"):
            raise ConfigurationError(f"unknown sweep mode {self.mode!r}")
        if not self.axes:
            raise ConfigurationError("sweep needs at least one axis")
        for axis, values in self.axes:
            if axis not in SWEEP_AXES:
                raise ConfigurationError(f"unknown sweep axis {axis!r}")
            if len(values) < 2:
                raise ConfigurationError(f"axis {axis!r} needs >= 2 grid points")
        if self.mode == "zip":
            lengths = {len(values) for _, values in self.axes}
            if len(lengths) != 1:
                raise ConfigurationError("zip sweep needs equal-length axes")


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec
    m: int
    r: int = 0  # 0 means record level (r = m)
    task: TaskSpec = field(default_factory=TaskSpec)
    loss: LossSpec = field(default_factory=LossSpec)
    opt: OptSpec = field(default_factory=OptSpec)
    repetitions: int = 20
    eval_samples: int = 2000
    base_seed: int = 0
    t_cap: int = 1_000_000
    compute_phi_opt: bool = False
    sweep: Optional[SweepSpec] = None

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ConfigurationError("need repetitions >= 1")
        if self.eval_samples < 1:
            raise ConfigurationError("need eval_samples >= 1")
        r = self.resolved_r
        if self.m % r != 0:
            raise ConfigurationError(f"r={r} must divide m={self.m}")

    @property
    def resolved_r(self) -> int:
        return self.r if self.r > 0 else self.m


def make_task(cfg: ExperimentConfig) -> SyntheticTask:
    return sample_task(
        cfg.task.kind,
        cfg.domain,
        cfg.task.heterogeneity,
        cfg.task.noise_scale,
        cfg.task.seed,
        cfg.task.shared_offset,
    )


def make_loss(cfg: ExperimentConfig) -> LossModel:
    if cfg.loss.kind == "shared_mean_norm":
        return shared_mean_norm_model()
    if cfg.loss.kind == "shared_mean_huber":
        return shared_mean_huber_model(cfg.loss.mu)
    if cfg.loss.kind == "logistic":
        return logistic_model(cfg.loss.feature_bound)
    raise ConfigurationError(f"unknown loss kind {cfg.loss.kind!r}")


def record_dim(cfg: ExperimentConfig) -> int:
    base = cfg.domain.k + cfg.domain.ell
    return base + 1 if cfg.task.kind == "logistic" else base


def auto_level(paradigm: str, m: int, r: int) -> str:
    if paradigm in ("per_silo", "collab_no_dp"):
        return "none"
    record = r == m
    if paradigm == "full_dp":
        return "full_dp_record" if record else "full_dp_user"
    return "record" if record else "user"


def resolve_level(cfg: ExperimentConfig, paradigm: str) -> str:
    if cfg.opt.level != "auto":
        return cfg.opt.level
    return auto_level(paradigm, cfg.m, cfg.resolved_r)


def resolve_T(cfg: ExperimentConfig, paradigm: str) -> int:
    if cfg.opt.T > 0:
        return cfg.opt.T
    if paradigm == "smooth_joint_dp":
        return min(optim.default_smooth_T(cfg.domain.n, cfg.opt.delta), cfg.t_cap)
    full = cfg.m * cfg.m * cfg.domain.n * cfg.domain.n
    if full > cfg.t_cap:
        log.warning(
            "default T = m^2 n^2 = %d exceeds cap %d; capping", full, cfg.t_cap
        )
    return min(full, cfg.t_cap)


def privacy_for(cfg: ExperimentConfig, paradigm: str) -> PrivacySpec:
    level = resolve_level(cfg, paradigm)
    if level == "none":
        return no_privacy()
    return PrivacySpec(cfg.opt.epsilon, cfg.opt.delta, level)


# ---------------------------------------------------------------------------
# seeds: each repetition seed expands into independent named streams

_STREAM_TAGS = {"fed": 0, "sampling": 1, "noise": 2, "init": 3, "eval": 4, "pair": 5}


def rep_seed(base_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([base_seed, rep]).generate_state(1)[0])


def derive_streams(seed: int) -> dict[str, int]:
    return {
        name: int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])
        for name, tag in _STREAM_TAGS.items()
    }


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# bounds (constant 1)


def theorem_bound(
    paradigm: str,
    domain: DomainSpec,
    L: float,
    m: int,
    r: int,
    epsilon: float,
    delta: float,
    level: str,
) -> float:
    """Excess-population-loss bound for the paradigm at the run's parameters."""
    n, k, ell = domain.n, domain.k, domain.ell
    R = radius(domain)
    mn = m * n
    base = R * L / math.sqrt(mn)
    if paradigm == "per_silo":
        return L * (domain.d_x + domain.d_u) / math.sqrt(m)
    if paradigm == "collab_no_dp":
        return base
    if paradigm == "smooth_joint_dp":
        return base + R * L * ell / (epsilon * n * math.sqrt(m * r))
    if paradigm == "joint_dp":
        if level == "user" and r < m:
            noise = math.sqrt(ell * math.log(m / (r * delta))) / (epsilon * n * r)
        else:
            noise = math.sqrt(ell * math.log(1.0 / delta)) / (epsilon * mn)
        return base + R * L * noise
    if paradigm == "full_dp":
        if level == "full_dp_user" and r < m:
            noise = math.sqrt((n * k + ell) * math.log(m / delta)) / (epsilon * n)
        else:
            noise = math.sqrt((n * k + ell) * math.log(1.0 / delta)) / (epsilon * mn)
        return base + R * L * noise
    raise ConfigurationError(f"unknown paradigm {paradigm!r}")


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunReport:
    config_hash: str
    paradigm: str
    n: int
    m: int
    r: int
    k: int
    ell: int
    epsilon: float
    delta: float
    seed: int
    excess_loss: float
    stderr: float
    empirical_loss: float
    phi_opt: Optional[float]
    phi_gen: float
    bound_value: float
    wall_ms: float
    sigma: float
    eta: float
    T: int
    streams: dict[str, int]
    reference: str  # "analytic" | "oracle"


def analytic_minimizer(task: SyntheticTask) -> PartitionedParams:
    return PartitionedParams(task.personalized_centers.copy(), task.shared_center.copy())


def empirical_oracle(
    fed: Federation,
    model: LossModel,
    domain: DomainSpec,
    T: int,
    seed: int,
) -> PartitionedParams:
    """Approximate empirical minimizer: long non-private run with decaying
    steps eta_t = R / (L sqrt(t+1)) and suffix averaging over the last half.
    The returned value approximates the minimum from above."""
    n, m = fed.n, fed.m
    rx, ru = domain.d_x / 2.0, domain.d_u / 2.0
    R = radius(domain)
    L = model.lipschitz
    rng = np.random.default_rng(seed)
    i_arr = rng.integers(0, m, size=T)
    j_arr = rng.integers(0, n, size=T)
    pers = np.zeros((n, domain.k))
    u = np.zeros(domain.ell)
    t_start = T // 2
    count = T - t_start
    sum_pers = np.zeros_like(pers)
    sum_u = np.zeros_like(u)
    for t in range(T):
        j = int(j_arr[t])
        z = fed.shards[j, int(i_arr[t])]
        if t >= t_start:
            sum_pers += pers
            sum_u += u
        gx, gu = grad_blocks(model, pers[j], u, z)
        eta = R / (L * math.sqrt(t + 1.0))
        v = pers[j] - eta * gx
        norm = float(np.linalg.norm(v))
        pers[j] = v if norm <= rx else v * (rx / norm)
        w = u - eta * gu
        norm = float(np.linalg.norm(w))
        u = w if norm <= ru else w * (ru / norm)
    return PartitionedParams(sum_pers / count, sum_u / count)


def reference_minimizer(
    cfg: ExperimentConfig,
    task: SyntheticTask,
    fed: Federation,
    model: LossModel,
    T: int,
    oracle_seed: int,
) -> tuple[PartitionedParams, str]:
    if cfg.task.kind == "shared_mean":
        return analytic_minimizer(task), "analytic"
    return empirical_oracle(fed, model, cfg.domain, 10 * T, oracle_seed), "oracle"


def build_opt_config(
    cfg: ExperimentConfig,
    paradigm: str,
    streams: dict[str, int],
    record_iterates: bool = False,
) -> optim.OptimizerConfig:
    T = resolve_T(cfg, paradigm)
    return optim.OptimizerConfig(
        paradigm=paradigm,
        T=T,
        privacy=privacy_for(cfg, paradigm),
        eta=cfg.opt.eta if cfg.opt.eta > 0 else None,
        seed_sampling=streams["sampling"],
        seed_noise=streams["noise"],
        init=cfg.opt.init,
        seed_init=streams["init"],
        gamma=cfg.opt.gamma if cfg.opt.gamma > 0 else None,
        privatize_shared_only=cfg.opt.privatize_shared_only,
        force_zero_noise=cfg.opt.force_zero_noise,
        record_iterates=record_iterates,
    )


def run_single(cfg: ExperimentConfig, paradigm: str, seed: int) -> RunReport:
    """One deterministic run: generate the federation, train, and evaluate."""
    streams = derive_streams(seed)
    task = make_task(cfg)
    model = make_loss(cfg)
    problem = ProblemSpec(cfg.domain.n, cfg.m, cfg.resolved_r, record_dim(cfg), streams["fed"])
    fed = generate(task, problem)
    ocfg = build_opt_config(cfg, paradigm, streams)

    t0 = time.perf_counter()
    result = optim.run(fed, model, cfg.domain, ocfg)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    reference, ref_label = reference_minimizer(cfg, task, fed, model, ocfg.T, streams["fed"] ^ 0xA5A5)
    excess = paired_excess_estimate(
        model,
        result.final_params,
        reference,
        task,
        cfg.eval_samples,
        streams["eval"],
        per_owner_shared=result.per_owner_shared,
    )
    emp = empirical_loss(model, result.final_params, fed, per_owner_shared=result.per_owner_shared)
    pop = population_loss_estimate(
        model,
        result.final_params,
        task,
        cfg.eval_samples,
        streams["eval"],
        per_owner_shared=result.per_owner_shared,
    )
    phi_gen = pop.value - emp.value
    phi_opt = None
    if cfg.compute_phi_opt:
        oracle = empirical_oracle(fed, model, cfg.domain, 10 * ocfg.T, streams["fed"] ^ 0x5A5A)
        phi_opt = emp.value - empirical_loss(model, oracle, fed).value

    level = resolve_level(cfg, paradigm)
    bound = theorem_bound(
        paradigm, cfg.domain, model.lipschitz, cfg.m, cfg.resolved_r,
        cfg.opt.epsilon, cfg.opt.delta, level,
    )
    return RunReport(
        config_hash=config_hash(cfg),
        paradigm=paradigm,
        n=cfg.domain.n,
        m=cfg.m,
        r=cfg.resolved_r,
        k=cfg.domain.k,
        ell=cfg.domain.ell,
        epsilon=cfg.opt.epsilon,
        delta=cfg.opt.delta,
        seed=seed,
        excess_loss=excess.value,
        stderr=excess.stderr or 0.0,
        empirical_loss=emp.value,
        phi_opt=phi_opt,
        phi_gen=phi_gen,
        bound_value=bound,
        wall_ms=wall_ms,
        sigma=result.sigma,
        eta=result.eta,
        T=result.T,
        streams=streams,
        reference=ref_label,
    )


def _run_task(args: tuple[ExperimentConfig, str, int]) -> RunReport:
    return run_single(*args)


def _execute(tasks: list[tuple[ExperimentConfig, str, int]], jobs: int) -> list[RunReport]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


# ---------------------------------------------------------------------------
# experiments

COMPARED_PARADIGMS = ("per_silo", "collab_no_dp", "joint_dp", "full_dp")


def compare_paradigms(cfg: ExperimentConfig, jobs: int = 1) -> list[RunReport]:
    """All four paradigms on the same federations with paired seeds; one
    report per (paradigm, repetition), grouped by repetition."""
    for paradigm in COMPARED_PARADIGMS:
        build_opt_config(cfg, paradigm, derive_streams(0))  # validate before running
    tasks = [
        (cfg, paradigm, rep_seed(cfg.base_seed, rep))
        for rep in range(cfg.repetitions)
        for paradigm in COMPARED_PARADIGMS
    ]
    return _execute(tasks, jobs)


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "n":
        return dataclasses.replace(cfg, domain=dataclasses.replace(cfg.domain, n=int(value)))
    if axis == "ell":
        return dataclasses.replace(cfg, domain=dataclasses.replace(cfg.domain, ell=int(value)))
    if axis == "m":
        return dataclasses.replace(cfg, m=int(value))
    if axis == "r":
        return dataclasses.replace(cfg, r=int(value))
    if axis == "epsilon":
        return dataclasses.replace(cfg, opt=dataclasses.replace(cfg.opt, epsilon=float(value)))
    if axis == "eta":
        return dataclasses.replace(cfg, opt=dataclasses.replace(cfg.opt, eta=float(value)))
    if axis == "T":
        return dataclasses.replace(cfg, opt=dataclasses.replace(cfg.opt, T=int(value)))
    raise ConfigurationError(f"unknown sweep axis {axis!r}")


def grid_points(sweep: SweepSpec) -> list[dict[str, object]]:
    if sweep.mode == "zip":
        length = len(sweep.axes[0][1])
        return [
            {name: values[i] for (name, values) in sweep.axes}
            for i in range(length)
        ]
    points: list[dict[str, object]] = [{}]
    for name, values in sweep.axes:
        points = [dict(p, **{name: v}) for p in points for v in values]
    return points


@dataclass(frozen=True)
class FitResult:
    variable: str
    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    n_points: int


def fit_powerlaw(xs: np.ndarray, ys: np.ndarray, variable: str) -> FitResult:
    """Least-squares slope of log(y) on log(x) with a 95% CI from the t-dist."""
    if len(xs) < 2:
        raise ConfigurationError("need at least 2 grid points to fit a slope")
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    res = stats.linregress(lx, ly)
    dof = max(1, len(xs) - 2)
    tq = stats.t.ppf(0.975, dof)
    return FitResult(
        variable=variable,
        slope=float(res.slope),
        stderr=float(res.stderr),
        ci_low=float(res.slope - tq * res.stderr),
        ci_high=float(res.slope + tq * res.stderr),
        n_points=len(xs),
    )


def _fit_variables(sweep: SweepSpec) -> list[str]:
    if sweep.fit_against:
        return list(sweep.fit_against)
    return [axis for axis, _ in sweep.axes]


def _variable_value(var: str, point: dict, cfg: ExperimentConfig) -> float:
    if var == "mn":
        m = point.get("m", cfg.m)
        n = point.get("n", cfg.domain.n)
        return float(m) * float(n)
    if var in point:
        return float(point[var])  # type: ignore[arg-type]
    raise ConfigurationError(f"fit variable {var!r} not in sweep axes")


def scaling_sweep(
    cfg: ExperimentConfig, jobs: int = 1
) -> tuple[list[RunReport], list[FitResult]]:
    """Mean excess loss per grid point plus fitted log-log exponents."""
    if cfg.sweep is None:
        raise ConfigurationError("scaling_sweep needs cfg.sweep")
    points = grid_points(cfg.sweep)
    tasks = []
    for point in points:
        pcfg = cfg
        for axis, value in point.items():
            pcfg = apply_axis(pcfg, axis, value)
        for rep in range(cfg.repetitions):
            tasks.append((pcfg, pcfg.opt.paradigm, rep_seed(cfg.base_seed, rep)))
    reports = _execute(tasks, jobs)

    per_point = np.array(
        [
            np.mean([r.excess_loss for r in reports[i * cfg.repetitions : (i + 1) * cfg.repetitions]])
            for i in range(len(points))
        ]
    )
    fits = []
    for var in _fit_variables(cfg.sweep):
        xs = np.array([_variable_value(var, point, cfg) for point in points])
        fits.append(fit_powerlaw(xs, per_point, var))
    return reports, fits


def user_level_sweep(
    cfg: ExperimentConfig, r_grid: Sequence[int], jobs: int = 1
) -> list[RunReport]:
    """Fixed (n, m, epsilon); varies users per owner r under user-level DP."""
    for r in r_grid:
        if r < 1 or cfg.m % r != 0:
            raise ConfigurationError(f"r={r} does not divide m={cfg.m}")
    base = dataclasses.replace(cfg, opt=dataclasses.replace(cfg.opt, level="user", paradigm="joint_dp"))
    tasks = []
    for r in r_grid:
        pcfg = dataclasses.replace(base, r=int(r))
        for rep in range(cfg.repetitions):
            tasks.append((pcfg, "joint_dp", rep_seed(cfg.base_seed, rep)))
    return _execute(tasks, jobs)


@dataclass
class StabilityReport:
    pairs: int
    mean_output_distance: float
    max_output_distance: float
    bound: float

    def __post_init__(self) -> None:
        if self.mean_output_distance > self.max_output_distance + 1e-15:
            raise ConfigurationError("mean distance exceeds max distance")


def stability_bound(domain: DomainSpec, L: float, eta: float, T: int, m: int) -> float:
    """min(R, 4 L eta (sqrt(T) + T / (m n))) for record-level neighbors."""
    R = radius(domain)
    return min(R, 4.0 * L * eta * (math.sqrt(T) + T / (m * domain.n)))


def stability_experiment(cfg: ExperimentConfig, pair_count: int) -> StabilityReport:
    """Output distance of the non-private run on record-level neighbors.

    Each pair shares the sampling stream; the neighbor replaces one uniformly
    chosen record with a fresh draw from the same owner distribution.
    """
    if pair_count < 1:
        raise ConfigurationError("need pair_count >= 1")
    task = make_task(cfg)
    model = make_loss(cfg)
    dists = np.empty(pair_count)
    eta_used = None
    T_used = None
    for pair in range(pair_count):
        seed = rep_seed(cfg.base_seed, pair)
        streams = derive_streams(seed)
        problem = ProblemSpec(cfg.domain.n, cfg.m, cfg.resolved_r, record_dim(cfg), streams["fed"])
        fed = generate(task, problem)
        pair_rng = np.random.default_rng(streams["pair"])
        j = int(pair_rng.integers(0, cfg.domain.n))
        i = int(pair_rng.integers(0, cfg.m))
        fresh = draw_records(task, j, 1, pair_rng)[0]
        fed2 = replace_record(fed, j, i, fresh)
        ocfg = build_opt_config(cfg, "collab_no_dp", streams)
        out1 = optim.run_rsgd(fed, model, cfg.domain, ocfg)
        out2 = optim.run_rsgd(fed2, model, cfg.domain, ocfg)
        dists[pair] = out1.final_params.distance(out2.final_params)
        eta_used, T_used = out1.eta, out1.T
    bound = stability_bound(cfg.domain, model.lipschitz, eta_used, T_used, cfg.m)
    return StabilityReport(
        pairs=pair_count,
        mean_output_distance=float(dists.mean()),
        max_output_distance=float(dists.max()),
        bound=bound,
    )


@dataclass
class RiskReport:
    excess_loss: float
    excess_stderr: float
    phi_opt: float
    phi_gen: float
    phi_approx_residual: float  # implied by the other terms; not a measurement
    oracle_empirical_min: float
    reference: str


def risk_decomposition(
    cfg: ExperimentConfig,
    fed: Federation,
    result: optim.TrainResult,
    eval_seed: int,
    oracle_seed: int = 0,
) -> RiskReport:
    """Optimization/generalization proxies for a completed run.

    phi_opt is measured against a long decayed-step oracle run, so it is
    approximate from above; phi_approx_residual is the remainder implied by
    the measured excess and the two proxies, not an observation.
    """
    task = make_task(cfg)
    model = make_loss(cfg)
    oracle = empirical_oracle(fed, model, cfg.domain, 10 * result.T, oracle_seed)
    oracle_emp = empirical_loss(model, oracle, fed).value
    emp = empirical_loss(model, result.final_params, fed, per_owner_shared=result.per_owner_shared).value
    pop = population_loss_estimate(
        model, result.final_params, task, cfg.eval_samples, eval_seed,
        per_owner_shared=result.per_owner_shared,
    )
    reference, ref_label = reference_minimizer(cfg, task, fed, model, result.T, oracle_seed)
    excess = paired_excess_estimate(
        model, result.final_params, reference, task, cfg.eval_samples, eval_seed,
        per_owner_shared=result.per_owner_shared,
    )
    phi_opt = emp - oracle_emp
    phi_gen = pop.value - emp
    residual = excess.value - phi_opt - phi_gen
    return RiskReport(
        excess_loss=excess.value,
        excess_stderr=excess.stderr or 0.0,
        phi_opt=phi_opt,
        phi_gen=phi_gen,
        phi_approx_residual=residual,
        oracle_empirical_min=oracle_emp,
        reference=ref_label,
    )


# ---------------------------------------------------------------------------
# statistics helpers


def sign_test_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """One-sided sign test p-value for the hypothesis that a < b pairwise.

    Ties are dropped; small p supports a < b."""
    wins = sum(1 for x, y in zip(a, b) if x < y)
    losses = sum(1 for x, y in zip(a, b) if x > y)
    trials = wins + losses
    if trials == 0:
        return 1.0
    return float(stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue)


# ---------------------------------------------------------------------------
# persistence


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(report: RunReport) -> str:
    vals = [_fmt(getattr(report, col)) for col in CSV_COLUMNS]
    return ",".join(vals)


def write_csv(reports: Sequence[RunReport], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for report in reports:
            fh.write(report_row(report) + "\n")


def report_json(report: RunReport) -> str:
    d = dataclasses.asdict(report)
    return json.dumps(d, sort_keys=True)


def write_jsonl(reports: Sequence[RunReport], path: str) -> None:
    with open(path, "w") as fh:
        for report in reports:
            fh.write(report_json(report) + "\n")


def rerun_row(cfg: ExperimentConfig, row: str) -> str:
    """Regenerate a CSV row from its embedded seed and axis values.

    The row's grid-axis values are applied to cfg first (sweep points differ
    from the base config); the reconstructed config must then match the
    embedded hash, or the row is not reproducible from cfg and we refuse."""
    fields_ = row.strip().split(",")
    kv = dict(zip(CSV_COLUMNS, fields_))
    target = cfg
    if int(kv["n"]) != target.domain.n:
        target = apply_axis(target, "n", int(kv["n"]))
    if int(kv["m"]) != target.m:
        target = apply_axis(target, "m", int(kv["m"]))
    if int(kv["r"]) != target.resolved_r:
        target = apply_axis(target, "r", int(kv["r"]))
    if int(kv["ell"]) != target.domain.ell:
        target = apply_axis(target, "ell", int(kv["ell"]))
    if float(kv["epsilon"]) != target.opt.epsilon:
        target = apply_axis(target, "epsilon", float(kv["epsilon"]))
    if kv["config_hash"] != config_hash(target):
        raise ConfigurationError(
            f"row hash {kv['config_hash']} does not match config {config_hash(target)}"
        )
    report = run_single(target, kv["paradigm"], int(kv["seed"]))
    return report_row(report)
