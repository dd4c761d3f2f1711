"""The four training paradigms plus the smooth-gradient variant.

All runs are deterministic given their seeds. Two independent streams are
used: a sampling stream (which record and owner each step touches) and a
noise stream (gradient perturbations). Conventions that make runs comparable
across paradigms and noise levels:

* every step updates exactly one personalized block plus the shared block
  (per-silo excepted, which runs n isolated instances);
* paradigms that own a noise stream draw one (k + ell) block per iteration
  regardless of which coordinates get noised, so equal noise seeds produce
  equal noise values across joint/full paradigms and across sigma values;
* with sigma forced to zero, the noise stream is consumed but not applied,
  and the trajectory is bitwise identical to the non-private run;
* the returned point is the average of the pre-update iterates t = 0..T-1,
  so a run with T = 1 returns its initial point.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Federation
from .losses import LossModel, grad_blocks, grad_mean_blocks, loss_batch
from .params import (
    ConfigurationError,
    DomainSpec,
    PartitionedParams,
    radius,
    uniform_in_ball,
)
from .privacy import (
    NoisePlan,
    PrivacySpec,
    concentration_radius,
    make_noise_plan,
    no_privacy,
    private_mean,
    private_mean_phase2_sigma,
)

PARADIGMS = ("per_silo", "collab_no_dp", "joint_dp", "full_dp", "smooth_joint_dp")

_LEVELS_FOR = {
    "per_silo": ("none",),
    "collab_no_dp": ("none",),
    "joint_dp": ("record", "user"),
    "full_dp": ("full_dp_record", "full_dp_user"),
    "smooth_joint_dp": ("record", "user"),
}

# Noise rows are pre-drawn in blocks of roughly this many coordinates.
_NOISE_CHUNK_COORDS = 1 << 20


@dataclass
class OptimizerConfig:
    paradigm: str
    T: int
    privacy: PrivacySpec = field(default_factory=no_privacy)
    eta: Optional[float] = None  # None resolves to the balanced default
    seed_sampling: int = 0
    seed_noise: int = 0
    init: str = "origin"  # "origin" | "random_in_domain"
    seed_init: int = 0
    gamma: Optional[float] = None  # smooth variant: concentration failure prob
    privatize_shared_only: bool = False  # smooth variant: noise only the u block
    force_zero_noise: bool = False
    record_iterates: bool = False  # debug: keep every pre-update iterate
    trace_every: int = 0
    trace_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.paradigm not in PARADIGMS:
            raise ConfigurationError(f"unknown paradigm {self.paradigm!r}")
        if self.T < 1:
            raise ConfigurationError("need T >= 1")
        if self.eta is not None and self.eta < 0:
            raise ConfigurationError("need eta >= 0")
        allowed = _LEVELS_FOR[self.paradigm]
        if self.privacy.level not in allowed:
            raise ConfigurationError(
                f"paradigm {self.paradigm} needs privacy level in {allowed}, "
                f"got {self.privacy.level!r}"
            )


@dataclass
class TrainResult:
    paradigm: str
    final_params: PartitionedParams  # averaged iterate
    per_owner_shared: Optional[np.ndarray]  # (n, ell) for per_silo, else None
    trace: Optional[list[tuple[int, float]]]
    seeds_used: dict[str, int]
    sigma: float  # per-coordinate noise std actually applied
    eta: float  # resolved step size
    T: int
    iterates: Optional[list[PartitionedParams]] = None


def initial_params(spec: DomainSpec, policy: str, seed: int = 0) -> PartitionedParams:
    if policy == "origin":
        return PartitionedParams(np.zeros((spec.n, spec.k)), np.zeros(spec.ell))
    if policy == "random_in_domain":
        rng = np.random.default_rng(seed)
        pers = np.stack([uniform_in_ball(rng, spec.k, spec.d_x / 2.0) for _ in range(spec.n)])
        return PartitionedParams(pers.reshape(spec.n, spec.k), uniform_in_ball(rng, spec.ell, spec.d_u / 2.0))
    raise ConfigurationError(f"unknown init policy {policy!r}")


def default_eta(spec: DomainSpec, L: float, T: int, sigma: float, noise_dim: int) -> float:
    """Constant step balancing R^2/(2 eta T) against (eta/2)(L^2 + noise_dim sigma^2)."""
    return radius(spec) / (L * np.sqrt(T * (1.0 + noise_dim * sigma**2 / L**2)))


def default_T(m: int, n: int, cap: Optional[int] = None) -> int:
    """Iteration count m^2 n^2, optionally capped for desk-scale runs."""
    t = m * m * n * n
    return t if cap is None else min(t, cap)


def default_smooth_T(n: int, delta: float) -> int:
    return max(1, round(n * n / np.log(1.0 / delta)))


class _BlockAverager:
    """Running average of pre-update iterates for block-sparse updates.

    A personalized block only changes when its owner is touched, so its
    contribution is accumulated lazily: value * (number of iterates it was
    live for). The shared block changes every step and is summed directly.
    """

    def __init__(self, n: int, k: int, ell: int):
        self.sum_pers = np.zeros((n, k))
        self.last = np.zeros(n, dtype=np.int64)
        self.sum_u = np.zeros(ell)

    def visit(self, t: int, j: int, xj: np.ndarray, u: np.ndarray) -> None:
        # called at step t before updating block j; iterate t sees the old value
        self.sum_pers[j] += xj * (t - self.last[j] + 1)
        self.last[j] = t + 1
        self.sum_u += u

    def finish(self, T: int, pers: np.ndarray) -> np.ndarray:
        live = (T - self.last).astype(float)
        return self.sum_pers + pers * live[:, None]


def _project_inplace(v: np.ndarray, ball_radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm > ball_radius:
        return v * (ball_radius / norm)
    return v


def _run_central(
    fed: Federation,
    model: LossModel,
    spec: DomainSpec,
    cfg: OptimizerConfig,
    sigma_x: float,
    sigma_u: float,
    eta: float,
    consume_noise: bool,
    report_sigma: float,
) -> TrainResult:
    n, m = fed.n, fed.m
    k, ell = spec.k, spec.ell
    rx, ru = spec.d_x / 2.0, spec.d_u / 2.0
    T = cfg.T

    start = initial_params(spec, cfg.init, cfg.seed_init)
    pers = start.personalized.copy()
    u = start.shared.copy()

    rng_sample = np.random.default_rng(cfg.seed_sampling)
    i_arr = rng_sample.integers(0, m, size=T)
    j_arr = rng_sample.integers(0, n, size=T)

    rng_noise = np.random.default_rng(cfg.seed_noise)
    dim = k + ell
    chunk_rows = max(1, _NOISE_CHUNK_COORDS // max(1, dim))
    noise_chunk = None
    noise_pos = chunk_rows  # forces a fill on first use

    avg = _BlockAverager(n, k, ell)
    iterates: Optional[list[PartitionedParams]] = [] if cfg.record_iterates else None
    trace: Optional[list[tuple[int, float]]] = [] if cfg.trace_every else None
    trace_fh = open(cfg.trace_path, "w") if (cfg.trace_every and cfg.trace_path) else None
    t0 = time.perf_counter()

    shards = fed.shards
    add_x = sigma_x > 0.0
    add_u = sigma_u > 0.0
    try:
        for t in range(T):
            j = int(j_arr[t])
            z = shards[j, int(i_arr[t])]
            xj = pers[j]
            if iterates is not None:
                iterates.append(PartitionedParams(pers.copy(), u.copy()))
            if trace is not None and t % cfg.trace_every == 0:
                val = float(loss_batch(model, xj, u, z[None, :])[0])
                trace.append((t, val))
                if trace_fh is not None:
                    trace_fh.write(f"{t},{val!r},{time.perf_counter() - t0:.3f}\n")

            gx, gu = grad_blocks(model, xj, u, z)
            if consume_noise:
                if noise_pos >= chunk_rows:
                    rows = min(chunk_rows, T - t)
                    noise_chunk = rng_noise.standard_normal((rows, dim))
                    noise_pos = 0
                b = noise_chunk[noise_pos]
                noise_pos += 1
                if add_x:
                    gx = gx + sigma_x * b[:k]
                if add_u:
                    gu = gu + sigma_u * b[k:]

            avg.visit(t, j, xj, u)
            pers[j] = _project_inplace(xj - eta * gx, rx)
            u = _project_inplace(u - eta * gu, ru)
    finally:
        if trace_fh is not None:
            trace_fh.close()

    sum_pers = avg.finish(T, pers)
    final = PartitionedParams(sum_pers / T, avg.sum_u / T)
    return TrainResult(
        paradigm=cfg.paradigm,
        final_params=final,
        per_owner_shared=None,
        trace=trace,
        seeds_used={
            "sampling": cfg.seed_sampling,
            "noise": cfg.seed_noise,
            "init": cfg.seed_init,
        },
        sigma=report_sigma,
        eta=eta,
        T=T,
        iterates=iterates,
    )


def run_rsgd(fed: Federation, model: LossModel, spec: DomainSpec, cfg: OptimizerConfig) -> TrainResult:
    """Collaboration without noise: uniform (record, owner) sampling each step."""
    if cfg.paradigm != "collab_no_dp":
        raise ConfigurationError("run_rsgd needs paradigm collab_no_dp")
    eta = cfg.eta if cfg.eta is not None else default_eta(spec, model.lipschitz, cfg.T, 0.0, 0)
    return _run_central(fed, model, spec, cfg, 0.0, 0.0, eta, consume_noise=False, report_sigma=0.0)


def run_nsgd(fed: Federation, model: LossModel, spec: DomainSpec, cfg: OptimizerConfig) -> TrainResult:
    """Collaborative noisy SGD: Gaussian noise on the shared-block gradient only."""
    if cfg.paradigm != "joint_dp":
        raise ConfigurationError("run_nsgd needs paradigm joint_dp")
    plan = make_noise_plan(cfg.privacy, model.lipschitz, cfg.T, fed.m, fed.n, fed.r)
    sigma = 0.0 if cfg.force_zero_noise else plan.sigma
    eta = cfg.eta if cfg.eta is not None else default_eta(
        spec, model.lipschitz, cfg.T, plan.sigma, spec.ell
    )
    return _run_central(fed, model, spec, cfg, 0.0, sigma, eta, consume_noise=True, report_sigma=sigma)


def run_full_dp(fed: Federation, model: LossModel, spec: DomainSpec, cfg: OptimizerConfig) -> TrainResult:
    """Like run_nsgd but the touched personalized block is noised as well.

    Noise on untouched personalized blocks would not change the update, so
    only the touched block draws are applied; the step-size default still
    balances against the full (n k + ell)-dimensional noise of the analysis.
    """
    if cfg.paradigm != "full_dp":
        raise ConfigurationError("run_full_dp needs paradigm full_dp")
    plan = make_noise_plan(cfg.privacy, model.lipschitz, cfg.T, fed.m, fed.n, fed.r)
    sigma = 0.0 if cfg.force_zero_noise else plan.sigma
    eta = cfg.eta if cfg.eta is not None else default_eta(
        spec, model.lipschitz, cfg.T, plan.sigma, spec.n * spec.k + spec.ell
    )
    return _run_central(fed, model, spec, cfg, sigma, sigma, eta, consume_noise=True, report_sigma=sigma)


def run_per_silo(fed: Federation, model: LossModel, spec: DomainSpec, cfg: OptimizerConfig) -> TrainResult:
    """Each owner runs an isolated SGD on its own records with a private copy
    of the shared block; T is scaled to one owner (T // n^2, the collaborative
    default m^2 n^2 becomes m^2). Owner streams are identically seeded, so
    owners with identical data produce identical parameters.
    """
    if cfg.paradigm != "per_silo":
        raise ConfigurationError("run_per_silo needs paradigm per_silo")
    n, m = fed.n, fed.m
    k, ell = spec.k, spec.ell
    rx, ru = spec.d_x / 2.0, spec.d_u / 2.0
    T_silo = max(1, cfg.T // (n * n))
    r1 = float(np.sqrt(spec.d_x**2 + spec.d_u**2))
    eta = cfg.eta if cfg.eta is not None else r1 / (model.lipschitz * np.sqrt(T_silo))

    start = initial_params(spec, cfg.init, cfg.seed_init)
    avg_pers = np.empty((n, k))
    avg_u = np.empty((n, ell))
    for j in range(n):
        rng = np.random.default_rng(cfg.seed_sampling)
        idx = rng.integers(0, m, size=T_silo)
        xj = start.personalized[j].copy()
        uj = start.shared.copy()
        sum_x = np.zeros(k)
        sum_u = np.zeros(ell)
        shard = fed.shards[j]
        for t in range(T_silo):
            z = shard[int(idx[t])]
            sum_x += xj
            sum_u += uj
            gx, gu = grad_blocks(model, xj, uj, z)
            xj = _project_inplace(xj - eta * gx, rx)
            uj = _project_inplace(uj - eta * gu, ru)
        avg_pers[j] = sum_x / T_silo
        avg_u[j] = sum_u / T_silo

    final = PartitionedParams(avg_pers, avg_u.mean(axis=0))
    return TrainResult(
        paradigm=cfg.paradigm,
        final_params=final,
        per_owner_shared=avg_u,
        trace=None,
        seeds_used={"sampling": cfg.seed_sampling, "noise": cfg.seed_noise, "init": cfg.seed_init},
        sigma=0.0,
        eta=eta,
        T=T_silo,
        iterates=None,
    )


def run_smooth_nsgd(fed: Federation, model: LossModel, spec: DomainSpec, cfg: OptimizerConfig) -> TrainResult:
    """Smooth-loss variant: each step privatizes the sampled owner's gradient
    through the two-phase private mean of its per-user shard averages.

    Every step spends (epsilon, delta) directly on the mean estimation; the
    concentration radius tau is derived from the smoothness constant, with
    failure probability gamma defaulting to 1/n^2. privatize_shared_only
    restricts privatization to the shared block and passes the exact mean on
    the owner's personalized block.
    """
    if cfg.paradigm != "smooth_joint_dp":
        raise ConfigurationError("run_smooth_nsgd needs paradigm smooth_joint_dp")
    if model.smoothness is None:
        raise ConfigurationError("smooth variant needs a smooth loss model")
    r = fed.r
    if r < 2:
        raise ConfigurationError("smooth variant needs r >= 2 users per owner")
    n, m = fed.n, fed.m
    k, ell = spec.k, spec.ell
    rx, ru = spec.d_x / 2.0, spec.d_u / 2.0
    T = cfg.T
    L = model.lipschitz
    R = radius(spec)
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / (n * n)
    tau = concentration_radius(L, r, m, gamma, ell, R, model.smoothness)
    eps, dlt = cfg.privacy.epsilon, cfg.privacy.delta
    eps_used = np.inf if cfg.force_zero_noise else eps

    noise_dim = ell if cfg.privatize_shared_only else k + ell
    sigma2 = private_mean_phase2_sigma(eps, dlt, tau, r)
    sigma_g = float(np.sqrt(noise_dim * sigma2**2 + tau**2))
    eta = cfg.eta if cfg.eta is not None else 1.0 / (
        model.smoothness + np.sqrt(T) * sigma_g / R
    )

    start = initial_params(spec, cfg.init, cfg.seed_init)
    pers = start.personalized.copy()
    u = start.shared.copy()
    rng_sample = np.random.default_rng(cfg.seed_sampling)
    j_arr = rng_sample.integers(0, n, size=T)
    rng_noise = np.random.default_rng(cfg.seed_noise)

    # shard record blocks are fixed per (owner, user); gather them once
    shard_data = [
        [fed.shards[j][fed.records_of_user(j, w)] for w in range(r)] for j in range(n)
    ]

    avg = _BlockAverager(n, k, ell)
    iterates: Optional[list[PartitionedParams]] = [] if cfg.record_iterates else None
    samples = np.empty((r, k + ell))
    for t in range(T):
        j = int(j_arr[t])
        xj = pers[j]
        if iterates is not None:
            iterates.append(PartitionedParams(pers.copy(), u.copy()))
        for w in range(r):
            gx, gu = grad_mean_blocks(model, xj, u, shard_data[j][w])
            samples[w, :k] = gx
            samples[w, k:] = gu
        if cfg.privatize_shared_only:
            gu_hat = private_mean(samples[:, k:], eps_used, dlt, tau, L, rng_noise)
            gx_hat = samples[:, :k].mean(axis=0)
        else:
            g_hat = private_mean(samples, eps_used, dlt, tau, L, rng_noise)
            gx_hat, gu_hat = g_hat[:k], g_hat[k:]
        avg.visit(t, j, xj, u)
        pers[j] = _project_inplace(xj - eta * gx_hat, rx)
        u = _project_inplace(u - eta * gu_hat, ru)

    sum_pers = avg.finish(T, pers)
    final = PartitionedParams(sum_pers / T, avg.sum_u / T)
    return TrainResult(
        paradigm=cfg.paradigm,
        final_params=final,
        per_owner_shared=None,
        trace=None,
        seeds_used={"sampling": cfg.seed_sampling, "noise": cfg.seed_noise, "init": cfg.seed_init},
        sigma=0.0 if cfg.force_zero_noise else sigma2,
        eta=eta,
        T=T,
        iterates=iterates,
    )


_RUNNERS = {
    "per_silo": run_per_silo,
    "collab_no_dp": run_rsgd,
    "joint_dp": run_nsgd,
    "full_dp": run_full_dp,
    "smooth_joint_dp": run_smooth_nsgd,
}


def run(fed: Federation, model: LossModel, spec: DomainSpec, cfg: OptimizerConfig) -> TrainResult:
    return _RUNNERS[cfg.paradigm](fed, model, spec, cfg)


def noise_plan_for(
    fed: Federation, model: LossModel, cfg: OptimizerConfig
) -> NoisePlan:
    return make_noise_plan(cfg.privacy, model.lipschitz, cfg.T, fed.m, fed.n, fed.r)
