"""Noise calibration, group-privacy arithmetic, and private mean estimation.

All functions here are parameter arithmetic or mechanisms; indistinguishability
itself is never verified mechanically. The per-coordinate Gaussian scale for
the collaborative optimizer is

    sigma = L * sqrt(T * ln(1/delta)) / (epsilon * m * n)

and user-level guarantees are obtained by running the record-level mechanism
at reduced parameters and lifting back through group privacy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .data import ProblemSpec
from .params import ConfigurationError

LEVELS = ("record", "user", "none", "full_dp_record", "full_dp_user")

# Maximum epsilon accepted by the calibration (theory precondition).
EPSILON_MAX = 10.0


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    level: str = "record"

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise ConfigurationError(f"unknown privacy level {self.level!r}")
        if self.level == "none":
            return
        if not 0.0 < self.epsilon <= EPSILON_MAX:
            raise ConfigurationError(
                f"epsilon must be in (0, {EPSILON_MAX}], got {self.epsilon}"
            )
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must be in (0, 1), got {self.delta}")

    @property
    def is_user_level(self) -> bool:
        return self.level in ("user", "full_dp_user")

    @property
    def noised_blocks(self) -> str:
        if self.level in ("full_dp_record", "full_dp_user"):
            return "all_blocks"
        return "shared_only"


def no_privacy() -> PrivacySpec:
    return PrivacySpec(math.inf, 0.0, "none")


@dataclass(frozen=True)
class NoisePlan:
    sigma: float  # per-coordinate Gaussian std added to gradients
    noised_blocks: str  # "shared_only" | "all_blocks"
    T: int  # iteration count the calibration assumed

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")


def calibrate_sigma(L: float, T: float, epsilon: float, delta: float, m: int, n: int) -> float:
    """Per-coordinate noise std for the collaborative noisy-SGD mechanism."""
    if min(L, T, epsilon, delta, m, n) <= 0:
        raise ConfigurationError("calibrate_sigma needs all arguments positive")
    if epsilon > EPSILON_MAX:
        raise ConfigurationError(f"epsilon must be <= {EPSILON_MAX}")
    return L * math.sqrt(T * math.log(1.0 / delta)) / (epsilon * m * n)


def group_privacy_lift(epsilon: float, delta: float, group_size_k: int) -> tuple[float, float]:
    """(eps, delta) under single-record changes -> (k eps, k e^{k eps} delta)
    under changes of k records; k = 1 is the original guarantee itself."""
    if group_size_k < 1:
        raise ConfigurationError("group size must be >= 1")
    k = int(group_size_k)
    if k == 1:
        return epsilon, delta
    eps_out = k * epsilon
    try:
        delta_out = k * math.exp(eps_out) * delta
    except OverflowError:
        delta_out = math.inf
    return eps_out, delta_out


def user_level_reduction(epsilon: float, delta: float, m: int, r: int) -> tuple[float, float]:
    """Record-level parameters whose group-privacy lift stays within the
    user-level budget: epsilon_record = epsilon * r/m, delta_record =
    delta * r / (m * e^epsilon).

    The returned values are nudged down by at most a few ulps so that lifting
    by the group size m/r never exceeds (epsilon, delta); for power-of-two
    group sizes the epsilon round trip is bit-exact.
    """
    if epsilon <= 0 or not 0 < delta < 1:
        raise ConfigurationError("need epsilon > 0 and delta in (0, 1)")
    if m < 1 or r < 1 or m % r != 0:
        raise ConfigurationError(f"r={r} must divide m={m}")
    k = m // r
    if k == 1:
        return epsilon, delta

    eps_rec = epsilon / k
    if k * eps_rec <= epsilon:
        while True:
            up = math.nextafter(eps_rec, math.inf)
            if k * up <= epsilon:
                eps_rec = up
            else:
                break
    else:
        while k * eps_rec > epsilon:
            eps_rec = math.nextafter(eps_rec, 0.0)

    del_rec = delta * r / (m * math.exp(epsilon))
    while group_privacy_lift(eps_rec, del_rec, k)[1] > delta:
        del_rec = math.nextafter(del_rec, 0.0)
    return eps_rec, del_rec


def concentration_radius(
    L: float, r_shard: int, m: int, gamma: float, ell: int, R: float, H: float
) -> float:
    """Radius within which per-user shard-average gradients concentrate:

        tau = (L sqrt(r) / sqrt(m)) * (sqrt(ln(1/gamma)) + sqrt(ell ln(R H m / (ell L))))

    with implementation constant 1 and the log argument clamped to e."""
    if min(L, r_shard, m, gamma, ell, R, H) <= 0:
        raise ConfigurationError("concentration_radius needs all arguments positive")
    if gamma >= 1:
        raise ConfigurationError("gamma must be in (0, 1)")
    arg = max(R * H * m / (ell * L), math.e)
    return (L * math.sqrt(r_shard) / math.sqrt(m)) * (
        math.sqrt(math.log(1.0 / gamma)) + math.sqrt(ell * math.log(arg))
    )


def gaussian_sigma(sensitivity: float, epsilon: float, delta: float) -> float:
    """Gaussian-mechanism std: sensitivity * sqrt(2 ln(2.5/delta)) / epsilon.

    epsilon = inf gives 0 (the exact, noiseless limit)."""
    if sensitivity < 0 or epsilon <= 0 or not 0 < delta < 1:
        raise ConfigurationError("invalid Gaussian mechanism parameters")
    return sensitivity * math.sqrt(2.0 * math.log(2.5 / delta)) / epsilon


def private_mean(
    samples: np.ndarray,
    epsilon: float,
    delta: float,
    tau: float,
    norm_bound: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Two-phase private mean of vectors with norms <= norm_bound.

    Phase 1 locates a rough center: clip to norm_bound, average, and add
    Gaussian noise at budget (epsilon/2, delta/2) for sensitivity
    2*norm_bound/count. Phase 2 re-clips every sample to the ball of radius
    2*tau around that center, averages, and adds noise at the remaining
    (epsilon/2, delta/2) budget for sensitivity 4*tau/count. When the samples
    all lie within tau of their mean, phase-2 clipping is inactive and the
    output is the exact sample mean plus calibrated noise.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ConfigurationError("private_mean needs at least 2 vector samples")
    if tau <= 0 or norm_bound <= 0:
        raise ConfigurationError("tau and norm_bound must be > 0")
    count, dim = samples.shape
    norms = np.linalg.norm(samples, axis=1)
    if np.any(norms > norm_bound * (1 + 1e-12)):
        raise ConfigurationError(
            f"sample norm {norms.max():.6g} exceeds declared bound {norm_bound:.6g}"
        )

    eps_phase, del_phase = epsilon / 2.0, delta / 2.0

    over = norms > norm_bound
    clipped = samples.copy()
    clipped[over] *= (norm_bound / norms[over])[:, None]
    sigma1 = gaussian_sigma(2.0 * norm_bound / count, eps_phase, del_phase)
    center = clipped.mean(axis=0) + sigma1 * rng.standard_normal(dim)

    d = samples - center
    dist = np.linalg.norm(d, axis=1)
    far = dist > 2.0 * tau
    re_clipped = samples.copy()
    if np.any(far):
        re_clipped[far] = center + d[far] * (2.0 * tau / dist[far])[:, None]
    sigma2 = gaussian_sigma(4.0 * tau / count, eps_phase, del_phase)
    return re_clipped.mean(axis=0) + sigma2 * rng.standard_normal(dim)


def private_mean_phase2_sigma(epsilon: float, delta: float, tau: float, count: int) -> float:
    """Per-coordinate noise std of the phase-2 output (for variance checks)."""
    return gaussian_sigma(4.0 * tau / count, epsilon / 2.0, delta / 2.0)


def make_noise_plan(
    spec: PrivacySpec, L: float, T: int, m: int, n: int, r: int
) -> NoisePlan:
    """Resolve a privacy spec into the per-coordinate noise scale for a run.

    User-level specs are first reduced to record-level parameters; sigma = 0
    iff level is none.
    """
    if spec.level == "none":
        return NoisePlan(0.0, spec.noised_blocks, T)
    eps, dlt = spec.epsilon, spec.delta
    if spec.is_user_level:
        eps, dlt = user_level_reduction(eps, dlt, m, r)
    return NoisePlan(calibrate_sigma(L, T, eps, dlt, m, n), spec.noised_blocks, T)


@dataclass(frozen=True)
class BudgetReport:
    """Flat summary of a run's privacy budget, lossless through text form."""

    level: str
    epsilon: float
    delta: float
    epsilon_record: float
    delta_record: float
    sigma: float
    T: int
    noised_blocks: str

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BudgetReport":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            kv[key] = val
        return cls(
            level=kv["level"],
            epsilon=float(kv["epsilon"]),
            delta=float(kv["delta"]),
            epsilon_record=float(kv["epsilon_record"]),
            delta_record=float(kv["delta_record"]),
            sigma=float(kv["sigma"]),
            T=int(kv["T"]),
            noised_blocks=kv["noised_blocks"],
        )

    def describe(self) -> str:
        head = f"privacy level: {self.level}"
        if self.level == "none":
            return head + "\nno noise added (sigma = 0)"
        out = [
            head,
            f"budget: epsilon={self.epsilon:g}, delta={self.delta:g}",
            f"record-level: epsilon'={self.epsilon_record:g}, delta'={self.delta_record:g}",
            f"gradient noise sigma={self.sigma:.6g} per coordinate on {self.noised_blocks}",
            f"calibrated for T={self.T} iterations",
        ]
        return "\n".join(out)


def budget_report(spec: PrivacySpec, plan: NoisePlan, problem: ProblemSpec) -> BudgetReport:
    if spec.level == "none":
        eps_rec, del_rec = spec.epsilon, spec.delta
    elif spec.is_user_level:
        eps_rec, del_rec = user_level_reduction(spec.epsilon, spec.delta, problem.m, problem.r)
    else:
        eps_rec, del_rec = spec.epsilon, spec.delta
    return BudgetReport(
        level=spec.level,
        epsilon=spec.epsilon,
        delta=spec.delta,
        epsilon_record=eps_rec,
        delta_record=del_rec,
        sigma=plan.sigma,
        T=plan.T,
        noised_blocks=plan.noised_blocks,
    )
