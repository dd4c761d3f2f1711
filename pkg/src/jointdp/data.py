"""Federations of owners/users/records and synthetic tasks with known minimizers.

A federation holds n owner datasets of m records each, partitioned into r user
shards of m/r records. Synthetic generators are deterministic given a seed and
keep records in a bounded set (noise is norm-truncated per block), which both
preserves the known population minimizer and certifies Lipschitz constants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ConfigurationError, DomainSpec, random_unit, uniform_in_ball

# Block noise is truncated at this many standard deviations so records stay
# bounded; norm truncation is symmetric about the center, so the geometric
# median of each block distribution remains the center.
TRUNCATION_SIGMAS = 4.0


@dataclass(frozen=True)
class ProblemSpec:
    """Federation sizes: n owners, m records per owner, r users per owner."""

    n: int
    m: int
    r: int
    record_dim: int
    seed: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("need n >= 1 and m >= 1")
        if self.r < 1 or self.m % self.r != 0:
            raise ConfigurationError(f"r={self.r} must divide m={self.m}")
        if self.record_dim < 1:
            raise ConfigurationError("need record_dim >= 1")

    @property
    def shard_size(self) -> int:
        return self.m // self.r


@dataclass
class Federation:
    """shards: (n, m, d) records; user_of: (n, m) user index of each record."""

    shards: np.ndarray
    user_of: np.ndarray

    @property
    def n(self) -> int:
        return self.shards.shape[0]

    @property
    def m(self) -> int:
        return self.shards.shape[1]

    @property
    def d(self) -> int:
        return self.shards.shape[2]

    @property
    def r(self) -> int:
        return int(self.user_of.max()) + 1

    def validate(self) -> None:
        n, m, _ = self.shards.shape
        if self.user_of.shape != (n, m):
            raise ConfigurationError("user_of shape mismatch")
        users = np.unique(self.user_of)
        r = len(users)
        if not np.array_equal(users, np.arange(r)):
            raise ConfigurationError("user indices must be 0..r-1")
        if m % r != 0:
            raise ConfigurationError("record count not divisible by user count")
        per = m // r
        for j in range(n):
            counts = np.bincount(self.user_of[j], minlength=r)
            if not np.all(counts == per):
                raise ConfigurationError(
                    f"owner {j}: users do not hold equal shares of {per} records"
                )

    def records_of_user(self, owner: int, user: int) -> np.ndarray:
        return np.flatnonzero(self.user_of[owner] == user)


@dataclass(frozen=True)
class SyntheticTask:
    """A family of per-owner record distributions sharing one common center.

    kind "shared_mean": record z = [z_x | z_u]; z_x is the owner center p_j
    plus truncated Gaussian noise, z_u is the common center q plus noise. The
    population minimizer of the norm loss is exactly (p_j, q).

    kind "logistic": record z = [a | b | y]; features are Gaussian draws
    clipped to joint norm feature_bound, labels follow a logistic link under
    the teacher (p_j, q). No analytic minimizer is claimed.
    """

    kind: str
    personalized_centers: np.ndarray  # (n, k), each norm <= d_x/2
    shared_center: np.ndarray  # (ell,), norm <= d_u/2
    noise_scale: float
    heterogeneity: float
    feature_bound: float = 1.0

    @property
    def n(self) -> int:
        return self.personalized_centers.shape[0]

    @property
    def k(self) -> int:
        return self.personalized_centers.shape[1]

    @property
    def ell(self) -> int:
        return self.shared_center.shape[0]

    @property
    def record_dim(self) -> int:
        base = self.k + self.ell
        return base + 1 if self.kind == "logistic" else base


def sample_task(
    kind: str,
    domain: DomainSpec,
    heterogeneity: float,
    noise_scale: float,
    seed: int,
    shared_offset: float = 0.75,
) -> SyntheticTask:
    """Draw task centers: p_j sit on a sphere of radius heterogeneity * d_x/2
    around a common draw; the shared center q sits at shared_offset * d_u/2."""
    if not 0.0 <= heterogeneity <= 1.0:
        raise ConfigurationError("heterogeneity must be in [0, 1]")
    if not 0.0 <= shared_offset <= 1.0:
        raise ConfigurationError("shared_offset must be in [0, 1]")
    if noise_scale < 0.0:
        raise ConfigurationError("noise_scale must be >= 0")
    if kind not in ("shared_mean", "logistic"):
        raise ConfigurationError(f"unknown task kind {kind!r}")
    rng = np.random.default_rng(seed)
    rx = domain.d_x / 2.0
    ru = domain.d_u / 2.0
    common = uniform_in_ball(rng, domain.k, (1.0 - heterogeneity) * rx)
    centers = np.empty((domain.n, domain.k))
    for j in range(domain.n):
        centers[j] = common + heterogeneity * rx * random_unit(rng, domain.k)
    q = shared_offset * ru * random_unit(rng, domain.ell)
    return SyntheticTask(kind, centers, q, noise_scale, heterogeneity)


def _truncated_noise(rng: np.random.Generator, count: int, dim: int, scale: float) -> np.ndarray:
    """(count, dim) Gaussian noise with block norm clipped at 4 sigma."""
    if dim == 0 or scale == 0.0:
        return np.zeros((count, dim))
    g = rng.standard_normal((count, dim)) * scale
    bound = TRUNCATION_SIGMAS * scale
    norms = np.linalg.norm(g, axis=1)
    over = norms > bound
    g[over] *= (bound / norms[over])[:, None]
    return g


def draw_records(task: SyntheticTask, owner: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw count i.i.d. records from owner j's distribution."""
    k, ell = task.k, task.ell
    p = task.personalized_centers[owner]
    q = task.shared_center
    if task.kind == "shared_mean":
        zx = p + _truncated_noise(rng, count, k, task.noise_scale)
        zu = q + _truncated_noise(rng, count, ell, task.noise_scale)
        return np.hstack([zx, zu])
    # logistic: clipped Gaussian features, labels from the teacher's link
    f = rng.standard_normal((count, k + ell)) * task.noise_scale
    norms = np.linalg.norm(f, axis=1)
    over = norms > task.feature_bound
    f[over] *= (task.feature_bound / norms[over])[:, None]
    margin = f[:, :k] @ p + f[:, k:] @ q
    prob = 1.0 / (1.0 + np.exp(-margin))
    y = np.where(rng.uniform(size=count) < prob, 1.0, -1.0)
    return np.hstack([f, y[:, None]])


def generate(task: SyntheticTask, spec: ProblemSpec) -> Federation:
    """Deterministic-per-seed federation; records i.i.d. within each owner."""
    if spec.n != task.n:
        raise ConfigurationError(f"spec.n={spec.n} != task.n={task.n}")
    if spec.record_dim != task.record_dim:
        raise ConfigurationError(
            f"record_dim={spec.record_dim} != task record dim {task.record_dim}"
        )
    rng = np.random.default_rng(spec.seed)
    shards = np.empty((spec.n, spec.m, spec.record_dim))
    for j in range(spec.n):
        shards[j] = draw_records(task, j, spec.m, rng)
    user_of = np.repeat(
        np.arange(spec.r)[None, :], spec.n, axis=0
    ).repeat(spec.shard_size, axis=1)
    fed = Federation(shards, user_of)
    fed.validate()
    return fed


def replace_record(fed: Federation, owner: int, index: int, fresh: np.ndarray) -> Federation:
    """Record-level neighbor: a federation differing in exactly one record."""
    if not 0 <= owner < fed.n:
        raise IndexError(f"owner {owner} out of range")
    if not 0 <= index < fed.m:
        raise IndexError(f"record index {index} out of range")
    fresh = np.asarray(fresh, dtype=float)
    if fresh.shape != (fed.d,):
        raise ConfigurationError(f"fresh record has shape {fresh.shape}, want ({fed.d},)")
    shards = fed.shards.copy()
    shards[owner, index] = fresh
    return Federation(shards, fed.user_of.copy())


def replace_user(fed: Federation, owner: int, user: int, fresh_shard: np.ndarray) -> Federation:
    """User-level neighbor: all m/r records of one user replaced."""
    idx = fed.records_of_user(owner, user)
    if len(idx) == 0:
        raise IndexError(f"user {user} of owner {owner} not found")
    fresh_shard = np.asarray(fresh_shard, dtype=float)
    if fresh_shard.shape != (len(idx), fed.d):
        raise ConfigurationError(
            f"fresh shard has shape {fresh_shard.shape}, want {(len(idx), fed.d)}"
        )
    shards = fed.shards.copy()
    shards[owner, idx] = fresh_shard
    return Federation(shards, fed.user_of.copy())


def save_federation(fed: Federation, path: str) -> None:
    """Line-oriented text format: header, then one record per line as
    owner_id,user_id,v1,...,vd with round-trippable float reprs."""
    with open(path, "w") as fh:
        fh.write(f"# jointdp-federation n={fed.n} m={fed.m} r={fed.r} d={fed.d}\n")
        for j in range(fed.n):
            for i in range(fed.m):
                vals = ",".join(repr(float(v)) for v in fed.shards[j, i])
                fh.write(f"{j},{int(fed.user_of[j, i])},{vals}\n")


def load_federation(path: str) -> Federation:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# jointdp-federation"):
            raise ConfigurationError(f"{path}: not a federation file")
        meta = dict(kv.split("=") for kv in header.split()[2:])
        n, m, r, d = (int(meta[key]) for key in ("n", "m", "r", "d"))
        shards = np.zeros((n, m, d))
        user_of = np.zeros((n, m), dtype=int)
        counts = np.zeros(n, dtype=int)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            j, w = int(parts[0]), int(parts[1])
            vals = [float(v) for v in parts[2:]]
            if len(vals) != d:
                raise ConfigurationError(f"{path}: record has {len(vals)} values, want {d}")
            if counts[j] >= m:
                raise ConfigurationError(f"{path}: owner {j} has more than {m} records")
            shards[j, counts[j]] = vals
            user_of[j, counts[j]] = w
            counts[j] += 1
    if not np.all(counts == m):
        raise ConfigurationError(f"{path}: owners with missing records: {counts}")
    fed = Federation(shards, user_of)
    fed.validate()
    if fed.r != r:
        raise ConfigurationError(f"{path}: header says r={r}, records imply r={fed.r}")
    return fed
