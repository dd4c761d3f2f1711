"""Convex Lipschitz per-record losses with analytic block gradients.

Three models:

* shared_mean_norm: ||x - z_x|| + ||u - z_u||. Each block contributes a
  1-Lipschitz term, so the joint gradient norm is at most sqrt(2). Under a
  noise distribution symmetric about the center, the population minimizer is
  the center itself, which makes excess population loss exactly measurable.
* shared_mean_huber: the same geometry with each block norm smoothed by a
  Huber hinge of threshold mu, giving a (1/mu)-smooth gradient.
* logistic: log(1 + exp(-y * margin)) on records with norm-bounded features,
  so the Lipschitz constant equals the feature bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import SyntheticTask, Federation, draw_records
from .params import BlockGradient, ConfigurationError, PartitionedParams

KINDS = ("shared_mean_norm", "shared_mean_huber", "logistic")


@dataclass(frozen=True)
class LossModel:
    kind: str
    lipschitz: float
    smoothness: Optional[float]  # None for the non-smooth norm loss
    mu: Optional[float]  # Huber threshold, huber only

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown loss kind {self.kind!r}")


def shared_mean_norm_model() -> LossModel:
    return LossModel("shared_mean_norm", math.sqrt(2.0), None, None)


def shared_mean_huber_model(mu: float) -> LossModel:
    if mu <= 0:
        raise ConfigurationError("huber threshold mu must be > 0")
    return LossModel("shared_mean_huber", math.sqrt(2.0), 1.0 / mu, mu)


def logistic_model(feature_bound: float = 1.0) -> LossModel:
    if feature_bound <= 0:
        raise ConfigurationError("feature_bound must be > 0")
    return LossModel("logistic", feature_bound, feature_bound**2 / 4.0, None)


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    context: str  # "empirical" | "population_estimate"
    stderr: Optional[float] = None


def _huber_of_norm(t: np.ndarray, mu: float) -> np.ndarray:
    return np.where(t <= mu, t * t / (2.0 * mu), t - mu / 2.0)


def loss_batch(model: LossModel, x_j: np.ndarray, u: np.ndarray, records: np.ndarray) -> np.ndarray:
    """Per-record loss values for a (count, d) block of records."""
    k = x_j.shape[0]
    ell = u.shape[0]
    if model.kind == "logistic":
        if records.shape[1] != k + ell + 1:
            raise ConfigurationError("record dimension mismatch for logistic loss")
        margin = records[:, :k] @ x_j + records[:, k : k + ell] @ u
        y = records[:, k + ell]
        return np.logaddexp(0.0, -y * margin)
    if records.shape[1] != k + ell:
        raise ConfigurationError("record dimension mismatch")
    tx = np.linalg.norm(records[:, :k] - x_j, axis=1)
    tu = np.linalg.norm(records[:, k:] - u, axis=1)
    if model.kind == "shared_mean_norm":
        return tx + tu
    return _huber_of_norm(tx, model.mu) + _huber_of_norm(tu, model.mu)


def loss(model: LossModel, x_j: np.ndarray, u: np.ndarray, z: np.ndarray) -> float:
    return float(loss_batch(model, x_j, u, np.asarray(z, dtype=float)[None, :])[0])


def _norm_grad(v: np.ndarray) -> np.ndarray:
    # minimum-norm subgradient at the kink
    t = float(np.linalg.norm(v))
    if t == 0.0:
        return np.zeros_like(v)
    return v / t


def _huber_grad(v: np.ndarray, mu: float) -> np.ndarray:
    t = float(np.linalg.norm(v))
    if t <= mu:
        return v / mu
    return v / t


def grad_blocks(
    model: LossModel, x_j: np.ndarray, u: np.ndarray, z: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the loss at one record, split into (k,) and (ell,) blocks."""
    k = x_j.shape[0]
    ell = u.shape[0]
    if model.kind == "logistic":
        margin = float(z[:k] @ x_j + z[k : k + ell] @ u)
        y = float(z[k + ell])
        s = -y / (1.0 + math.exp(y * margin))
        return s * z[:k], s * z[k : k + ell]
    vx = x_j - z[:k]
    vu = u - z[k:]
    if model.kind == "shared_mean_norm":
        return _norm_grad(vx), _norm_grad(vu)
    return _huber_grad(vx, model.mu), _huber_grad(vu, model.mu)


def grad(
    model: LossModel, x_j: np.ndarray, u: np.ndarray, z: np.ndarray, owner: int = 0
) -> BlockGradient:
    gx, gu = grad_blocks(model, x_j, u, np.asarray(z, dtype=float))
    return BlockGradient(owner, gx, gu)


def grad_mean_blocks(
    model: LossModel, x_j: np.ndarray, u: np.ndarray, records: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Average gradient over a (count, d) batch of records, vectorized."""
    k = x_j.shape[0]
    ell = u.shape[0]
    count = records.shape[0]
    if model.kind == "logistic":
        margin = records[:, :k] @ x_j + records[:, k : k + ell] @ u
        y = records[:, k + ell]
        s = -y / (1.0 + np.exp(y * margin))
        return (s @ records[:, :k]) / count, (s @ records[:, k : k + ell]) / count
    vx = x_j - records[:, :k]
    vu = u - records[:, k:]
    if model.kind == "shared_mean_norm":
        tx = np.linalg.norm(vx, axis=1)
        tu = np.linalg.norm(vu, axis=1)
        wx = np.divide(1.0, tx, out=np.zeros_like(tx), where=tx > 0)
        wu = np.divide(1.0, tu, out=np.zeros_like(tu), where=tu > 0)
    else:
        tx = np.linalg.norm(vx, axis=1)
        tu = np.linalg.norm(vu, axis=1)
        wx = np.where(tx <= model.mu, 1.0 / model.mu, np.divide(1.0, tx, out=np.ones_like(tx), where=tx > 0))
        wu = np.where(tu <= model.mu, 1.0 / model.mu, np.divide(1.0, tu, out=np.ones_like(tu), where=tu > 0))
    return (wx @ vx) / count, (wu @ vu) / count


def _owner_shared(params: PartitionedParams, per_owner_shared: Optional[np.ndarray], j: int) -> np.ndarray:
    if per_owner_shared is None:
        return params.shared
    return per_owner_shared[j]


def empirical_loss(
    model: LossModel,
    params: PartitionedParams,
    fed: Federation,
    per_owner_shared: Optional[np.ndarray] = None,
) -> ObjectiveValue:
    """Exact average of the loss over all n*m records.

    per_owner_shared, when given as an (n, ell) array, evaluates owner j at
    its own shared block (per-silo results) instead of params.shared.
    """
    n = fed.n
    if params.personalized.shape[0] != n:
        raise ConfigurationError("federation and params disagree on n")
    total = 0.0
    for j in range(n):
        u = _owner_shared(params, per_owner_shared, j)
        total += float(np.sum(loss_batch(model, params.personalized[j], u, fed.shards[j])))
    return ObjectiveValue(total / (n * fed.m), "empirical")


def population_loss_estimate(
    model: LossModel,
    params: PartitionedParams,
    task: SyntheticTask,
    n_samples: int,
    seed: int,
    per_owner_shared: Optional[np.ndarray] = None,
) -> ObjectiveValue:
    """Monte-Carlo population loss over n_samples fresh records per owner,
    deterministic given the evaluation seed, with the standard error of the
    pooled sample mean."""
    if n_samples < 1:
        raise ConfigurationError("need n_samples >= 1")
    rng = np.random.default_rng(seed)
    n = task.n
    values = np.empty((n, n_samples))
    for j in range(n):
        z = draw_records(task, j, n_samples, rng)
        u = _owner_shared(params, per_owner_shared, j)
        values[j] = loss_batch(model, params.personalized[j], u, z)
    flat = values.ravel()
    stderr = float(flat.std(ddof=1) / math.sqrt(flat.size)) if flat.size > 1 else 0.0
    return ObjectiveValue(float(flat.mean()), "population_estimate", stderr)


def paired_excess_estimate(
    model: LossModel,
    params: PartitionedParams,
    reference: PartitionedParams,
    task: SyntheticTask,
    n_samples: int,
    seed: int,
    per_owner_shared: Optional[np.ndarray] = None,
) -> ObjectiveValue:
    """Estimate f(params) - f(reference) with common random numbers.

    Evaluating both points on the same fresh draws cancels most of the
    Monte-Carlo noise, so the reported stderr is that of the difference.
    """
    if n_samples < 1:
        raise ConfigurationError("need n_samples >= 1")
    rng = np.random.default_rng(seed)
    n = task.n
    diffs = np.empty((n, n_samples))
    for j in range(n):
        z = draw_records(task, j, n_samples, rng)
        u = _owner_shared(params, per_owner_shared, j)
        diffs[j] = loss_batch(model, params.personalized[j], u, z) - loss_batch(
            model, reference.personalized[j], reference.shared, z
        )
    flat = diffs.ravel()
    stderr = float(flat.std(ddof=1) / math.sqrt(flat.size)) if flat.size > 1 else 0.0
    return ObjectiveValue(float(flat.mean()), "population_estimate", stderr)
