"""Partitioned parameter space: n per-owner blocks plus one shared block.

Every block lives in an origin-centered Euclidean ball, so projection is
closed-form and block diameters are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class ConfigurationError(ValueError):
    """Raised for inconsistent dimensions or invalid configuration values."""


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of the parameter space: n owners, per-owner dimension k,
    shared dimension ell, and ball diameters d_x (per-owner) and d_u (shared)."""

    n: int
    k: int
    ell: int
    d_x: float
    d_u: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError(f"need n >= 1, got {self.n}")
        if self.k < 0:
            raise ConfigurationError(f"need k >= 0, got {self.k}")
        if self.ell < 1:
            raise ConfigurationError(f"need ell >= 1, got {self.ell}")
        if self.d_x < 0:
            raise ConfigurationError(f"need d_x >= 0, got {self.d_x}")
        if self.d_u <= 0:
            raise ConfigurationError(f"need d_u > 0, got {self.d_u}")

    @property
    def total_dim(self) -> int:
        return self.n * self.k + self.ell


def radius(spec: DomainSpec) -> float:
    """Diameter of the product space X^n x U: sqrt(n d_x^2 + d_u^2)."""
    return float(np.sqrt(spec.n * spec.d_x**2 + spec.d_u**2))


@dataclass
class PartitionedParams:
    """A point [x_1, ..., x_n, u]: personalized is (n, k), shared is (ell,)."""

    personalized: np.ndarray
    shared: np.ndarray

    def copy(self) -> "PartitionedParams":
        return PartitionedParams(self.personalized.copy(), self.shared.copy())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.personalized.ravel(), self.shared])

    def distance(self, other: "PartitionedParams") -> float:
        return float(np.linalg.norm(self.flatten() - other.flatten()))


@dataclass
class BlockGradient:
    """Gradient touching one owner block (or all of them) plus the shared block.

    grad_x has shape (k,) for a single owner_index, (n, k) for "all". The
    implied full-space gradient is zero on every untouched owner block.
    """

    owner_index: Union[int, str]
    grad_x: np.ndarray
    grad_u: np.ndarray


def zeros(spec: DomainSpec) -> PartitionedParams:
    return PartitionedParams(
        np.zeros((spec.n, spec.k)), np.zeros(spec.ell)
    )


def _check_dims(params: PartitionedParams, spec: DomainSpec) -> None:
    if params.personalized.shape != (spec.n, spec.k):
        raise ConfigurationError(
            f"personalized shape {params.personalized.shape} != {(spec.n, spec.k)}"
        )
    if params.shared.shape != (spec.ell,):
        raise ConfigurationError(
            f"shared shape {params.shared.shape} != {(spec.ell,)}"
        )


def project_block(v: np.ndarray, ball_radius: float) -> np.ndarray:
    """Project a single vector onto the origin-centered ball of the given radius."""
    norm = float(np.linalg.norm(v))
    if norm <= ball_radius:
        return v.copy()
    return v * (ball_radius / norm)


def project(params: PartitionedParams, spec: DomainSpec) -> PartitionedParams:
    """Project every block independently onto its ball. Idempotent."""
    _check_dims(params, spec)
    rx = spec.d_x / 2.0
    ru = spec.d_u / 2.0
    pers = params.personalized
    if spec.k > 0:
        norms = np.linalg.norm(pers, axis=1)
        scale = np.ones(spec.n)
        over = norms > rx
        scale[over] = rx / norms[over]
        pers = pers * scale[:, None]
    else:
        pers = pers.copy()
    return PartitionedParams(pers, project_block(params.shared, ru))


def in_domain(params: PartitionedParams, spec: DomainSpec, tol: float = 1e-9) -> bool:
    _check_dims(params, spec)
    rx = spec.d_x / 2.0
    ru = spec.d_u / 2.0
    if spec.k > 0:
        if float(np.max(np.linalg.norm(params.personalized, axis=1), initial=0.0)) > rx + tol:
            return False
    return float(np.linalg.norm(params.shared)) <= ru + tol


def random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim == 0:
        return np.zeros(0)
    v = rng.standard_normal(dim)
    norm = np.linalg.norm(v)
    while norm == 0.0:  # defensive; probability zero
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
    return v / norm


def uniform_in_ball(rng: np.random.Generator, dim: int, ball_radius: float) -> np.ndarray:
    if dim == 0 or ball_radius == 0.0:
        return np.zeros(dim)
    u = rng.uniform()
    return random_unit(rng, dim) * ball_radius * u ** (1.0 / dim)


def apply_step(
    params: PartitionedParams,
    grad: BlockGradient,
    eta: float,
    spec: DomainSpec,
) -> PartitionedParams:
    """Projected step params - eta * grad; only the touched blocks change."""
    _check_dims(params, spec)
    if eta <= 0:
        raise ConfigurationError(f"need eta > 0, got {eta}")
    if grad.grad_u.shape != (spec.ell,):
        raise ConfigurationError("grad_u dimension mismatch")
    pers = params.personalized.copy()
    rx = spec.d_x / 2.0
    ru = spec.d_u / 2.0
    if grad.owner_index == "all":
        if grad.grad_x.shape != (spec.n, spec.k):
            raise ConfigurationError("grad_x dimension mismatch for owner_index='all'")
        pers -= eta * grad.grad_x
        if spec.k > 0:
            norms = np.linalg.norm(pers, axis=1)
            over = norms > rx
            pers[over] *= (rx / norms[over])[:, None]
    else:
        j = int(grad.owner_index)
        if not 0 <= j < spec.n:
            raise ConfigurationError(f"owner index {j} out of range")
        if grad.grad_x.shape != (spec.k,):
            raise ConfigurationError("grad_x dimension mismatch")
        pers[j] = project_block(pers[j] - eta * grad.grad_x, rx)
    shared = project_block(params.shared - eta * grad.grad_u, ru)
    return PartitionedParams(pers, shared)
