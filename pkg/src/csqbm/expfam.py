"""Exponential-family priors over continuous visible units.

Only the independent-Gaussian family ships. Natural parameters are stored
as a flat vector of per-unit pairs, interleaved as
(theta_1_lin, theta_1_quad, theta_2_lin, theta_2_quad, ...), matching the
sufficient-statistic layout (v_1, v_1^2, v_2, v_2^2, ...). For a unit
with moments (mu, sigma) the pair is (mu/sigma^2, -1/(2 sigma^2)).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
import math

import numpy as np


class IntegrabilityError(ValueError):
    """Natural parameters describe a non-normalizable density."""


def _check_integrable(theta: np.ndarray) -> None:
    quad = theta[1::2]
    bad = np.flatnonzero(quad >= 0)
    if bad.size:
        raise IntegrabilityError(
            f"quadratic natural parameter of unit {int(bad[0])} is "
            f"{quad[bad[0]]:.6g} >= 0; density is not normalizable")


def natural_from_moments(mus, sigmas) -> np.ndarray:
    """(mu_i, sigma_i) per unit -> interleaved natural parameter vector."""
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if mus.shape != sigmas.shape or mus.ndim != 1:
        raise ValueError("mus and sigmas must be 1-d arrays of equal length")
    if np.any(sigmas <= 0):
        raise ValueError("sigmas must be positive")
    theta = np.empty(2 * len(mus))
    theta[0::2] = mus / sigmas**2
    theta[1::2] = -0.5 / sigmas**2
    return theta


def moments_from_natural(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of natural_from_moments; returns (mus, sigmas)."""
    theta = np.asarray(theta, dtype=float)
    _check_integrable(theta)
    variances = -0.5 / theta[1::2]
    mus = theta[0::2] * variances
    return mus, np.sqrt(variances)


def sufficient_stats(v: np.ndarray) -> np.ndarray:
    """s(v) = (v_1, v_1^2, v_2, v_2^2, ...)."""
    v = np.asarray(v, dtype=float)
    s = np.empty(2 * len(v))
    s[0::2] = v
    s[1::2] = v**2
    return s


def stats_jacobian(v: np.ndarray) -> np.ndarray:
    """ds/dv, shape (2n, n): column k has 1 in row 2k and 2 v_k in row 2k+1."""
    v = np.asarray(v, dtype=float)
    n = len(v)
    jac = np.zeros((2 * n, n))
    jac[2 * np.arange(n), np.arange(n)] = 1.0
    jac[2 * np.arange(n) + 1, np.arange(n)] = 2.0 * v
    return jac


def log_partition(theta: np.ndarray) -> float:
    """A(theta) = sum_i [ -theta_lin^2 / (4 theta_quad) + log(pi / -theta_quad) / 2 ]."""
    theta = np.asarray(theta, dtype=float)
    _check_integrable(theta)
    lin, quad = theta[0::2], theta[1::2]
    return float(np.sum(-(lin**2) / (4 * quad) + 0.5 * np.log(np.pi / (-quad))))


def tilt(theta: np.ndarray, coupling: np.ndarray, h: np.ndarray, beta: float) -> np.ndarray:
    """Natural parameters of the visible conditional given hidden spins h.

    theta' = beta * (theta + W h). Raises IntegrabilityError (naming the
    offending unit) if any tilted quadratic component becomes non-negative.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    theta = np.asarray(theta, dtype=float)
    coupling = np.asarray(coupling, dtype=float)
    h = np.asarray(h, dtype=float)
    if coupling.shape != (len(theta), len(h)):
        raise ValueError(f"coupling shape {coupling.shape} does not match "
                         f"({len(theta)}, {len(h)})")
    tilted = beta * (theta + coupling @ h)
    _check_integrable(tilted)
    return tilted


def sample(theta: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Independent per-unit Gaussian draws from the natural parameters."""
    mus, sigmas = moments_from_natural(theta)
    if size is None:
        return rng.normal(mus, sigmas)
    return rng.normal(mus, sigmas, size=(size, len(mus)))


def log_density(theta: np.ndarray, v: np.ndarray) -> float:
    """log p(v) = theta . s(v) - A(theta) (Gaussian base measure is 1)."""
    theta = np.asarray(theta, dtype=float)
    return float(theta @ sufficient_stats(v)) - log_partition(theta)


class ExpFamilyPrior(ABC):
    """Interface every visible-unit family must provide."""

    n: int
    theta: np.ndarray

    @abstractmethod
    def c_value(self, v) -> float: ...

    @abstractmethod
    def grad_c_v(self, v) -> np.ndarray: ...

    @abstractmethod
    def grad_c_theta(self, v) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianPrior(ExpFamilyPrior):
    """Independent Gaussian prior, one (mu, sigma) per visible unit."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or len(theta) % 2:
            raise ValueError("theta must be a flat vector of per-unit pairs")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        _check_integrable(theta)
        theta = theta.copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_moments(cls, mus, sigmas) -> "GaussianPrior":
        return cls(natural_from_moments(mus, sigmas))

    @property
    def n(self) -> int:
        return len(self.theta) // 2

    @property
    def stat_dim(self) -> int:
        return len(self.theta)

    def c_value(self, v) -> float:
        """c(v) = theta . s(v); the Gaussian base measure contributes 0."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected {self.n} visible values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("visible values must be finite")
        return float(self.theta @ sufficient_stats(v))

    def grad_c_v(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.theta[0::2] + 2.0 * self.theta[1::2] * v

    def grad_c_theta(self, v) -> np.ndarray:
        return sufficient_stats(v)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return sample(self.theta, rng, size=size)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        return moments_from_natural(self.theta)
