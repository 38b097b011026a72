"""Closed-form expectations of the squared estimator error.

Orthogonal road networks follow extreme-value (Gumbel) statistics of the
largest noise projection per direction; uniformly random road angles
give O(1/N) laws split into a geometric and a noise term; spectral
perturbations of the angle law enter through a quadratic penalty with
the flat spectrum as the predicted minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class GumbelParams:
    """Location/scale of the limiting law of a direction's largest projection."""

    mu: float
    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def mean(self) -> float:
        return self.mu + EULER_GAMMA * self.beta

    @property
    def variance(self) -> float:
        return math.pi**2 * self.beta**2 / 6.0


@dataclass(frozen=True)
class FourierSpectrum:
    """Squared magnitudes |C_m|^2 of an angle-density perturbation, m >= 1.

    Also enforces the sufficient nonnegativity condition
    2 sum_m |C_m| <= 1/2pi on the underlying density.
    """

    power: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.power)
        if any(x < 0 or not math.isfinite(x) for x in p):
            raise ValueError("spectral power must be finite and nonnegative")
        amp = 2.0 * sum(math.sqrt(x) for x in p)
        if amp > 1.0 / (2.0 * math.pi) + 1e-12:
            raise ValueError("spectrum overshoots the nonnegative-density bound")
        object.__setattr__(self, "power", p)

    @classmethod
    def single_mode(cls, epsilon: float, mode: int = 1) -> "FourierSpectrum":
        p = [0.0] * mode
        p[mode - 1] = float(epsilon) ** 2
        return cls(tuple(p))

    def total_power(self) -> float:
        return float(sum(self.power))


def gumbel_params_leading(n_j: int, sigma: float) -> GumbelParams:
    """Leading-order Gumbel constants for the max of n_j Gaussian projections."""
    if n_j < 2:
        raise ValueError("need at least two samples per direction")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    root = math.sqrt(2.0 * math.log(n_j))
    return GumbelParams(mu=sigma * root, beta=sigma / root)


def orthogonal_expected_sq_error(params: Sequence[GumbelParams]) -> float:
    """Expected squared error for four orthogonal directions.

    (pi^2/24) sum beta_j^2 plus quarter-squared mean mismatches of the
    two opposing pairs.
    """
    if len(params) != 4:
        raise ValueError("exactly four direction parameters are required")
    b = np.array([p.beta for p in params])
    m = np.array([p.mu for p in params])
    spread = (math.pi**2 / 24.0) * float((b**2).sum())
    d13 = float(m[0] - m[2] + EULER_GAMMA * (b[0] - b[2]))
    d24 = float(m[1] - m[3] + EULER_GAMMA * (b[1] - b[3]))
    return spread + 0.25 * d13 * d13 + 0.25 * d24 * d24


def orthogonal_leading_order(n_j: Sequence[int], sigma: float) -> float:
    """(pi^2 sigma^2 / 48) sum_j 1/log(n_j)."""
    if len(n_j) != 4:
        raise ValueError("exactly four direction counts are required")
    if any(n < 2 for n in n_j):
        raise ValueError("need at least two vehicles per direction")
    return (math.pi**2 * sigma**2 / 48.0) * float(sum(1.0 / math.log(n) for n in n_j))


class UniformErrorTerms(NamedTuple):
    total: float
    geometric: float
    noise: float


def uniform_expected_sq_error(n: int, w: float, sigmas: Sequence[float]) -> UniformErrorTerms:
    """O(1/N) law for uniformly random road angles.

    geometric term 2 w^2 / (9 N); noise term 3 sum sigma_i^2 / (2 N^2).
    """
    if n < 3:
        raise ValueError("need at least three vehicles")
    geometric = 2.0 * w * w / (9.0 * n)
    noise = 3.0 * float(np.sum(np.square(np.asarray(sigmas, dtype=float)))) / (2.0 * n * n)
    return UniformErrorTerms(geometric + noise, geometric, noise)


def fourier_expected_sq_error(n: int, w: float, spectrum: FourierSpectrum) -> float:
    """Geometric-term predictor under a perturbed angle spectrum.

    (2 w^2 / 9N) * (1 + 4 pi^2 sum_m |C_m|^2). The prefactor is
    normalized so that a zero spectrum reproduces the uniform-angle
    geometric term exactly, which pins the relative penalty of any
    nonzero mode at 4 pi^2 per unit spectral power.
    """
    if n < 3:
        raise ValueError("need at least three vehicles")
    base = 2.0 * w * w / (9.0 * n)
    return base * (1.0 + 4.0 * math.pi**2 * spectrum.total_power())
