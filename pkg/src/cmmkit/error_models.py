"""Random models for positioning noise and road-angle distributions.

Covers the per-vehicle Gaussian composite noise, four families of
road-angle laws (uniform, orthogonal, Fourier-perturbed, empirical
histogram), circular angle-gap statistics, and the two closed-form gap
densities used by the calibration experiments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import TWO_PI, circular_gaps
from .seeding import substream

# Grid resolution for Fourier density validation and envelope search.
_FOURIER_GRID = 4096


class InvalidDistributionError(ValueError):
    """Raised when a density is negative or otherwise malformed."""


@dataclass(frozen=True)
class NoiseModel:
    """Independent zero-mean Gaussian noise, one sigma per vehicle.

    The in-lane deviation is folded into the same Gaussian as the
    receiver noise, so a vehicle's composite error is a single 2D
    normal with isotropic component std sigma_i.
    """

    sigmas: tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigmas)
        if any(x < 0 or not math.isfinite(x) for x in s):
            raise ValueError("sigmas must be finite and nonnegative")
        object.__setattr__(self, "sigmas", s)

    def __len__(self) -> int:
        return len(self.sigmas)

    @classmethod
    def constant(cls, sigma: float, n: int) -> "NoiseModel":
        return cls((float(sigma),) * n)


@dataclass(frozen=True)
class AngleDistribution:
    """Road-angle law on [0, 2*pi).

    kind is one of:
      - 'uniform'
      - 'orthogonal': weights over the four axis directions
      - 'fourier': density 1/2pi + 2 sum_m Re(C_m e^{i m theta})
      - 'empirical': normalized histogram (bin centers + probabilities)
    """

    kind: str
    weights: tuple[float, ...] = ()
    coefficients: tuple[complex, ...] = ()
    bin_centers: tuple[float, ...] = ()
    bin_probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "orthogonal", "fourier", "empirical"):
            raise InvalidDistributionError(f"unknown kind {self.kind!r}")
        if self.kind == "orthogonal":
            w = np.asarray(self.weights, dtype=float)
            if len(w) != 4 or (w < 0).any() or w.sum() <= 0:
                raise InvalidDistributionError("orthogonal needs 4 nonnegative weights")
            object.__setattr__(self, "weights", tuple(w / w.sum()))
        if self.kind == "fourier":
            object.__setattr__(self, "coefficients", tuple(complex(c) for c in self.coefficients))
            dens = self.fourier_density(np.linspace(0.0, TWO_PI, _FOURIER_GRID, endpoint=False))
            if dens.min() < -1e-12:
                raise InvalidDistributionError(
                    f"Fourier density is negative (min {dens.min():.3e})"
                )
        if self.kind == "empirical":
            p = np.asarray(self.bin_probs, dtype=float)
            if len(p) == 0 or (p < 0).any():
                raise InvalidDistributionError("empirical needs nonnegative probabilities")
            if abs(p.sum() - 1.0) > 1e-9:
                raise InvalidDistributionError("empirical probabilities must sum to 1")
            if len(self.bin_centers) != len(p):
                raise InvalidDistributionError("bin centers and probabilities must align")

    @classmethod
    def uniform(cls) -> "AngleDistribution":
        return cls("uniform")

    @classmethod
    def orthogonal(cls, weights: Sequence[float] = (1, 1, 1, 1)) -> "AngleDistribution":
        return cls("orthogonal", weights=tuple(float(w) for w in weights))

    @classmethod
    def fourier(cls, coefficients: Sequence[complex]) -> "AngleDistribution":
        return cls("fourier", coefficients=tuple(complex(c) for c in coefficients))

    @classmethod
    def single_mode(cls, epsilon: float, mode: int = 1) -> "AngleDistribution":
        """Fourier law with one real coefficient C_mode = epsilon."""
        coef = [0j] * mode
        coef[mode - 1] = complex(epsilon)
        return cls.fourier(coef)

    @classmethod
    def empirical(cls, bin_centers: Sequence[float], bin_probs: Sequence[float]) -> "AngleDistribution":
        return cls(
            "empirical",
            bin_centers=tuple(float(b) for b in bin_centers),
            bin_probs=tuple(float(p) for p in bin_probs),
        )

    def fourier_density(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        dens = np.full(theta.shape, 1.0 / TWO_PI)
        for m, c in enumerate(self.coefficients, start=1):
            if c != 0:
                dens = dens + 2.0 * (c * np.exp(1j * m * theta)).real
        return dens

    def density(self, theta: np.ndarray) -> np.ndarray:
        """Pointwise density; orthogonal/empirical return the histogram-style value."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "uniform":
            return np.full(theta.shape, 1.0 / TWO_PI)
        if self.kind == "fourier":
            return self.fourier_density(theta)
        raise InvalidDistributionError(f"{self.kind} has no continuous density")


@dataclass(frozen=True)
class GapSet:
    """Circular increments of a sorted angle list; sums to 2*pi."""

    gaps: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gaps, dtype=float).copy()
        if (g < 0).any():
            raise ValueError("gaps must be nonnegative")
        g.setflags(write=False)
        object.__setattr__(self, "gaps", g)

    def __len__(self) -> int:
        return len(self.gaps)

    def total(self) -> float:
        return float(self.gaps.sum())


def sample_noncommon(model: NoiseModel, n: int, seed: int, *path: int) -> np.ndarray:
    """(n, 2) independent Gaussian draws, row i with component std sigma_i."""
    if n != len(model):
        raise ValueError("n must equal the number of sigmas")
    rng = substream(seed, *path)
    draws = rng.standard_normal((n, 2))
    return draws * np.asarray(model.sigmas, dtype=float)[:, None]


def _sample_fourier(dist: AngleDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    grid = np.linspace(0.0, TWO_PI, _FOURIER_GRID, endpoint=False)
    envelope = float(dist.fourier_density(grid).max()) * (1.0 + 1e-9)
    out = np.empty(n)
    filled = 0
    while filled < n:
        batch = max(256, 2 * (n - filled))
        cand = rng.uniform(0.0, TWO_PI, batch)
        height = rng.uniform(0.0, envelope, batch)
        acc = cand[height <= dist.fourier_density(cand)]
        take = min(n - filled, len(acc))
        out[filled : filled + take] = acc[:take]
        filled += take
    return out


def sample_angles(dist: AngleDistribution, n: int, seed: int, *path: int) -> np.ndarray:
    """n i.i.d. draws from the angle law, sorted ascending."""
    rng = substream(seed, *path)
    if dist.kind == "uniform":
        draws = rng.uniform(0.0, TWO_PI, n)
    elif dist.kind == "orthogonal":
        base = np.array([0.0, math.pi / 2, math.pi, 3 * math.pi / 2])
        draws = base[rng.choice(4, size=n, p=np.asarray(dist.weights))]
    elif dist.kind == "fourier":
        draws = _sample_fourier(dist, n, rng)
    else:  # empirical
        centers = np.asarray(dist.bin_centers, dtype=float)
        probs = np.asarray(dist.bin_probs, dtype=float)
        width = TWO_PI / len(centers)
        idx = rng.choice(len(centers), size=n, p=probs)
        draws = (centers[idx] + rng.uniform(-0.5, 0.5, n) * width) % TWO_PI
    return np.sort(draws)


def angle_gaps(sorted_angles: Sequence[float]) -> GapSet:
    """Gap set of an ascending angle list in [0, 2*pi)."""
    a = np.asarray(sorted_angles, dtype=float)
    if (np.diff(a) < 0).any():
        raise ValueError("angles must be sorted ascending")
    return GapSet(circular_gaps(a))


def gap_pdf_asymptotic(gap, n: int, p_at_theta: float):
    """Large-N nearest-neighbor gap density 2 N p exp(-2 N p gap)."""
    if n < 1 or p_at_theta <= 0:
        raise ValueError("need n >= 1 and p > 0")
    gap = np.asarray(gap, dtype=float)
    rate = 2.0 * n * p_at_theta
    out = rate * np.exp(-rate * gap)
    return float(out) if out.ndim == 0 else out


def gap_pdf_uniform_exact(gap, n: int):
    """Half-circle gap density (N/pi)(1 - gap/pi)^(N-1) on [0, pi]."""
    if n < 1:
        raise ValueError("need n >= 1")
    gap = np.asarray(gap, dtype=float)
    inside = (gap >= 0.0) & (gap <= math.pi)
    out = np.where(inside, (n / math.pi) * np.clip(1.0 - gap / math.pi, 0.0, 1.0) ** (n - 1), 0.0)
    return float(out) if out.ndim == 0 else out


def gap_pdf_circle_exact(gap, n: int):
    """Full-circle gap density ((N-1)/2pi)(1 - gap/2pi)^(N-2) on [0, 2pi].

    Marginal law of one spacing between N i.i.d. uniform angles on the
    circle; the reference against which the two model densities are
    tested.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    gap = np.asarray(gap, dtype=float)
    inside = (gap >= 0.0) & (gap <= TWO_PI)
    out = np.where(
        inside, ((n - 1) / TWO_PI) * np.clip(1.0 - gap / TWO_PI, 0.0, 1.0) ** (n - 2), 0.0
    )
    return float(out) if out.ndim == 0 else out


def gap_cdf_circle_exact(gap, n: int):
    gap = np.asarray(gap, dtype=float)
    out = 1.0 - np.clip(1.0 - gap / TWO_PI, 0.0, 1.0) ** (n - 1)
    return float(out) if out.ndim == 0 else out


def write_angle_histogram(path: str | Path, dist: AngleDistribution) -> None:
    """Persist an empirical angle law as (angle_bin_center, probability) CSV."""
    if dist.kind != "empirical":
        raise InvalidDistributionError("only empirical distributions are persisted")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_bin_center", "probability"])
        for c, p in zip(dist.bin_centers, dist.bin_probs):
            writer.writerow([repr(c), repr(p)])


def read_angle_histogram(path: str | Path) -> AngleDistribution:
    centers: list[float] = []
    probs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["angle_bin_center", "probability"]:
            raise InvalidDistributionError(f"unexpected histogram header {header!r}")
        for row in reader:
            centers.append(float(row[0]))
            probs.append(float(row[1]))
    return AngleDistribution.empirical(centers, probs)
