"""Analytic Gaussian densities and quadrature-based divergence oracles.

The divergence integrals here are the ground truth the rest of the package is
checked against.  Integrands are formed from log-densities so that tails where
one density underflows do not produce 0/0 ratios.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate import simpson
from scipy.special import logsumexp

from .fdiv import FDivergence, DomainError, fenchel_conjugate, perspective

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
DEFAULT_POINTS = 20001


class NumericalError(ArithmeticError):
    """A quadrature produced a non-finite value."""


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    stddev: float

    def __post_init__(self):
        if not (self.stddev > 0 and math.isfinite(self.stddev)):
            raise ValueError(f"stddev must be positive, got {self.stddev}")

    @property
    def components(self):
        return ((1.0, self),)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.stddev
        return -0.5 * z * z - math.log(self.stddev) - LOG_SQRT_2PI

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + self.stddev * rng.standard_normal(n)

    def envelope(self, n_sigma: float = 10.0) -> tuple[float, float]:
        return self.mean - n_sigma * self.stddev, self.mean + n_sigma * self.stddev

    def moments(self) -> tuple[float, float]:
        return self.mean, self.stddev**2


def _check_weights(weights):
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0 or np.any(w <= 0):
        raise ValueError("mixture weights must be a non-empty list of positive numbers")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
    return w


@dataclass(frozen=True)
class Mixture1D:
    weights: tuple[float, ...]
    gaussians: tuple[Gaussian1D, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.gaussians):
            raise ValueError("one weight per component required")
        _check_weights(self.weights)

    @classmethod
    def from_params(cls, weights, means, stddevs) -> "Mixture1D":
        return cls(tuple(float(w) for w in weights),
                   tuple(Gaussian1D(float(m), float(s)) for m, s in zip(means, stddevs, strict=True)))

    @property
    def components(self):
        return tuple(zip(self.weights, self.gaussians))

    @property
    def means(self) -> np.ndarray:
        return np.array([g.mean for g in self.gaussians])

    @property
    def stddevs(self) -> np.ndarray:
        return np.array([g.stddev for g in self.gaussians])

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        parts = [math.log(w) + g.logpdf(x) for w, g in self.components]
        return logsumexp(np.stack(parts), axis=0)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return self.means[idx] + self.stddevs[idx] * rng.standard_normal(n)

    def envelope(self, n_sigma: float = 10.0) -> tuple[float, float]:
        s = self.stddevs.max()
        return self.means.min() - n_sigma * s, self.means.max() + n_sigma * s

    def moments(self) -> tuple[float, float]:
        w = np.asarray(self.weights)
        mean = float(w @ self.means)
        second = float(w @ (self.stddevs**2 + self.means**2))
        return mean, second - mean**2


@dataclass(frozen=True)
class Mixture2D:
    """Mixture of isotropic 2D Gaussians."""

    weights: tuple[float, ...]
    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).reshape(-1, 2)
        stddevs = np.asarray(self.stddevs, dtype=np.float64).reshape(-1)
        if not (len(self.weights) == len(means) == len(stddevs)):
            raise ValueError("weights, means and stddevs must have one entry per component")
        if np.any(stddevs <= 0):
            raise ValueError("stddevs must be positive")
        _check_weights(self.weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", stddevs)

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d2 = ((x[:, None, :] - self.means[None, :, :]) ** 2).sum(-1)
        s2 = self.stddevs**2
        log_comp = np.log(self.weights) - 0.5 * d2 / s2 - np.log(2.0 * math.pi * s2)
        return logsumexp(log_comp, axis=1)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return self.means[idx] + self.stddevs[idx, None] * rng.standard_normal((n, 2))


Density = Union[Gaussian1D, Mixture1D, Mixture2D]


def ring8(radius: float = 2.0, stddev: float = 0.05) -> Mixture2D:
    """Eight equally weighted Gaussians evenly spaced on a circle."""
    angles = 2.0 * math.pi * np.arange(8) / 8
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return Mixture2D(tuple([0.125] * 8), means, np.full(8, stddev))


def two_gaussians(separation: float = 4.0, stddev: float = 0.5) -> Mixture1D:
    """Equal-weight pair at +-separation/2; the default is 0.5 N(-2, .5^2) + 0.5 N(2, .5^2)."""
    h = separation / 2.0
    return Mixture1D.from_params([0.5, 0.5], [-h, h], [stddev, stddev])


def pdf(density: Density, x):
    return density.pdf(x)


def sample(density: Density, rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    return density.sample(rng, n)


# -- serialization ---------------------------------------------------------

def density_to_dict(density: Density) -> dict:
    if isinstance(density, Gaussian1D):
        return {"type": "gaussian1d", "weights": [1.0], "means": [density.mean], "stddevs": [density.stddev]}
    if isinstance(density, Mixture1D):
        return {"type": "mixture1d", "weights": list(density.weights),
                "means": density.means.tolist(), "stddevs": density.stddevs.tolist()}
    if isinstance(density, Mixture2D):
        return {"type": "mixture2d", "weights": list(density.weights),
                "means": density.means.tolist(), "stddevs": density.stddevs.tolist()}
    raise TypeError(f"cannot serialize {type(density).__name__}")


def density_from_dict(d: dict) -> Density:
    kind = d.get("type")
    try:
        if kind == "gaussian1d":
            (mean,), (std,) = d["means"], d["stddevs"]
            return Gaussian1D(float(mean), float(std))
        if kind == "mixture1d":
            return Mixture1D.from_params(d["weights"], d["means"], d["stddevs"])
        if kind == "mixture2d":
            return Mixture2D(tuple(float(w) for w in d["weights"]), d["means"], d["stddevs"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid {kind} density config: {exc}") from None
    raise ValueError(f"unknown density type {kind!r}; expected gaussian1d, mixture1d or mixture2d")


def dumps_density(density: Density) -> str:
    return json.dumps(density_to_dict(density), sort_keys=True)


def loads_density(text: str) -> Density:
    return density_from_dict(json.loads(text))


# -- quadrature ------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureGrid:
    lo: float
    hi: float
    n_points: int = DEFAULT_POINTS

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("grid needs hi > lo")
        if self.n_points < 1001 or self.n_points % 2 == 0:
            raise ValueError("n_points must be odd and at least 1001")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)

    def refined(self) -> "QuadratureGrid":
        return QuadratureGrid(self.lo, self.hi, 2 * self.n_points - 1)

    def covers(self, *densities: Density, n_sigma: float = 10.0) -> bool:
        for d in densities:
            lo, hi = d.envelope(n_sigma)
            if lo < self.lo or hi > self.hi:
                return False
        return True

    @classmethod
    def covering(cls, *densities: Density, n_points: int = DEFAULT_POINTS, n_sigma: float = 10.0):
        """Smallest grid spanning every density's +-n_sigma envelope."""
        los, his = zip(*(d.envelope(n_sigma) for d in densities))
        return cls(min(los), max(his), n_points)


def integrate(values: np.ndarray, grid: QuadratureGrid) -> float:
    """Composite Simpson rule over the grid (last axis)."""
    return simpson(values, x=grid.x, axis=-1)


def _require_cover(grid: QuadratureGrid, *densities: Density):
    if not grid.covers(*densities):
        raise ValueError("quadrature grid does not span the +-10 sigma envelope of the densities")


def _finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{what} is not finite")
    return value


def exact_divergence(f: FDivergence, q: Density, p: Density, grid: QuadratureGrid | None = None) -> float:
    """D_f(q||p) = integral of p(x) f(q(x)/p(x)) by composite Simpson."""
    if grid is None:
        grid = QuadratureGrid.covering(q, p)
    else:
        _require_cover(grid, q, p)
    x = grid.x
    with np.errstate(over="ignore", invalid="ignore"):
        integrand = perspective(f, q.logpdf(x), p.logpdf(x))
    _finite(integrand, "divergence integrand")
    return float(_finite(integrate(integrand, grid), "divergence"))


def lower_bound(f: FDivergence, q: Density, p: Density, T: Callable, grid: QuadratureGrid | None = None) -> float:
    """Quadrature value of E_q[T] - E_p[f*(T)] for a variational function T."""
    if grid is None:
        grid = QuadratureGrid.covering(q, p)
    else:
        _require_cover(grid, q, p)
    x = grid.x
    t = np.asarray(T(x), dtype=np.float64)
    lo, hi = f.fprime_range
    bad = ~np.isfinite(t) | (t <= lo) | (t >= hi)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(f"T(x)={t[i]!r} at x={x[i]!r} is outside the conjugate domain ({lo}, {hi}) of {f.name}")
    integrand = q.pdf(x) * t - p.pdf(x) * fenchel_conjugate(f, t)
    return float(_finite(integrate(integrand, grid), "lower bound"))


def gan_criterion(q: Density, p: Density, grid: QuadratureGrid | None = None) -> float:
    """E_q[log d*] + E_p[log(1 - d*)] at the optimal classifier d* = q/(q+p)."""
    grid = grid or QuadratureGrid.covering(q, p)
    x = grid.x
    lq, lp = q.logpdf(x), p.logpdf(x)
    lm = np.logaddexp(lq, lp)
    return float(integrate(np.exp(lq) * (lq - lm) + np.exp(lp) * (lp - lm), grid))


def js_divergence(q: Density, p: Density, grid: QuadratureGrid | None = None) -> float:
    """Jensen-Shannon divergence from its definition through the midpoint density."""
    grid = grid or QuadratureGrid.covering(q, p)
    x = grid.x
    qx, px = q.pdf(x), p.pdf(x)
    m = 0.5 * (qx + px)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_qm = np.where(qx > 0, qx * np.log(qx / m), 0.0)
        kl_pm = np.where(px > 0, px * np.log(px / m), 0.0)
    return float(0.5 * integrate(kl_qm, grid) + 0.5 * integrate(kl_pm, grid))
