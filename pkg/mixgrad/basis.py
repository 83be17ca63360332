"""
GMM expansion: a fixed grid of evenly spaced Gaussian components whose
weights are the only thing learned from data.

    G(x) = sum_n pi_n * phi(x; M_n, sigma)
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from mixgrad.errors import DegenerateFitWarning, DimensionError, InvariantError
from mixgrad.settings import settings

log = logging.getLogger(__name__)

SPACING_RTOL = 1e-12
WEIGHT_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class Basis:
    means: np.ndarray
    scale: float
    support_lo: float
    support_hi: float
    quad_points: int = field(default_factory=lambda: settings.quad_points)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        if means.ndim != 1 or means.size < 2:
            raise InvariantError("basis needs at least 2 component means")
        if not np.all(np.isfinite(means)):
            raise InvariantError("basis means must be finite")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise InvariantError(f"scale must be > 0, got {self.scale}")
        steps = np.diff(means)
        if np.any(steps <= 0):
            raise InvariantError("basis means must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > SPACING_RTOL * max(abs(steps[0]), np.max(np.abs(means))):
            raise InvariantError("basis means must be evenly spaced")
        if not (self.support_lo < means[0] and self.support_hi > means[-1]):
            raise InvariantError("support must strictly contain the component means")
        if self.quad_points < 16:
            raise InvariantError("quad_points must be >= 16")

    @property
    def n_components(self) -> int:
        return int(self.means.size)

    @property
    def spacing(self) -> float:
        return float(self.means[1] - self.means[0])

    @cached_property
    def grid(self) -> np.ndarray:
        """Fixed trapezoid grid over the support, shared by every integral."""
        g = np.linspace(self.support_lo, self.support_hi, self.quad_points)
        g.setflags(write=False)
        return g

    @cached_property
    def component_cdfs(self) -> np.ndarray:
        """F_n on the grid, shape (N, quad_points)."""
        f = stats.norm.cdf(self.grid[None, :], loc=self.means[:, None], scale=self.scale)
        f.setflags(write=False)
        return f

    def __eq__(self, other):
        if not isinstance(other, Basis):
            return NotImplemented
        return (
            np.array_equal(self.means, other.means)
            and self.scale == other.scale
            and self.support_lo == other.support_lo
            and self.support_hi == other.support_hi
            and self.quad_points == other.quad_points
        )

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise InvariantError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)):
            raise InvariantError("weights must be finite")
        if np.any(w < 0):
            raise InvariantError("weights must be non-negative")
        if abs(float(w.sum()) - 1.0) > WEIGHT_ATOL:
            raise InvariantError(f"weights must sum to 1, got {float(w.sum())!r}")

    def __len__(self):
        return int(self.weights.size)

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    __hash__ = object.__hash__


def check_compatible(basis: Basis, *vectors: WeightVector) -> None:
    for v in vectors:
        if len(v) != basis.n_components:
            raise DimensionError(f"weight vector has {len(v)} entries, basis has {basis.n_components}")


# ---------- construction ----------
def build_basis(n_components: int, data_min: float, data_max: float,
                scale: float | None = None, support_pad: float | None = None,
                quad_points: int | None = None) -> Basis:
    """
    Evenly spread N means over [data_min, data_max]; support is that range
    padded by support_pad * scale on both sides. scale defaults to the
    component spacing.
    """
    if int(n_components) != n_components or n_components < 2:
        raise InvariantError(f"n_components must be an integer >= 2, got {n_components}")
    if not (math.isfinite(data_min) and math.isfinite(data_max)):
        raise InvariantError("data bounds must be finite")
    if not data_max > data_min:
        raise InvariantError(f"data_max must exceed data_min ({data_min} >= {data_max})")
    n = int(n_components)
    spacing = (data_max - data_min) / (n - 1)
    scale = spacing if scale is None else float(scale)
    if not (math.isfinite(scale) and scale > 0):
        raise InvariantError(f"scale must be > 0, got {scale}")
    pad = settings.support_pad if support_pad is None else float(support_pad)
    if not pad > 0:
        raise InvariantError(f"support_pad must be > 0, got {pad}")
    means = data_min + np.arange(n) * spacing
    means[-1] = data_max
    return Basis(
        means=means,
        scale=scale,
        support_lo=data_min - pad * scale,
        support_hi=data_max + pad * scale,
        quad_points=settings.quad_points if quad_points is None else int(quad_points),
    )


def initial_weights(basis: Basis) -> WeightVector:
    n = basis.n_components
    return WeightVector(np.full(n, 1.0 / n))


# ---------- learning ----------
def _component_likelihoods(basis: Basis, data: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # l_n = sum_d phi_n(x_d); summed per component over sorted data so that
    # permuting the sample leaves the result bit-identical
    order = np.argsort(data, kind="stable")
    x = data[order]
    c = counts[order]
    pdf = stats.norm.pdf(x[None, :], loc=basis.means[:, None], scale=basis.scale)
    return np.sum(pdf * c[None, :], axis=1)


def fit_weights(basis: Basis, data, counts=None) -> WeightVector:
    """
    One-iteration expansion learner: start from uniform weights, accumulate
    l_n over the sample, return pi_n = l_n / sum(l).
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise InvariantError("cannot fit weights to empty data")
    if not np.all(np.isfinite(x)):
        raise InvariantError("data must be finite")
    c = np.ones_like(x) if counts is None else np.asarray(counts, dtype=float).ravel()
    if c.shape != x.shape:
        raise DimensionError(f"counts has {c.size} entries, data has {x.size}")
    if np.any(c < 0):
        raise InvariantError("counts must be non-negative")

    pi = initial_weights(basis).weights
    l = _component_likelihoods(basis, x, c)
    total = float(l.sum())
    if not total > 0:
        warnings.warn(
            "all component likelihoods underflowed; returning uniform weights",
            DegenerateFitWarning,
            stacklevel=2,
        )
        log.warning("degenerate fit: %d samples, N=%d, sigma=%g", x.size, basis.n_components, basis.scale)
        return WeightVector(pi)
    return WeightVector(l / total)


# ---------- evaluation ----------
def density_at(basis: Basis, weights: WeightVector, x) -> np.ndarray | float:
    check_compatible(basis, weights)
    xs = np.asarray(x, dtype=float)
    pdf = stats.norm.pdf(xs[..., None], loc=basis.means, scale=basis.scale)
    out = pdf @ weights.weights
    return float(out) if out.ndim == 0 else out


def cdf_at(basis: Basis, weights: WeightVector, x) -> np.ndarray | float:
    check_compatible(basis, weights)
    xs = np.asarray(x, dtype=float)
    cdf = stats.norm.cdf(xs[..., None], loc=basis.means, scale=basis.scale)
    out = cdf @ weights.weights
    return float(out) if out.ndim == 0 else out


def density_grid(basis: Basis, weights: WeightVector) -> tuple[np.ndarray, np.ndarray]:
    return basis.grid, np.asarray(density_at(basis, weights, basis.grid))


def total_mass(basis: Basis, weights: WeightVector) -> float:
    grid, dens = density_grid(basis, weights)
    return float(trapezoid(dens, grid))


def sample_mixture(basis: Basis, weights: WeightVector, n: int, rng: np.random.Generator) -> np.ndarray:
    check_compatible(basis, weights)
    if n < 1:
        raise InvariantError("sample count must be >= 1")
    comp = rng.choice(basis.n_components, size=int(n), p=weights.weights)
    return basis.means[comp] + basis.scale * rng.standard_normal(int(n))
