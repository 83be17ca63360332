"""
1-Wasserstein distance between two expansion weight vectors.

w1_integral is the reference: trapezoid quadrature of |sum_n (p_n - q_n) F_n(x)|
over the basis support. w1_vectorized is the closed form built from the CDF
integrals a_n and the sign split b; it moves the absolute value outside the
integral and therefore never exceeds w1_integral.
"""
import weakref
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from mixgrad.basis import Basis, WeightVector, check_compatible
from mixgrad.errors import DimensionError, InvariantError


@dataclass(frozen=True, eq=False)
class SignSplit:
    b: np.ndarray

    @property
    def complement(self) -> np.ndarray:
        return 1.0 - self.b


@dataclass(frozen=True, eq=False)
class CdfIntegrals:
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if np.any(a <= 0) or np.any(np.diff(a) >= 0):
            raise InvariantError("CDF integrals must be positive and strictly decreasing")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)


def _diff(p, q) -> np.ndarray:
    pw = p.weights if isinstance(p, WeightVector) else np.asarray(p, dtype=float)
    qw = q.weights if isinstance(q, WeightVector) else np.asarray(q, dtype=float)
    if pw.shape != qw.shape:
        raise DimensionError(f"length mismatch: {pw.shape} vs {qw.shape}")
    return pw - qw


def sign_split(p, q) -> SignSplit:
    # ties (delta == 0) land in the non-negative branch
    return SignSplit(b=(_diff(p, q) >= 0).astype(float))


_cdf_cache: "weakref.WeakKeyDictionary[Basis, CdfIntegrals]" = weakref.WeakKeyDictionary()


def cdf_integrals(basis: Basis) -> CdfIntegrals:
    """a_n = integral of F_n over the support, cached per basis (read-only)."""
    ci = _cdf_cache.get(basis)
    if ci is None:
        ci = CdfIntegrals(trapezoid(basis.component_cdfs, basis.grid, axis=1))
        _cdf_cache[basis] = ci
    return ci


def w1_integral(basis: Basis, p: WeightVector, q: WeightVector) -> float:
    check_compatible(basis, p, q)
    delta = _diff(p, q)
    return float(trapezoid(np.abs(delta @ basis.component_cdfs), basis.grid))


def w1_vectorized(basis: Basis, p: WeightVector, q: WeightVector) -> float:
    """| ||F B delta||_1 - ||F (I - B) delta||_1 |"""
    check_compatible(basis, p, q)
    delta = _diff(p, q)
    a = cdf_integrals(basis).a
    split = sign_split(p, q)
    positive = np.sum(np.abs(a * split.b * delta))
    negative = np.sum(np.abs(a * split.complement * delta))
    return float(abs(positive - negative))


def w1_empirical(samples_p, samples_q) -> float:
    """
    Quantile coupling of two samples. Equal sizes pair sorted order
    statistics directly; unequal sizes use the exact CDF-difference form.
    """
    x = np.sort(np.asarray(samples_p, dtype=float).ravel())
    y = np.sort(np.asarray(samples_q, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise InvariantError("w1_empirical needs non-empty samples")
    if x.size == y.size:
        return float(np.mean(np.abs(x - y)))
    return float(stats.wasserstein_distance(x, y))


def w1_empirical_stderr(samples_p, samples_q, n_batches: int = 20) -> float:
    """
    Batch-means standard error of w1_empirical on i.i.d. samples: both samples
    are cut in draw order into n_batches slices, W1 is estimated per slice
    pair, and std(slice estimates) / sqrt(n_batches) is returned.
    """
    x = np.asarray(samples_p, dtype=float).ravel()
    y = np.asarray(samples_q, dtype=float).ravel()
    if n_batches < 2:
        raise InvariantError(f"n_batches must be >= 2, got {n_batches}")
    if min(x.size, y.size) < 2 * n_batches:
        raise DimensionError(f"stderr needs at least {2 * n_batches} samples per side")
    estimates = [w1_empirical(a, b) for a, b in zip(np.array_split(x, n_batches), np.array_split(y, n_batches))]
    return float(np.std(estimates, ddof=1) / np.sqrt(n_batches))
