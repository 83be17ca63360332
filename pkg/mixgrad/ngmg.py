"""
Negative Gaussian Mixture Gradient.

The deficit L keeps only the negative part of p - q. A zero-diagonal Gaussian
kernel M spreads each deficit to the other grid positions, and
NGMG(L) = -M L is non-negative: position j feels the pull of every deficit
except its own.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from mixgrad.basis import Basis, WeightVector, check_compatible
from mixgrad.errors import DimensionError, IllConditionedError, InvariantError
from mixgrad.metrics import cdf_integrals, sign_split, w1_integral

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class DeficitVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v > 0):
            raise InvariantError("deficit entries must be <= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return int(self.values.shape[-1])

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    m: np.ndarray
    kernel_scale: float
    positions: np.ndarray

    @property
    def size(self) -> int:
        return int(self.m.shape[0])

    @property
    def max_entry(self) -> float:
        return float(self.m.max())


def _as_array(v) -> np.ndarray:
    if isinstance(v, WeightVector):
        return v.weights
    if isinstance(v, DeficitVector):
        return v.values
    return np.asarray(v, dtype=float)


def deficit(p, q) -> DeficitVector:
    """L_i = min(p_i - q_i, 0); works elementwise on batches too."""
    pa, qa = _as_array(p), _as_array(q)
    if pa.shape != qa.shape:
        raise DimensionError(f"length mismatch: {pa.shape} vs {qa.shape}")
    return DeficitVector(np.minimum(pa - qa, 0.0))


def kernel(basis_or_positions, kernel_scale: float | None = None) -> KernelMatrix:
    """
    m[j][i] = phi(mu_j; mu_i, sigma) off the diagonal, 0 on it. kernel_scale
    defaults to twice the component spacing.
    """
    if isinstance(basis_or_positions, Basis):
        positions = basis_or_positions.means
    else:
        positions = np.asarray(basis_or_positions, dtype=float)
    if positions.ndim != 1 or positions.size < 2:
        raise InvariantError("kernel needs at least 2 positions")
    if kernel_scale is None:
        kernel_scale = 2.0 * float(positions[1] - positions[0])
    if not (math.isfinite(kernel_scale) and kernel_scale > 0):
        raise InvariantError(f"kernel_scale must be > 0, got {kernel_scale}")
    m = stats.norm.pdf(positions[:, None], loc=positions[None, :], scale=kernel_scale)
    np.fill_diagonal(m, 0.0)
    m.setflags(write=False)
    return KernelMatrix(m=m, kernel_scale=float(kernel_scale), positions=positions)


def ngmg_gradient(k: KernelMatrix, l) -> np.ndarray:
    """NGMG(L) = -M L. Accepts a single deficit (N,) or a batch (B, N)."""
    lv = _as_array(l)
    if lv.shape[-1] != k.size:
        raise DimensionError(f"deficit has {lv.shape[-1]} entries, kernel is {k.size}x{k.size}")
    if np.any(lv > 0):
        raise InvariantError("deficit entries must be <= 0")
    return -(lv @ k.m.T)


def ngmg_norm(k: KernelMatrix, l) -> float:
    return float(np.sum(ngmg_gradient(k, l)))


def lipschitz_constant(k: KernelMatrix) -> float:
    """Max column sum of M: bounds |‖NGMG(L(p,q))‖₁ - ‖NGMG(L(p',q))‖₁| / ‖p - p'‖₁."""
    return float(np.max(np.sum(k.m, axis=0)))


def ngmg_norm_bound(k: KernelMatrix, loss: float) -> float:
    """Upper bound on ‖NGMG(L)‖₁ given ‖L‖₁ <= loss."""
    return (k.size - 1) * k.max_entry * float(loss)


# ---------- identity checks ----------
def prop2_w1(basis: Basis, k: KernelMatrix, p: WeightVector, q: WeightVector) -> float:
    """
    W1 rebuilt from NGMG: | ||F M^-1 NGMG(L+)||_1 - ||F M^-1 NGMG(L-)||_1 |
    with L+ = -B (p - q) and L- = (I - B)(p - q). Solves against M explicitly
    instead of cancelling it, so the result checks the identity numerically.
    """
    check_compatible(basis, p, q)
    if k.size != basis.n_components:
        raise DimensionError(f"kernel is {k.size}x{k.size}, basis has {basis.n_components} components")
    cond = float(np.linalg.cond(k.m))
    if not (math.isfinite(cond) and cond <= MAX_CONDITION):
        raise IllConditionedError(f"kernel condition estimate {cond:.3g} exceeds {MAX_CONDITION:g}")

    delta = p.weights - q.weights
    split = sign_split(p, q)
    l_plus = -split.b * delta
    l_minus = split.complement * delta
    a = cdf_integrals(basis).a
    # -M L with L of either sign; ngmg_gradient insists on L <= 0
    g_plus = -(k.m @ l_plus)
    g_minus = -(k.m @ l_minus)
    w_plus = a * np.linalg.solve(k.m, g_plus)
    w_minus = a * np.linalg.solve(k.m, g_minus)
    return float(abs(np.sum(np.abs(w_plus)) - np.sum(np.abs(w_minus))))


@dataclass(frozen=True)
class ConvergenceRow:
    step: int
    w1: float
    ngmg_norm: float


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple[ConvergenceRow, ...]
    w1_tolerance: float
    ngmg_tolerance: float

    @property
    def w1_converged(self) -> bool:
        return self.rows[-1].w1 < self.w1_tolerance

    @property
    def ngmg_converged(self) -> bool:
        return self.rows[-1].ngmg_norm < self.ngmg_tolerance

    @property
    def equivalent(self) -> bool:
        return self.w1_converged == self.ngmg_converged


def prop3_convergence_check(basis: Basis, k: KernelMatrix, sequence, target: WeightVector,
                            w1_tolerance: float = 1e-6,
                            ngmg_tolerance: float | None = None,
                            strict: bool = True) -> ConvergenceReport:
    """
    Track W1(p_k, q) and ‖NGMG(deficit(p_k, q))‖₁ along a sequence. The two
    smallness tests on the final element must agree: a disagreement raises
    InvariantError, or with strict=False is logged and left to
    report.equivalent. ngmg_tolerance defaults to w1_tolerance * max kernel
    entry * N.
    """
    seq = list(sequence)
    if not seq:
        raise InvariantError("prop3_convergence_check needs a non-empty sequence")
    if ngmg_tolerance is None:
        ngmg_tolerance = w1_tolerance * k.max_entry * k.size
    rows = []
    for i, p in enumerate(seq):
        check_compatible(basis, p, target)
        rows.append(ConvergenceRow(
            step=i,
            w1=w1_integral(basis, p, target),
            ngmg_norm=ngmg_norm(k, deficit(p, target)),
        ))
    report = ConvergenceReport(tuple(rows), float(w1_tolerance), float(ngmg_tolerance))
    if not report.equivalent:
        if strict:
            raise InvariantError(f"W1 and NGMG disagree on convergence: final w1={rows[-1].w1:g} "
                                 f"ngmg={rows[-1].ngmg_norm:g}")
        log.warning("W1 and NGMG disagree on convergence: final w1=%g ngmg=%g",
                    rows[-1].w1, rows[-1].ngmg_norm)
    return report
