"""
Cross-entropy style losses with analytic gradients w.r.t. the prediction.

Predictions may be a single vector (K,) or a batch (B, K). Values are averaged
over the batch and gradients keep the prediction's shape.
"""
from dataclasses import dataclass
from functools import partial
from typing import Callable, Literal

import numpy as np

from mixgrad.errors import DimensionError, InvariantError
from mixgrad.ngmg import KernelMatrix, deficit, kernel, ngmg_gradient

DELTA = 1e-7
DEFAULT_FLOOR = 1.0

NgmgMode = Literal["literal", "two_sided"]


@dataclass(frozen=True, eq=False)
class LossValue:
    value: float
    gradient: np.ndarray

    def __post_init__(self):
        if self.gradient.ndim == 0:
            raise DimensionError("loss gradient must have the prediction's shape")


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, DELTA, 1.0 - DELTA)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] == 0:
        raise DimensionError(f"expected (K,) or (B, K), got {x.shape}")
    return x, y


def _reduce(per_row: np.ndarray, grad: np.ndarray) -> LossValue:
    if grad.ndim == 1:
        return LossValue(float(per_row), grad)
    b = grad.shape[0]
    return LossValue(float(np.mean(per_row)), grad / b)


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    # an all-zero row stays zero
    s = np.sum(v, axis=-1, keepdims=True)
    return np.divide(v, s, out=np.zeros_like(v), where=s > 0)


# ---------- losses ----------
def shannon(p, p_hat) -> LossValue:
    p, q = _pair(p, p_hat)
    q = _clamp(q)
    per_row = -np.sum(p * np.log(q), axis=-1)
    return _reduce(per_row, -p / q)


def bce(targets, p_hat) -> LossValue:
    t, q = _pair(targets, p_hat)
    q = _clamp(q)
    k = t.shape[-1]
    per_row = -np.mean(t * np.log(q) + (1.0 - t) * np.log(1.0 - q), axis=-1)
    grad = (-t / q + (1.0 - t) / (1.0 - q)) / k
    return _reduce(per_row, grad)


def ngmg_weights(targets, p_hat, k: KernelMatrix) -> tuple[np.ndarray, np.ndarray]:
    """
    (w_up, w_down): NGMG of the normalized prediction's undershoot and of its
    overshoot. Treated as constants by the gradients below.
    """
    t, q = _pair(targets, p_hat)
    if t.shape[-1] != k.size:
        raise DimensionError(f"{t.shape[-1]} outputs but kernel is {k.size}x{k.size}")
    t_norm = _normalize_rows(t)
    q_norm = _normalize_rows(_clamp(q))
    w_up = ngmg_gradient(k, deficit(q_norm, t_norm))
    w_down = ngmg_gradient(k, deficit(t_norm, q_norm))
    return w_up, w_down


def well_weights(targets, p_hat, k: KernelMatrix) -> tuple[np.ndarray, np.ndarray]:
    """
    (w_up, w_down) placed on the deficit positions themselves: |L_i| times the
    kernel mass sum_j M[j][i] that position i sends out as NGMG. Deficits are
    taken on the raw outputs, so w_up is non-zero only where p_hat < t and
    w_down only where p_hat > t. Each row of w_up sums to ‖NGMG(L_up)‖₁.
    """
    t, q = _pair(targets, p_hat)
    if t.shape[-1] != k.size:
        raise DimensionError(f"{t.shape[-1]} outputs but kernel is {k.size}x{k.size}")
    q = _clamp(q)
    outflow = np.sum(k.m, axis=0)
    w_up = -deficit(q, t).values * outflow
    w_down = -deficit(t, q).values * outflow
    return w_up, w_down


def weighted_entropy(targets, p_hat, w_up, w_down, mode: NgmgMode = "two_sided",
                     floor: float = DEFAULT_FLOOR) -> LossValue:
    """
    Entropy terms weighted by fixed weights: -log p_hat where the prediction
    should rise, -log(1 - p_hat) where it should fall (two_sided), plus
    floor * BCE.
    """
    t, q = _pair(targets, p_hat)
    q = _clamp(q)
    if mode == "literal":
        per_row = np.sum(w_up * -np.log(q), axis=-1)
        return _reduce(per_row, -w_up / q)
    if mode != "two_sided":
        raise InvariantError(f"unknown ngmg_entropy mode {mode!r}")

    per_row = np.sum(w_up * -np.log(q) + w_down * -np.log(1.0 - q), axis=-1)
    grad = -w_up / q + w_down / (1.0 - q)
    if floor:
        k = t.shape[-1]
        per_row = per_row + floor * -np.mean(t * np.log(q) + (1.0 - t) * np.log(1.0 - q), axis=-1)
        grad = grad + floor * (-t / q + (1.0 - t) / (1.0 - q)) / k
    return _reduce(per_row, grad)


def ngmg_entropy(targets, p_hat, k: KernelMatrix, mode: NgmgMode = "two_sided",
                 floor: float = DEFAULT_FLOOR) -> LossValue:
    """
    literal: sum_j NGMG_j * -log p_hat_j on normalized rows, no BCE term.
    two_sided: well weights on both sides plus floor * BCE. Every weighted
    term pushes an output towards its own target, so the gradient never
    points against the BCE gradient.
    """
    if mode == "literal":
        w_up, w_down = ngmg_weights(targets, p_hat, k)
    elif mode == "two_sided":
        w_up, w_down = well_weights(targets, p_hat, k)
    else:
        raise InvariantError(f"unknown ngmg_entropy mode {mode!r}")
    return weighted_entropy(targets, p_hat, w_up, w_down, mode, floor)


def mse(targets, prediction) -> LossValue:
    """Squared error norm per row, averaged over the batch."""
    t, y = _pair(targets, prediction)
    diff = y - t
    return _reduce(np.sum(diff * diff, axis=-1), 2.0 * diff)


# ---------- registry ----------
LossFn = Callable[[np.ndarray, np.ndarray], LossValue]


def attribute_kernel(n_outputs: int, kernel_scale: float = 1.0) -> KernelMatrix:
    """Kernel over K outputs placed on a unit-spaced grid 0..K-1."""
    if n_outputs < 2:
        raise InvariantError("NGMG losses need at least 2 outputs")
    return kernel(np.arange(n_outputs, dtype=float), kernel_scale)


def _ngmg_factory(mode: NgmgMode) -> Callable[..., LossFn]:
    def build(n_outputs: int, kernel_scale: float, floor: float) -> LossFn:
        k = attribute_kernel(n_outputs, kernel_scale)
        if mode == "literal":
            return partial(ngmg_entropy, k=k, mode="literal")
        return partial(ngmg_entropy, k=k, mode="two_sided", floor=floor)
    return build


# name -> factory(n_outputs, kernel_scale, floor) -> loss callable
LOSSES: dict[str, Callable[..., LossFn]] = {
    "bce": lambda n_outputs, kernel_scale, floor: bce,
    "ngmg_literal": _ngmg_factory("literal"),
    "ngmg_two_sided": _ngmg_factory("two_sided"),
    "mse": lambda n_outputs, kernel_scale, floor: mse,
}
LOSS_NAMES = tuple(LOSSES)


def make_loss(name: str, n_outputs: int, kernel_scale: float = 1.0,
              floor: float = DEFAULT_FLOOR) -> LossFn:
    if name not in LOSSES:
        raise InvariantError(f"unknown loss {name!r}; choose one of {', '.join(LOSS_NAMES)}")
    return LOSSES[name](n_outputs, kernel_scale, floor)
