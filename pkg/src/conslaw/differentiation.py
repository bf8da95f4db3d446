"""Derivative estimation for sampled (possibly noisy) trajectories.

Three estimators are available:

* ``central_fd``: second-order central differences, second-order one-sided
  stencils at the ends.
* ``tikhonov``: per column, ``u = argmin |A u - (x - x[0])|^2 + lam |D u|^2``
  where ``A`` is cumulative trapezoid integration and ``D`` the first
  difference operator.  ``u`` is the derivative estimate.
* ``savitzky_golay``: local least-squares polynomial fits; the window is
  truncated on the boundary side near the ends of the record.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .timeseries import TimeSeries

CENTRAL_FD = "central_fd"
TIKHONOV = "tikhonov"
SAVITZKY_GOLAY = "savitzky_golay"
METHODS = (CENTRAL_FD, TIKHONOV, SAVITZKY_GOLAY)

#: Default regularisation weight per sample; ``lam = TIKHONOV_LAMBDA_PER_POINT * N``.
TIKHONOV_LAMBDA_PER_POINT = 1e-6
SG_WINDOW = 11
SG_ORDER = 3
_UNIFORM_RTOL = 1e-12


@dataclass(frozen=True)
class DiffMethod:
    kind: str = TIKHONOV
    tikhonov_lambda: Optional[float] = None
    sg_window: int = SG_WINDOW
    sg_order: int = SG_ORDER

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ValidationError(f"unknown method {self.kind!r}; choose from {', '.join(METHODS)}")
        if self.kind == TIKHONOV and self.tikhonov_lambda is not None and not self.tikhonov_lambda > 0:
            raise ValidationError("tikhonov lambda must be positive")
        if self.kind == SAVITZKY_GOLAY:
            if self.sg_window < 5 or self.sg_window % 2 == 0:
                raise ValidationError("Savitzky-Golay window must be odd and >= 5")
            if not 2 <= self.sg_order <= self.sg_window - 1:
                raise ValidationError("Savitzky-Golay order must be in [2, window - 1]")

    def lam(self, n_samples: int) -> float:
        if self.tikhonov_lambda is not None:
            return float(self.tikhonov_lambda)
        return TIKHONOV_LAMBDA_PER_POINT * n_samples

    def describe(self) -> str:
        if self.kind == TIKHONOV:
            return f"tikhonov(lambda={self.tikhonov_lambda if self.tikhonov_lambda else 'default'})"
        if self.kind == SAVITZKY_GOLAY:
            return f"savitzky_golay(window={self.sg_window}, order={self.sg_order})"
        return CENTRAL_FD


@dataclass(frozen=True)
class DerivativeError:
    frobenius: float
    max_abs: float


def _uniform_step(times: np.ndarray) -> float:
    steps = np.diff(times)
    h = float(np.mean(steps))
    if np.max(np.abs(steps - h)) > _UNIFORM_RTOL * max(abs(h), np.max(np.abs(times))):
        raise ValidationError("differentiation requires a uniform time grid")
    return h


def central_fd(x: np.ndarray, h: float) -> np.ndarray:
    return np.gradient(x, h, axis=0, edge_order=2)


def trapezoid_operator(n: int, h: float) -> np.ndarray:
    """``(A u)_i = integral of u from t_0 to t_i`` by the trapezoid rule."""
    A = np.zeros((n, n))
    for i in range(1, n):
        A[i, :i + 1] = h
        A[i, 0] = A[i, i] = h / 2
    return A


def difference_operator(n: int) -> np.ndarray:
    return np.diff(np.eye(n), axis=0)


@lru_cache(maxsize=64)
def _tikhonov_operator(n: int, h: float, lam: float) -> np.ndarray:
    """Matrix ``K`` with ``u = K (x - x[0])``.

    Built once from the stacked least-squares system ``[A; sqrt(lam) D]``
    rather than the normal equations, whose condition number is the square.
    Applying one explicit matrix to every column also keeps exact linear
    relations between columns intact up to rounding.
    """
    A = trapezoid_operator(n, h)
    D = difference_operator(n)
    B = np.vstack([A, np.sqrt(lam) * D])
    rhs = np.vstack([np.eye(n), np.zeros((n - 1, n))])
    K, *_ = scipy.linalg.lstsq(B, rhs)
    K.setflags(write=False)
    return K


def tikhonov(x: np.ndarray, h: float, lam: float) -> np.ndarray:
    return _tikhonov_operator(x.shape[0], float(h), float(lam)) @ (x - x[0])


@lru_cache(maxsize=64)
def _sg_weights(n: int, window: int, order: int) -> np.ndarray:
    """Row i holds the weights giving the fitted slope (per unit step) at sample i."""
    half = window // 2
    W = np.zeros((n, n))
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        offsets = np.arange(lo, hi) - i
        deg = min(order, offsets.size - 1)
        V = np.vander(offsets.astype(float), deg + 1, increasing=True)
        # slope at offset 0 is the linear coefficient of the fit
        W[i, lo:hi] = np.linalg.pinv(V)[1]
    return W


def savitzky_golay(x: np.ndarray, h: float, window: int, order: int) -> np.ndarray:
    return _sg_weights(x.shape[0], window, order) @ x / h


def differentiate(series: TimeSeries, method: DiffMethod) -> TimeSeries:
    """Return ``series`` with its derivative column estimated from the states."""
    n = series.n_samples
    if n < 5:
        raise ValidationError(f"need at least 5 samples to differentiate, got {n}")
    h = _uniform_step(series.times)
    x = series.states
    if method.kind == CENTRAL_FD:
        dx = central_fd(x, h)
    elif method.kind == TIKHONOV:
        dx = tikhonov(x, h, method.lam(n))
    else:
        if n < method.sg_window:
            raise ValidationError(f"{n} samples is fewer than the window of {method.sg_window}")
        dx = savitzky_golay(x, h, method.sg_window, method.sg_order)
    return series.with_derivatives(dx)


def derivative_error(estimated: TimeSeries, truth: TimeSeries) -> DerivativeError:
    """Frobenius and max-abs norms of the derivative difference."""
    if estimated.derivatives is None or truth.derivatives is None:
        raise ValidationError("both series need derivatives")
    if estimated.derivatives.shape != truth.derivatives.shape:
        raise ValidationError(
            f"shape mismatch: {estimated.derivatives.shape} vs {truth.derivatives.shape}"
        )
    d = estimated.derivatives - truth.derivatives
    return DerivativeError(float(np.linalg.norm(d)), float(np.max(np.abs(d))) if d.size else 0.0)
