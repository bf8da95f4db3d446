"""SVD-based null space estimation for the derivative library matrix.

Conservation laws are right null vectors of ``Gamma``.  :func:`analyze`
computes the full SVD and summarises the singular values below a cutoff;
the remaining functions are perturbation-bound calculators used to pick
cutoffs and to judge whether recovery is trustworthy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError

#: Cutoff used when the data are noise free.
DEFAULT_CUTOFF_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class SvdAnalysis:
    """Singular spectrum of ``Gamma`` split at ``cutoff``.

    ``right_vectors`` has the right singular vectors as columns, each
    sign-normalised so that its largest-magnitude entry is positive.
    ``delta`` is the gap between the last singular value above the cutoff
    and the first one below it; it is ``None`` when nothing falls below the
    cutoff or when everything does.
    """

    singular_values: np.ndarray
    right_vectors: np.ndarray
    cutoff: float
    null_indices: tuple
    delta: Optional[float]
    residuals: np.ndarray

    @property
    def count(self) -> int:
        return len(self.null_indices)

    @property
    def null_vectors(self) -> np.ndarray:
        """``p x count`` matrix of the near-null right singular vectors."""
        return self.right_vectors[:, list(self.null_indices)]

    def to_dict(self) -> dict:
        return {
            "singular_values": [float(s) for s in self.singular_values],
            "cutoff": float(self.cutoff),
            "count": self.count,
            "null_indices": list(self.null_indices),
            "delta": None if self.delta is None else float(self.delta),
            "residuals": [float(r) for r in self.residuals],
        }


def normalize_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def analyze(gamma, cutoff: float) -> SvdAnalysis:
    """Full SVD of ``gamma`` and the statistics of its near-null part."""
    G = np.asarray(gamma, dtype=float)
    if G.ndim != 2 or G.shape[0] < 1 or G.shape[1] < 1:
        raise ValidationError(f"Gamma must be a non-empty matrix, got shape {G.shape}")
    if not cutoff >= 0:
        raise ValidationError(f"cutoff must be nonnegative, got {cutoff}")
    if not np.all(np.isfinite(G)):
        raise NumericalError("Gamma contains non-finite entries")
    try:
        _, s, vt = np.linalg.svd(G, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    V = normalize_signs(vt.T)
    null = tuple(int(j) for j in np.flatnonzero(s < cutoff))
    delta = None
    if null and null[0] > 0:
        j = null[0]
        delta = float(s[j - 1] - s[j])
    residuals = np.linalg.norm(G @ V[:, list(null)], axis=0) if null else np.zeros(0)
    return SvdAnalysis(s, V, float(cutoff), null, delta, residuals)


def cutoff_from_noise(n_samples: int, n_terms: int, eps_x_max: float,
                      floor: float = DEFAULT_CUTOFF_FLOOR) -> float:
    """Noise-scaled cutoff ``sqrt(N p) * eps^(2/3)``, never below ``floor``."""
    if eps_x_max < 0:
        raise ValidationError("noise level must be nonnegative")
    return max(math.sqrt(n_samples * n_terms) * eps_x_max ** (2.0 / 3.0), floor)


def spectral_norm(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def numerical_rank(singular_values: np.ndarray, shape, atol: float = 0.0) -> int:
    """Singular values above ``max(atol, max(shape) * eps * s[0])``."""
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(atol, max(shape) * np.finfo(float).eps * s[0])
    return int(np.sum(s > tol))


@dataclass(frozen=True)
class BoundReport:
    weyl: float
    gamma_bound: float
    tikhonov_bound: float
    sigma_r: float
    rank: int
    gap_ok: bool
    max_singular_value_shift: float

    def to_dict(self) -> dict:
        return {
            "weyl": self.weyl,
            "gamma_bound": self.gamma_bound,
            "tikhonov_bound": self.tikhonov_bound,
            "sigma_r": self.sigma_r,
            "rank": self.rank,
            "gap_ok": self.gap_ok,
            "max_singular_value_shift": self.max_singular_value_shift,
        }


def bounds(gamma_clean, gamma_noisy, eps_x_max: float, eps_dx_max: float,
           h: float, k1: float, k2: float, c_gap: float,
           rank_tol: float = DEFAULT_CUTOFF_FLOOR) -> BoundReport:
    """Evaluate the singular-value perturbation bounds for one library matrix.

    * ``weyl``: spectral norm of the perturbation, which caps every
      singular-value shift.
    * ``gamma_bound``: ``sqrt(N p) * max(eps_x, eps_dx)``.
    * ``tikhonov_bound``: ``sqrt(N p) * (k1 h^2 + 2 k2 eps_x^(2/3))``.
    * ``gap_ok``: ``sigma_r^2 >= c_gap (sqrt(N p) + N)`` where ``sigma_r``
      is the smallest singular value of the clean matrix above ``rank_tol``.
    """
    G = np.asarray(gamma_clean, dtype=float)
    Gn = np.asarray(gamma_noisy, dtype=float)
    if G.shape != Gn.shape or G.ndim != 2:
        raise ValidationError(f"shape mismatch: {G.shape} vs {Gn.shape}")
    N, p = G.shape
    root = math.sqrt(N * p)
    s = np.linalg.svd(G, compute_uv=False)
    sn = np.linalg.svd(Gn, compute_uv=False)
    r = numerical_rank(s, G.shape, rank_tol)
    sigma_r = float(s[r - 1]) if r else 0.0
    return BoundReport(
        weyl=spectral_norm(Gn - G),
        gamma_bound=root * max(eps_x_max, eps_dx_max),
        tikhonov_bound=root * (k1 * h ** 2 + 2 * k2 * eps_x_max ** (2.0 / 3.0)),
        sigma_r=sigma_r,
        rank=r,
        gap_ok=bool(r > 0 and sigma_r ** 2 >= c_gap * (root + N)),
        max_singular_value_shift=float(np.max(np.abs(sn - s))) if s.size else 0.0,
    )


def _check_orthonormal(V, name):
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    norms = np.linalg.norm(V, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValidationError(f"{name} columns are not unit length")
    gram = V.T @ V
    if np.max(np.abs(gram - np.eye(V.shape[1]))) > 1e-8:
        raise ValidationError(f"{name} columns are not orthonormal")
    return V


def subspace_distance(V1, V2) -> float:
    """``|sin Theta(V1, V2)|_2`` between two orthonormal column bases.

    Equal to ``sqrt(1 - sigma_min(V1^T V2)^2)``, but evaluated as the
    spectral norm of the part of ``V2`` outside ``span(V1)``, which stays
    accurate when the subspaces nearly coincide.
    """
    V1 = _check_orthonormal(V1, "V1")
    V2 = _check_orthonormal(V2, "V2")
    if V1.shape != V2.shape:
        raise ValidationError(f"shape mismatch: {V1.shape} vs {V2.shape}")
    return min(spectral_norm(V2 - V1 @ (V1.T @ V2)), 1.0)


def orthonormal_basis(A) -> np.ndarray:
    """Orthonormal basis for the column space of ``A`` (via SVD)."""
    A = np.asarray(A, dtype=float)
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    r = numerical_rank(s, A.shape)
    return u[:, :r]


def cai_bound(p: int, n_samples: int, sigma_r: float, c: float) -> float:
    """``min(C p (sigma_r^2 + N) / sigma_r^4, 1)``: expected squared sin-Theta bound."""
    if sigma_r <= 0:
        return 1.0
    return min(c * p * (sigma_r ** 2 + n_samples) / sigma_r ** 4, 1.0)
