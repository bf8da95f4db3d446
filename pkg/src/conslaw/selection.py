"""Choosing the optimal library and extracting conservation laws.

Every admissible candidate library is turned into its ``Gamma`` matrix and
analysed with its own cutoff.  Candidates with between 1 and ``n`` singular
values below the cutoff are eligible; the one with the largest gap
``delta`` across the cutoff wins, ties going to the smaller library and
then to the earlier candidate.  The winning null vectors are finally
rewritten in reduced row echelon form so that each law has a unit pivot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DegeneracyError, ValidationError
from .library import LibrarySpec, TermList, admissible, eval_gamma, expand
from .nullspace import DEFAULT_CUTOFF_FLOOR, SvdAnalysis, analyze, cutoff_from_noise

SNAP_RTOL = 1e-10
PIVOT_TOL = 1e-12
#: A column becomes a pivot only if its best entry is at least this fraction
#: of the largest entry left in the unreduced rows; smaller ones are noise.
PIVOT_RTOL = 1e-3
#: Relative tolerance under which two gaps are treated as tied.
DELTA_TIE_RTOL = 8 * np.finfo(float).eps


@dataclass(frozen=True)
class CutoffPolicy:
    """Either a fixed cutoff or the noise-scaled rule, evaluated per library."""

    fixed: Optional[float] = None
    eps_x_max: Optional[float] = None
    floor: float = DEFAULT_CUTOFF_FLOOR

    def __post_init__(self):
        if (self.fixed is None) == (self.eps_x_max is None):
            raise ConfigurationError("give exactly one of a fixed cutoff or a noise level")
        if self.fixed is not None and not self.fixed >= 0:
            raise ConfigurationError("cutoff must be nonnegative")

    @classmethod
    def noise_based(cls, eps_x_max: float, floor: float = DEFAULT_CUTOFF_FLOOR) -> "CutoffPolicy":
        return cls(eps_x_max=eps_x_max, floor=floor)

    def value(self, n_samples: int, n_terms: int) -> float:
        if self.fixed is not None:
            return float(self.fixed)
        return cutoff_from_noise(n_samples, n_terms, self.eps_x_max, self.floor)

    def describe(self) -> dict:
        if self.fixed is not None:
            return {"kind": "fixed", "value": self.fixed}
        return {"kind": "noise", "eps_x_max": self.eps_x_max, "floor": self.floor}


@dataclass(frozen=True, eq=False)
class CandidateReport:
    spec: LibrarySpec
    p: int
    analysis: Optional[SvdAnalysis] = None
    skip_reason: Optional[str] = None
    eligible: bool = False

    @property
    def delta(self) -> Optional[float]:
        return None if self.analysis is None else self.analysis.delta

    @property
    def count(self) -> Optional[int]:
        return None if self.analysis is None else self.analysis.count

    def to_dict(self) -> dict:
        d = {
            "library": list(self.spec.triple),
            "p": self.p,
            "eligible": self.eligible,
            "skip_reason": self.skip_reason,
        }
        if self.analysis is not None:
            a = self.analysis
            d.update({
                "cutoff": a.cutoff,
                "delta": a.delta,
                "count": a.count,
                "residual_sum": float(np.sum(a.residuals)) if a.count else None,
                "singular_values": [float(s) for s in a.singular_values],
            })
        return d


@dataclass(frozen=True, eq=False)
class DiscoveryResult:
    optimal_spec: Optional[LibrarySpec]
    terms: Optional[TermList]
    raw_laws: np.ndarray
    reduced_laws: np.ndarray
    residual_raw: Optional[float]
    residual_reduced: Optional[float]
    candidates: tuple = field(default=())

    @property
    def found(self) -> bool:
        return self.optimal_spec is not None

    @property
    def count(self) -> int:
        return self.raw_laws.shape[1] if self.found else 0

    @property
    def optimal(self) -> Optional[CandidateReport]:
        for c in self.candidates:
            if c.eligible and c.spec == self.optimal_spec:
                return c
        return None

    def law_strings(self, labels: Sequence[str] | None = None) -> list[str]:
        if not self.found:
            return []
        m = self.reduced_laws.shape[0]
        names = ["C"] if m == 1 else [f"C{i + 1}" for i in range(m)]
        return [format_law(self.terms, row, name, labels) for row, name in zip(self.reduced_laws, names)]

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        return {
            "found": self.found,
            "optimal_library": list(self.optimal_spec.triple) if self.found else None,
            "count": self.count,
            "terms": self.terms.names() if self.found else [],
            "raw_laws": [[float(v) for v in col] for col in self.raw_laws.T] if self.found else [],
            "reduced_laws": [[float(v) for v in row] for row in self.reduced_laws] if self.found else [],
            "residual_raw": self.residual_raw,
            "residual_reduced": self.residual_reduced,
            "laws": self.law_strings(labels),
            "candidates": [c.to_dict() for c in self.candidates],
        }


def evaluate_candidate(spec: LibrarySpec, X: np.ndarray, dX: np.ndarray,
                       policy: CutoffPolicy) -> CandidateReport:
    N, n = X.shape
    p = spec.size(n)
    if p > N:
        return CandidateReport(spec, p, skip_reason=f"N={N} < p={p}")
    reason = admissible(spec, X)
    if reason:
        return CandidateReport(spec, p, skip_reason=reason)
    terms = expand(spec, n)
    gamma = eval_gamma(terms, X, dX)
    analysis = analyze(gamma, policy.value(N, p))
    eligible = 0 < analysis.count <= n
    return CandidateReport(spec, p, analysis, eligible=eligible)


def _pick(reports: Sequence[CandidateReport]) -> Optional[int]:
    eligible = [i for i, r in enumerate(reports) if r.eligible]
    if not eligible:
        return None
    deltas = {i: (reports[i].delta if reports[i].delta is not None else -math.inf) for i in eligible}
    best = max(deltas.values())
    tol = DELTA_TIE_RTOL * abs(best) if math.isfinite(best) else 0.0
    tied = [i for i in eligible if deltas[i] >= best - tol]
    return min(tied, key=lambda i: (reports[i].p, i))


def discover(X, dX, candidates: Sequence[LibrarySpec], cutoff: CutoffPolicy | float) -> DiscoveryResult:
    """Pick the optimal library among ``candidates`` and return its laws."""
    X = np.asarray(X, dtype=float)
    dX = np.asarray(dX, dtype=float)
    if X.ndim != 2 or X.shape != dX.shape:
        raise ValidationError(f"X {X.shape} and dX {dX.shape} must be matching N x n matrices")
    if not candidates:
        raise ConfigurationError("no candidate libraries given")
    policy = cutoff if isinstance(cutoff, CutoffPolicy) else CutoffPolicy(fixed=float(cutoff))
    reports = tuple(evaluate_candidate(spec, X, dX, policy) for spec in candidates)
    if all(r.analysis is None for r in reports):
        reasons = "; ".join(f"{r.spec}: {r.skip_reason}" for r in reports)
        raise ConfigurationError(f"every candidate library was skipped ({reasons})")
    best = _pick(reports)
    if best is None:
        return DiscoveryResult(None, None, np.zeros((0, 0)), np.zeros((0, 0)), None, None, reports)
    winner = reports[best]
    terms = expand(winner.spec, X.shape[1])
    xi = winner.analysis.null_vectors
    reduced = rref_reduce(xi)
    gamma = eval_gamma(terms, X, dX)
    res_raw = float(np.sum(np.linalg.norm(gamma @ xi, axis=0)))
    res_red = float(np.sum(np.linalg.norm(gamma @ reduced.T, axis=0)))
    return DiscoveryResult(winner.spec, terms, xi, reduced, res_raw, res_red, reports)


def rref_reduce(xi) -> np.ndarray:
    """Rewrite coefficient columns ``xi`` (``p x m``) as ``m`` RREF rows.

    Gauss-Jordan elimination on ``xi.T``, columns left to right, with
    partial pivoting over the laws.  A column whose best remaining entry is
    below ``PIVOT_RTOL`` times the largest remaining entry is not used as a
    pivot, so noise-level leftovers in noisy null vectors do not get blown
    up.  On exact data this is the usual canonical RREF.  Entries smaller
    than ``1e-10`` times their row maximum are snapped to zero.  The row
    space is preserved.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi.reshape(-1, 1)
    p, m = xi.shape
    if m < 1:
        raise ValidationError("need at least one coefficient vector")
    if not np.all(np.isfinite(xi)):
        raise ValidationError("coefficient vectors contain non-finite entries")
    R = xi.T.copy()
    scale = np.max(np.abs(R)) if R.size else 0.0
    if scale == 0:
        raise DegeneracyError("coefficient vectors are all zero")
    pivots = []
    row = 0
    for col in range(p):
        if row == m:
            break
        rest = np.abs(R[row:, col:])
        best = rest.max()
        if best < PIVOT_TOL * scale:
            break
        k = row + int(np.argmax(rest[:, 0]))
        if abs(R[k, col]) < PIVOT_RTOL * best:
            continue
        if k != row:
            R[[row, k]] = R[[k, row]]
        R[row] /= R[row, col]
        for other in range(m):
            if other != row:
                R[other] -= R[other, col] * R[row]
        pivots.append(col)
        row += 1
    if row < m:
        raise DegeneracyError(f"coefficient vectors have numerical rank {row} < {m}")
    for r, col in enumerate(pivots):
        big = np.max(np.abs(R[r]))
        R[r, np.abs(R[r]) < SNAP_RTOL * big] = 0.0
        R[:, col] = 0.0
        R[r, col] = 1.0
    return R


def format_law(terms: TermList, coefficients, name: str = "C",
               labels: Sequence[str] | None = None) -> str:
    """Render ``sum c_j theta_j = name`` with 5 significant digits.

    Zero coefficients are dropped and the overall sign is chosen so that
    the leading coefficient is positive.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (len(terms),):
        raise ValidationError(f"{c.size} coefficients for {len(terms)} terms")
    nz = np.flatnonzero(c)
    if nz.size == 0:
        raise ValidationError("cannot format an all-zero law")
    if c[nz[0]] < 0:
        c = -c
    parts = []
    for j in nz:
        mag = f"{abs(c[j]):.5g}"
        body = terms[j].render(labels)
        text = body if mag == "1" else f"{mag}*{body}"
        if not parts:
            parts.append(text)
        else:
            parts.append(("- " if c[j] < 0 else "+ ") + text)
    return " ".join(parts) + f" = {name}"
