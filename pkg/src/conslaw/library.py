"""Candidate function libraries and their evaluation.

A library is encoded by a triple ``(a, b, c)``: all monomials of total
degree 1..a, plus ``sin``/``cos`` of every state when ``b`` is set, plus
``ln`` of every state when ``c`` is set.  The constant term is never
included: its time derivative is identically zero and would show up as a
spurious null vector.

Column order is fixed (see :func:`expand`) and rendered with a small
grammar, ``x1^2*x2``, ``sin(x3)``, ``ln(x2)``, that the CLI and JSON
reports rely on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ValidationError

MONOMIAL = "monomial"
SIN = "sin"
COS = "cos"
LN = "ln"
_FUNCTION_KINDS = (SIN, COS, LN)


@dataclass(frozen=True, order=True)
class LibrarySpec:
    degree: int = 1
    trig: bool = False
    log: bool = False

    def __post_init__(self):
        if not 1 <= int(self.degree) <= 3:
            raise ValidationError(f"polynomial degree must be in [1, 3], got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "trig", bool(self.trig))
        object.__setattr__(self, "log", bool(self.log))

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.degree, int(self.trig), int(self.log))

    def size(self, n: int) -> int:
        """Number of terms for an ``n``-dimensional state."""
        return library_size(self, n)

    def __str__(self):
        a, b, c = self.triple
        return f"({a}, {b}, {c})"

    @classmethod
    def parse(cls, text: str) -> "LibrarySpec":
        nums = re.findall(r"-?\d+", text)
        if len(nums) != 3:
            raise ValidationError(f"library triple must look like (a,b,c), got {text!r}")
        a, b, c = (int(v) for v in nums)
        if b not in (0, 1) or c not in (0, 1):
            raise ValidationError(f"trig/log flags must be 0 or 1, got {text!r}")
        return cls(a, bool(b), bool(c))


def parse_candidates(text: str) -> list[LibrarySpec]:
    """Parse ``"(1,0,0),(1,0,1)"`` into specs."""
    groups = re.findall(r"\(([^)]*)\)", text)
    if not groups:
        raise ValidationError(f"no library triples found in {text!r}")
    return [LibrarySpec.parse(g) for g in groups]


#: All twelve libraries in the order they are tried.
STANDARD_MENU: tuple[LibrarySpec, ...] = tuple(
    LibrarySpec(a, bool(b), bool(c))
    for (b, c) in ((0, 0), (1, 0), (0, 1), (1, 1))
    for a in (1, 2, 3)
)


def library_size(spec: LibrarySpec, n: int) -> int:
    poly = sum(comb(n + k - 1, k) for k in range(1, spec.degree + 1))
    return poly + 2 * n * spec.trig + n * spec.log


@dataclass(frozen=True)
class Term:
    """One library column.

    For monomials ``exponents`` holds the multi-index; for ``sin``, ``cos``
    and ``ln`` it is a one-hot vector selecting the variable.
    """

    kind: str
    exponents: tuple

    def __post_init__(self):
        if self.kind == MONOMIAL:
            if any(e < 0 for e in self.exponents) or not 1 <= sum(self.exponents) <= 3:
                raise ValidationError(f"bad monomial exponents {self.exponents}")
        elif self.kind in _FUNCTION_KINDS:
            if sorted(self.exponents).count(1) != 1 or sum(self.exponents) != 1:
                raise ValidationError(f"{self.kind} term must select exactly one variable")
        else:
            raise ValidationError(f"unknown term kind {self.kind!r}")

    @property
    def variable(self) -> int:
        """0-based variable index of a sin/cos/ln term."""
        return self.exponents.index(1)

    def render(self, names: Sequence[str] | None = None) -> str:
        n = len(self.exponents)
        names = names or [f"x{i + 1}" for i in range(n)]
        if self.kind != MONOMIAL:
            return f"{self.kind}({names[self.variable]})"
        parts = []
        for name, e in zip(names, self.exponents):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "*".join(parts)

    def __str__(self):
        return self.render()


def monomial(*exponents: int) -> Term:
    return Term(MONOMIAL, tuple(int(e) for e in exponents))


def function_term(kind: str, index: int, n: int) -> Term:
    e = [0] * n
    e[index] = 1
    return Term(kind, tuple(e))


@dataclass(frozen=True)
class TermList:
    terms: tuple
    n: int

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(set(terms)) != len(terms):
            raise ValidationError("library terms must be distinct")
        for t in terms:
            if len(t.exponents) != self.n:
                raise ValidationError(f"term {t} does not match dimension {self.n}")
        object.__setattr__(self, "terms", terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, i):
        return self.terms[i]

    @property
    def has_log(self) -> bool:
        return any(t.kind == LN for t in self.terms)

    def names(self, labels: Sequence[str] | None = None) -> list[str]:
        return [t.render(labels) for t in self.terms]


def expand(spec: LibrarySpec, n: int) -> TermList:
    """Expand a library triple into its ordered term list.

    Order: degree-1 monomials, degree 2, degree 3 (graded lexicographic,
    ``x1`` varies slowest), then ``sin(x1..xn)``, ``cos(x1..xn)``,
    ``ln(x1..xn)``.
    """
    if n < 1:
        raise ValidationError(f"state dimension must be positive, got {n}")
    terms = []
    for k in range(1, spec.degree + 1):
        for combo in combinations_with_replacement(range(n), k):
            e = [0] * n
            for i in combo:
                e[i] += 1
            terms.append(Term(MONOMIAL, tuple(e)))
    kinds = ([SIN, COS] if spec.trig else []) + ([LN] if spec.log else [])
    for kind in kinds:
        terms.extend(function_term(kind, i, n) for i in range(n))
    return TermList(tuple(terms), n)


def _check_states(terms: TermList, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != terms.n:
        raise ValidationError(f"state matrix must be N x {terms.n}, got shape {X.shape}")
    return X


def _check_log_domain(terms: TermList, X: np.ndarray) -> None:
    for t in terms:
        if t.kind == LN:
            col = X[:, t.variable]
            bad = np.flatnonzero(~(col > 0))
            if bad.size:
                r = int(bad[0])
                raise DomainError(
                    f"ln({t.render()}) needs positive data; row {r + 1} has "
                    f"x{t.variable + 1} = {col[r]!r}"
                )


def _monomial_values(X: np.ndarray, exps: Iterable[int]) -> np.ndarray:
    out = np.ones(X.shape[0])
    for i, e in enumerate(exps):
        if e:
            out = out * X[:, i] ** e
    return out


def eval_theta(terms: TermList, X) -> np.ndarray:
    """Evaluate every term row-wise: an ``N x p`` matrix."""
    X = _check_states(terms, X)
    _check_log_domain(terms, X)
    cols = []
    for t in terms:
        if t.kind == MONOMIAL:
            cols.append(_monomial_values(X, t.exponents))
        elif t.kind == SIN:
            cols.append(np.sin(X[:, t.variable]))
        elif t.kind == COS:
            cols.append(np.cos(X[:, t.variable]))
        else:
            cols.append(np.log(X[:, t.variable]))
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def eval_gamma(terms: TermList, X, dX) -> np.ndarray:
    """Time derivative of every term along the data, ``grad(theta_j) . xdot``.

    Monomials use the product rule; ``sin -> xdot cos x``,
    ``cos -> -xdot sin x``, ``ln -> xdot / x``.  The result is linear in
    ``dX``.
    """
    X = _check_states(terms, X)
    dX = _check_states(terms, dX)
    if dX.shape != X.shape:
        raise ValidationError(f"derivative shape {dX.shape} does not match states {X.shape}")
    _check_log_domain(terms, X)
    cols = []
    for t in terms:
        if t.kind == MONOMIAL:
            col = np.zeros(X.shape[0])
            for i, e in enumerate(t.exponents):
                if e == 0:
                    continue
                lowered = list(t.exponents)
                lowered[i] -= 1
                col = col + e * _monomial_values(X, lowered) * dX[:, i]
            cols.append(col)
        else:
            i = t.variable
            if t.kind == SIN:
                cols.append(dX[:, i] * np.cos(X[:, i]))
            elif t.kind == COS:
                cols.append(-dX[:, i] * np.sin(X[:, i]))
            else:
                cols.append(dX[:, i] / X[:, i])
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def admissible(spec: LibrarySpec, X) -> str | None:
    """Reason the library cannot be evaluated on ``X``, or ``None`` if it can."""
    if spec.log and np.any(~(np.asarray(X) > 0)):
        return "log terms need strictly positive data"
    return None
