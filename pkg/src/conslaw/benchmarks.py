"""Benchmark dynamical systems with known conservation laws.

Five systems are provided: the Volpert cycle, a four-species network with
two linear laws, a chemical oxidation network with a logarithmic law, a
degrading two-species network with no law at all, and a nine-species MAPK
cascade with Michaelis-Menten kinetics and three block-sum laws.

Trajectories are produced with fixed-step classical RK4 (32 substeps per
output interval by default), which keeps integration error far below the
noise levels of interest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError, DomainError, IntegrationError, ValidationError
from .library import LibrarySpec, TermList, eval_theta, expand
from .timeseries import TimeSeries

SYSTEM_NAMES = ("volpert", "two_laws", "oxidation", "no_laws", "mapk")
DEFAULT_SUBSTEPS = 32


@dataclass(frozen=True)
class ConservationLaw:
    """``sum_j coefficients[j] * terms[j](x) = C``."""

    terms: TermList
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (len(self.terms),):
            raise ValidationError("one coefficient per term required")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def evaluate(self, X) -> np.ndarray:
        return eval_theta(self.terms, X) @ self.coefficients


@dataclass(frozen=True)
class BenchmarkSystem:
    name: str
    n: int
    parameters: Mapping[str, float]
    initial_state: np.ndarray
    rhs: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    exact_laws: tuple = ()
    reference_library: LibrarySpec | None = None
    labels: tuple = ()

    def __post_init__(self):
        x0 = np.array(self.initial_state, dtype=float)
        x0.setflags(write=False)
        object.__setattr__(self, "initial_state", x0)
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"x{i + 1}" for i in range(self.n)))

    def exact_law_matrix(self) -> np.ndarray:
        """Exact laws stacked as rows over the reference library's terms."""
        if not self.exact_laws:
            return np.zeros((0, 0))
        return np.vstack([law.coefficients for law in self.exact_laws])


def _linear_laws(n, rows):
    terms = expand(LibrarySpec(1), n)
    return tuple(ConservationLaw(terms, np.asarray(r, float)) for r in rows)


def _volpert(p):
    k1, k2, k3 = p["k1"], p["k2"], p["k3"]

    def rhs(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([
            k3 * x1 * x3 - k1 * x1 * x2,
            k1 * x1 * x2 - k2 * x2 * x3,
            k2 * x2 * x3 - k3 * x1 * x3,
        ], axis=-1)

    return rhs


def _two_laws(p):
    k1, k2, k3 = p["k1"], p["k2"], p["k3"]

    def rhs(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        r1 = k1 * x1 * x2
        return np.stack([
            -r1 + k2 * x3 + k3 * x3,
            -r1 + k2 * x3,
            r1 - k2 * x3 - k3 * x3,
            k3 * x3,
        ], axis=-1)

    return rhs


def _oxidation(p):
    k1, k2, k3 = p["k1"], p["k2"], p["k3"]

    def rhs(x):
        xx, y, s = x[..., 0], x[..., 1], x[..., 2]
        r2 = k2 * y * s
        return np.stack([
            -k1 * xx + r2,
            k1 * xx - r2 - k3 * y,
            -r2,
        ], axis=-1)

    return rhs


def _no_laws(p):
    k1, k2, k3 = p["k1"], p["k2"], p["k3"]

    def rhs(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([
            -k1 * x1 + k2 * x1 * x2 - k3 * x1 ** 2,
            -k2 * x1 * x2 + k3 * x1 ** 2,
        ], axis=-1)

    return rhs


MAPK_LABELS = ("Raf", "pRaf", "ppRaf", "MEK", "pMEK", "ppMEK", "ERK", "pERK", "ppERK")

MAPK_PARAMETERS = {
    "V3": 2.5, "V4": 3.75, "V7": 3.0, "V8": 3.75, "V11": 3.75, "V12": 5.0,
    "Km1": 100.0, "Km2": 200.0, "Km3": 50.0, "Km4": 100.0, "Km5": 250.0,
    "Km6": 250.0, "Km7": 80.0, "Km8": 250.0, "Km9": 250.0, "Km10": 120.0,
    "Km11": 20.0, "Km12": 300.0,
    # not listed with the other constants; ERK competes with pERK/ppERK for
    # the phosphatase, so it gets the same scale as the ERK kinase (Km9)
    "Km13": 250.0,
    "k1": 1.0, "k2": 0.25, "k5": 2.5, "k6": 0.5, "k9": 0.125, "k10": 0.125,
    "I": 10.0, "F": 0.17, "Kf": 15.0,
}


def _mapk(p):
    def rhs(x):
        raf, praf, ppraf = x[..., 0], x[..., 1], x[..., 2]
        mek, pmek, ppmek = x[..., 3], x[..., 4], x[..., 5]
        erk, perk, pperk = x[..., 6], x[..., 7], x[..., 8]

        feedback = (1 + p["F"] * pperk / p["Kf"]) / (1 + pperk / p["Kf"])
        d1 = 1 + raf / p["Km1"] + praf / p["Km2"]
        v1 = p["k1"] * p["I"] * raf / p["Km1"] / d1 * feedback
        v2 = p["k2"] * p["I"] * praf / p["Km2"] / d1 * feedback
        d2 = 1 + ppraf / p["Km3"] + praf / p["Km4"]
        v3 = p["V3"] * ppraf / p["Km3"] / d2
        v4 = p["V4"] * praf / p["Km4"] / d2

        d3 = 1 + mek / p["Km5"] + pmek / p["Km6"]
        v5 = p["k5"] * ppraf * mek / p["Km5"] / d3
        v6 = p["k6"] * ppraf * pmek / p["Km6"] / d3
        d4 = 1 + ppmek / p["Km7"] + pmek / p["Km8"]
        v7 = p["V7"] * ppmek / p["Km7"] / d4
        v8 = p["V8"] * pmek / p["Km8"] / d4

        d5 = 1 + erk / p["Km9"] + perk / p["Km10"]
        v9 = p["k9"] * ppmek * erk / p["Km9"] / d5
        v10 = p["k10"] * ppmek * perk / p["Km10"] / d5
        d6 = 1 + pperk / p["Km11"] + perk / p["Km12"] + erk / p["Km13"]
        v11 = p["V11"] * pperk / p["Km11"] / d6
        v12 = p["V12"] * perk / p["Km12"] / d6

        return np.stack([
            v4 - v1, v1 + v3 - v2 - v4, v2 - v3,
            v8 - v5, v5 - v6 + v7 - v8, v6 - v7,
            v12 - v9, v9 - v10 + v11 - v12, v10 - v11,
        ], axis=-1)

    return rhs


def make_system(name: str) -> BenchmarkSystem:
    """Build one of the named benchmark systems with its reference coefficients."""
    if name == "volpert":
        p = {"k1": 1.0, "k2": 1.0, "k3": 1.0}
        return BenchmarkSystem(name, 3, p, [1.0, 2.0, 0.5], _volpert(p),
                               _linear_laws(3, [[1, 1, 1]]), LibrarySpec(1))
    if name == "two_laws":
        p = {"k1": 1.0, "k2": 1.0, "k3": 1.0}
        return BenchmarkSystem(name, 4, p, [1.0, 2.0, 0.5, 0.3], _two_laws(p),
                               _linear_laws(4, [[1, 0, 1, 0], [0, 1, 1, 1]]), LibrarySpec(1))
    if name == "oxidation":
        p = {"k1": 2.0, "k2": 0.4, "k3": 1.0}
        terms = expand(LibrarySpec(1, log=True), 3)
        law = ConservationLaw(terms, [1, 1, 0, 0, 0, -p["k3"] / p["k2"]])
        return BenchmarkSystem(name, 3, p, [0.75, 0.5, 2.0], _oxidation(p), (law,),
                               LibrarySpec(1, log=True), ("x", "y", "S"))
    if name == "no_laws":
        p = {"k1": 1.0, "k2": 2.0, "k3": 2.0}
        return BenchmarkSystem(name, 2, p, [1.0, 2.0], _no_laws(p), (), None)
    if name == "mapk":
        p = dict(MAPK_PARAMETERS)
        rows = np.kron(np.eye(3), np.ones(3))
        return BenchmarkSystem(name, 9, p, [298, 1, 1, 298, 1, 1, 298, 1, 1], _mapk(p),
                               _linear_laws(9, rows), LibrarySpec(1), MAPK_LABELS)
    raise ConfigurationError(
        f"unknown system {name!r}; valid names: {', '.join(SYSTEM_NAMES)}"
    )


def rk4(rhs, x0, t0: float, t1: float, steps: int) -> np.ndarray:
    """Integrate from ``t0`` to ``t1`` with ``steps`` classical RK4 steps."""
    h = (t1 - t0) / steps
    x = np.array(x0, dtype=float)
    for _ in range(steps):
        s1 = rhs(x)
        s2 = rhs(x + 0.5 * h * s1)
        s3 = rhs(x + 0.5 * h * s2)
        s4 = rhs(x + h * s3)
        x = x + (h / 6.0) * (s1 + 2 * s2 + 2 * s3 + s4)
    return x


def simulate(system: BenchmarkSystem, t_end: float, n_points: int,
             substeps: int = DEFAULT_SUBSTEPS) -> TimeSeries:
    """Sample ``n_points`` states at ``t_j = j * t_end / n_points``.

    The derivative column is the right-hand side evaluated at each sample,
    i.e. ground truth for the simulated states.
    """
    if n_points < 2:
        raise ValidationError(f"need at least 2 points, got {n_points}")
    if not t_end > 0:
        raise ValidationError(f"t_end must be positive, got {t_end}")
    if substeps < 1:
        raise ValidationError("substeps must be >= 1")
    dt = t_end / n_points
    times = dt * np.arange(n_points)
    states = np.empty((n_points, system.n))
    x = np.array(system.initial_state, dtype=float)
    states[0] = x
    for j in range(1, n_points):
        x = rk4(system.rhs, x, times[j - 1], times[j], substeps)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(
                f"{system.name}: non-finite state reached by t = {times[j]:.6g}", time=float(times[j])
            )
        states[j] = x
    derivatives = system.rhs(states)
    return TimeSeries(times, states, derivatives, system.labels)


def law_residual(system: BenchmarkSystem, series: TimeSeries) -> np.ndarray:
    """``max_t |L(x(t)) - L(x(0))|`` for each exact law of ``system``."""
    if not system.exact_laws:
        raise ValidationError(f"{system.name} has no exact conservation laws")
    out = []
    for law in system.exact_laws:
        try:
            values = law.evaluate(series.states)
        except DomainError as exc:
            raise DomainError(f"{system.name}: {exc}") from exc
        out.append(float(np.max(np.abs(values - values[0]))))
    return np.array(out)
