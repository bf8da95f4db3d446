"""Sampled trajectories: data model, CSV round-tripping, noise and trimming."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, ValidationError

#: 17 significant digits round-trip every IEEE-754 double exactly.
CSV_FLOAT_FORMAT = "{:.17g}"


def _frozen(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """N samples of an n-dimensional state.

    Arrays are copied and marked read-only on construction, so instances can
    be shared freely.  ``derivatives`` is ``None`` until supplied by a
    simulator or estimated by :func:`conslaw.differentiation.differentiate`.
    """

    times: np.ndarray
    states: np.ndarray
    derivatives: Optional[np.ndarray] = None
    labels: tuple = field(default=())

    def __post_init__(self):
        times = _frozen(self.times, 1)
        states = np.array(self.states, dtype=float, copy=True)
        if states.ndim == 1 and times.size == 0:
            states = states.reshape(0, max(len(self.labels), 0))
        states = _frozen(states, 2)
        if states.shape[0] != times.size:
            raise ValidationError(
                f"times has {times.size} entries but states has {states.shape[0]} rows"
            )
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValidationError("times must be strictly increasing")
        derivs = self.derivatives
        if derivs is not None:
            derivs = _frozen(derivs, 2)
            if derivs.shape != states.shape:
                raise ValidationError(
                    f"derivatives shape {derivs.shape} does not match states {states.shape}"
                )
        labels = tuple(self.labels) if self.labels else tuple(
            f"x{i + 1}" for i in range(states.shape[1])
        )
        if len(labels) != states.shape[1]:
            raise ValidationError(
                f"{len(labels)} labels given for {states.shape[1]} state columns"
            )
        if len(set(labels)) != len(labels):
            raise ValidationError(f"labels must be distinct, got {labels}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "derivatives", derivs)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.times.size

    @property
    def n_states(self) -> int:
        return self.states.shape[1]

    def with_derivatives(self, derivatives) -> "TimeSeries":
        return TimeSeries(self.times, self.states, derivatives, self.labels)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        if self.labels != other.labels:
            return False
        if not (np.array_equal(self.times, other.times)
                and np.array_equal(self.states, other.states)):
            return False
        if (self.derivatives is None) != (other.derivatives is None):
            return False
        return self.derivatives is None or np.array_equal(self.derivatives, other.derivatives)

    __hash__ = None


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian measurement noise.

    ``variance`` is the nominal noise level of a benchmark run.
    By default (``literal_variance=False``) it is used as the standard
    deviation of each draw, which gives max data errors of about 5x the
    stated level.  Set ``literal_variance=True`` to
    draw from N(0, variance) in the textbook sense.
    """

    variance: float = 0.0
    seed: int = 0
    literal_variance: bool = False

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ValidationError(f"noise variance must be finite and >= 0, got {self.variance}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance) if self.literal_variance else self.variance

    def for_trial(self, trial: int) -> "NoiseSpec":
        """Spec for Monte Carlo trial ``trial`` (seed + trial index)."""
        return NoiseSpec(self.variance, (int(self.seed) + trial) % 2**64, self.literal_variance)


@dataclass(frozen=True)
class NoiseReport:
    max_abs: float
    frobenius: float


def load_csv(path) -> TimeSeries:
    """Read a ``t,<label1>,...,<labeln>`` file into a :class:`TimeSeries`."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path} is empty", row=1) from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "t":
            raise FormatError("header must be 't,<label1>,...'", row=1)
        labels = header[1:]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"expected {len(header)} fields, found {len(row)}", row=lineno
                )
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise FormatError(f"not a number: {cell!r}", row=lineno, column=col) from None
            rows.append(values)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    times = data[:, 0]
    if times.size > 1 and not np.all(np.diff(times) > 0):
        bad = int(np.argmin(np.diff(times) > 0)) + 3
        raise ValidationError(f"{path}: times not strictly increasing at row {bad}")
    return TimeSeries(times, data[:, 1:], labels=tuple(labels))


def _write_matrix(path, header, times, matrix):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, row in zip(times, matrix):
            writer.writerow([CSV_FLOAT_FORMAT.format(t)] + [CSV_FLOAT_FORMAT.format(v) for v in row])


def save_csv(series: TimeSeries, path) -> None:
    """Write states as CSV with 17 significant digits per value."""
    _write_matrix(path, ["t", *series.labels], series.times, series.states)


def save_derivatives_csv(series: TimeSeries, path) -> None:
    """Write the derivative columns in the same layout as :func:`save_csv`."""
    if series.derivatives is None:
        raise ValidationError("series carries no derivatives")
    _write_matrix(path, ["t", *series.labels], series.times, series.derivatives)


def add_noise(series: TimeSeries, spec: NoiseSpec) -> tuple[TimeSeries, NoiseReport]:
    """Perturb every state entry with i.i.d. Gaussian noise.

    Times are left alone and derivatives are dropped, since they no longer
    describe the noisy states.  The generator is numpy's PCG64 seeded with
    ``spec.seed``.
    """
    rng = np.random.default_rng(int(spec.seed))
    if spec.std == 0.0:
        noise = np.zeros_like(series.states)
    else:
        noise = rng.normal(0.0, spec.std, size=series.states.shape)
    noisy = series.states + noise
    diff = noisy - series.states
    report = NoiseReport(
        max_abs=float(np.max(np.abs(diff))) if diff.size else 0.0,
        frobenius=float(np.linalg.norm(diff)),
    )
    return TimeSeries(series.times, noisy, None, series.labels), report


def trim_interior(series: TimeSeries, keep: int) -> TimeSeries:
    """Keep the centred ``keep`` consecutive samples."""
    n = series.n_samples
    if keep < 1:
        raise ValidationError(f"keep must be positive, got {keep}")
    if keep > n:
        raise ValidationError(f"cannot keep {keep} of {n} samples")
    start = (n - keep) // 2
    sl = slice(start, start + keep)
    derivs = None if series.derivatives is None else series.derivatives[sl]
    return TimeSeries(series.times[sl], series.states[sl], derivs, series.labels)


def from_arrays(times: Sequence[float], states, derivatives=None, labels=()) -> TimeSeries:
    return TimeSeries(np.asarray(times, float), np.asarray(states, float), derivatives, tuple(labels))
