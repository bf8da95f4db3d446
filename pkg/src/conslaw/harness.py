"""Monte Carlo experiment driver for the benchmark systems.

An :class:`ExperimentPlan` sweeps sample counts and noise levels for one
system.  Each trial perturbs the clean trajectory with seeded noise,
estimates derivatives, runs library selection and scores the outcome
against the known laws.  Trials are aggregated into one
:class:`ExperimentRow` per ``(N, variance)`` pair, and the singular values
of every candidate in the first trial are kept for plotting.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .benchmarks import BenchmarkSystem, make_system, simulate
from .differentiation import SAVITZKY_GOLAY, DiffMethod, derivative_error, differentiate
from .errors import ConfigurationError, ValidationError
from .library import STANDARD_MENU, LibrarySpec, TermList, eval_gamma, parse_candidates
from .nullspace import DEFAULT_CUTOFF_FLOOR, spectral_norm
from .selection import CutoffPolicy, DiscoveryResult, discover, rref_reduce
from .timeseries import NoiseSpec, TimeSeries, add_noise

DEFAULT_N_VALUES = (20, 100)
DEFAULT_VARIANCES = (0.0, 1e-10, 1e-5)
DEFAULT_TRIALS = 100
THREADS_ENV = "CONSLAW_THREADS"
REPORT_FORMATS = ("json", "csv", "markdown")
_EXTENSIONS = {"json": "json", "csv": "csv", "markdown": "md"}


def default_t_end(system: str) -> float:
    return 1000.0 if system == "mapk" else 1.0


def default_diff_method(system: str) -> DiffMethod:
    # The log law needs accurate slopes of S; a quintic local fit gets the
    # clean-data Gamma residual down to the noiseless cutoff floors below.
    if system == "oxidation":
        return DiffMethod(SAVITZKY_GOLAY, sg_window=11, sg_order=5)
    return DiffMethod()


def default_cutoff_floor(system: str, n_samples: int) -> float:
    """Cutoff used when the data are noise free.

    Derivative estimation error, not rounding, sets the smallest singular
    value of the log library, so the oxidation system gets a coarser floor
    that tightens with the sampling rate.
    """
    if system == "oxidation":
        return 1e-5 if n_samples < 100 else 1e-7
    return DEFAULT_CUTOFF_FLOOR


@dataclass(frozen=True)
class ExperimentPlan:
    system: str
    n_values: tuple = DEFAULT_N_VALUES
    variances: tuple = DEFAULT_VARIANCES
    trials: int = DEFAULT_TRIALS
    base_seed: int = 0
    diff_method: Optional[DiffMethod] = None
    candidates: tuple = STANDARD_MENU
    t_end: Optional[float] = None
    cutoff_floor: Optional[float] = None
    literal_variance: bool = False

    def __post_init__(self):
        make_system(self.system)  # raises ConfigurationError for unknown names
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if not self.n_values or any(n < 5 for n in self.n_values):
            raise ConfigurationError("every N must be at least 5")
        if not self.variances or any(not (v >= 0 and math.isfinite(v)) for v in self.variances):
            raise ConfigurationError("variances must be finite and nonnegative")
        if not self.candidates:
            raise ConfigurationError("no candidate libraries")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if self.cutoff_floor is not None and not self.cutoff_floor >= 0:
            raise ConfigurationError("cutoff floor must be nonnegative")

    @property
    def method(self) -> DiffMethod:
        return self.diff_method or default_diff_method(self.system)

    @property
    def horizon(self) -> float:
        return self.t_end if self.t_end is not None else default_t_end(self.system)

    def floor(self, n_samples: int) -> float:
        if self.cutoff_floor is not None:
            return self.cutoff_floor
        return default_cutoff_floor(self.system, n_samples)

    def to_dict(self) -> dict:
        m = self.method
        return {
            "system": self.system,
            "n_values": list(self.n_values),
            "variances": list(self.variances),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "diff_method": {"kind": m.kind, "tikhonov_lambda": m.tikhonov_lambda,
                            "sg_window": m.sg_window, "sg_order": m.sg_order},
            "candidates": [list(c.triple) for c in self.candidates],
            "t_end": self.horizon,
            "cutoff_floor": self.cutoff_floor,
            "literal_variance": self.literal_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown plan keys: {', '.join(sorted(unknown))}")
        if "system" not in data:
            raise ConfigurationError("plan needs a 'system'")
        kw = dict(data)
        try:
            if kw.get("diff_method") is not None:
                dm = kw["diff_method"]
                kw["diff_method"] = DiffMethod(**dm) if isinstance(dm, dict) else DiffMethod(str(dm))
            if "candidates" in kw:
                c = kw["candidates"]
                if isinstance(c, str):
                    kw["candidates"] = STANDARD_MENU if c == "all" else tuple(parse_candidates(c))
                else:
                    kw["candidates"] = tuple(LibrarySpec(a, bool(b), bool(cc)) for a, b, cc in c)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad plan: {exc}") from exc
        return cls(**kw)


@dataclass(frozen=True)
class TrialOutcome:
    eps_x_max: float
    eps_x_fro: float
    eps_dx_fro: float
    eps_dx_max: float
    e_gamma: Optional[float]
    e_gamma_spectral: Optional[float]
    residual_opt: Optional[float]
    residual_rref: Optional[float]
    xi_error: Optional[float]
    optimal: Optional[str]
    count: int
    accurate: Optional[bool]
    library_correct: Optional[bool]


@dataclass(frozen=True)
class ExperimentRow:
    """Trial means for one ``(N, variance)`` cell.

    ``accuracy`` counts a trial as correct when both the optimal library
    and the number of laws match the reference; ``library_accuracy`` only
    asks for the library.  Both are ``None`` where no reference applies
    (noisy runs of the system without laws).
    """

    system: str
    n: int
    variance: float
    trials: int
    eps_x: float
    eps_x_fro: float
    eps_dx: float
    eps_dx_max: float
    e_gamma: Optional[float]
    residual_opt: Optional[float]
    residual_rref: Optional[float]
    xi_error: Optional[float]
    accuracy: Optional[float]
    library_accuracy: Optional[float]
    optimal: str
    count: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentRow":
        return cls(**data)


@dataclass(frozen=True)
class SingularValueRecord:
    system: str
    n: int
    variance: float
    library: str
    index: int
    sigma: float
    cutoff: float


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    rows: list = field(default_factory=list)
    singular_values: list = field(default_factory=list)


def thread_count() -> int:
    """Worker threads, capped by ``CONSLAW_THREADS`` when set."""
    default = min(8, os.cpu_count() or 1)
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def embed_laws(system: BenchmarkSystem, terms: TermList) -> Optional[np.ndarray]:
    """Exact laws rewritten over ``terms``, or ``None`` if a term is missing."""
    if not system.exact_laws:
        return None
    index = {t: j for j, t in enumerate(terms)}
    out = np.zeros((len(system.exact_laws), len(terms)))
    for i, law in enumerate(system.exact_laws):
        for t, c in zip(law.terms, law.coefficients):
            if c == 0:
                continue
            if t not in index:
                return None
            out[i, index[t]] = c
    return out


def law_error(exact: np.ndarray, reduced: np.ndarray) -> float:
    """``|xi_exact - xi_rref|`` after pairing rows by largest absolute cosine."""
    if exact.shape != reduced.shape:
        raise ValidationError(f"law sets differ in shape: {exact.shape} vs {reduced.shape}")
    a = exact / np.linalg.norm(exact, axis=1, keepdims=True)
    b = reduced / np.linalg.norm(reduced, axis=1, keepdims=True)
    rows, cols = linear_sum_assignment(-np.abs(a @ b.T))
    return float(np.linalg.norm(exact[rows] - reduced[cols]))


def score(system: BenchmarkSystem, result: DiscoveryResult) -> tuple[Optional[bool], Optional[bool]]:
    """(library and count correct, library correct) for one discovery."""
    if system.reference_library is None:
        return (not result.found, not result.found)
    lib_ok = result.found and result.optimal_spec == system.reference_library
    return (lib_ok and result.count == len(system.exact_laws), lib_ok)


def run_trial(system: BenchmarkSystem, clean: TimeSeries, plan: ExperimentPlan,
              variance: float, seed: int) -> tuple[TrialOutcome, DiscoveryResult]:
    noisy, noise = add_noise(clean, NoiseSpec(variance, seed, plan.literal_variance))
    est = differentiate(noisy, plan.method)
    derr = derivative_error(est, clean)
    policy = CutoffPolicy.noise_based(noise.max_abs, plan.floor(clean.n_samples))
    result = discover(est.states, est.derivatives, plan.candidates, policy)

    e_gamma = e_gamma_spec = xi_error = None
    if result.found:
        g_clean = eval_gamma(result.terms, clean.states, clean.derivatives)
        g_noisy = eval_gamma(result.terms, est.states, est.derivatives)
        e_gamma = float(np.linalg.norm(g_noisy - g_clean))
        e_gamma_spec = spectral_norm(g_noisy - g_clean)
        exact = embed_laws(system, result.terms)
        if exact is not None and exact.shape[0] == result.count:
            xi_error = law_error(rref_reduce(exact.T), result.reduced_laws)

    accurate, lib_ok = score(system, result)
    if system.reference_library is None and variance > 0:
        accurate = lib_ok = None
    outcome = TrialOutcome(
        eps_x_max=noise.max_abs, eps_x_fro=noise.frobenius,
        eps_dx_fro=derr.frobenius, eps_dx_max=derr.max_abs,
        e_gamma=e_gamma, e_gamma_spectral=e_gamma_spec,
        residual_opt=result.residual_raw, residual_rref=result.residual_reduced,
        xi_error=xi_error,
        optimal=str(result.optimal_spec) if result.found else None,
        count=result.count, accurate=accurate, library_correct=lib_ok,
    )
    return outcome, result


def _mean(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(math.fsum(vals) / len(vals)) if vals else None


def _fraction(flags) -> Optional[float]:
    flags = [f for f in flags if f is not None]
    return sum(bool(f) for f in flags) / len(flags) if flags else None


def _mode(values):
    # most common value; ties go to the first one seen
    return Counter(values).most_common(1)[0][0]


def aggregate(system: str, n: int, variance: float, outcomes: Sequence[TrialOutcome]) -> ExperimentRow:
    return ExperimentRow(
        system=system, n=n, variance=variance, trials=len(outcomes),
        eps_x=_mean(o.eps_x_max for o in outcomes),
        eps_x_fro=_mean(o.eps_x_fro for o in outcomes),
        eps_dx=_mean(o.eps_dx_fro for o in outcomes),
        eps_dx_max=_mean(o.eps_dx_max for o in outcomes),
        e_gamma=_mean(o.e_gamma for o in outcomes),
        residual_opt=_mean(o.residual_opt for o in outcomes),
        residual_rref=_mean(o.residual_rref for o in outcomes),
        xi_error=_mean(o.xi_error for o in outcomes),
        accuracy=_fraction(o.accurate for o in outcomes),
        library_accuracy=_fraction(o.library_correct for o in outcomes),
        optimal=_mode(o.optimal or "none" for o in outcomes),
        count=_mode(o.count for o in outcomes),
    )


def _spectrum_records(system, n, variance, result: DiscoveryResult):
    out = []
    for cand in result.candidates:
        if cand.analysis is None:
            continue
        for i, s in enumerate(cand.analysis.singular_values):
            out.append(SingularValueRecord(system, n, variance, str(cand.spec), i + 1,
                                           float(s), cand.analysis.cutoff))
    return out


def run_plan(plan: ExperimentPlan, outcomes_out: Optional[dict] = None) -> ExperimentResult:
    """Run every ``(N, variance)`` cell of ``plan``.

    Trial ``k`` uses seed ``base_seed + k`` in every cell.  Trials run on a
    thread pool; results are collected in trial order so the report does
    not depend on scheduling.  Pass a dict as ``outcomes_out`` to receive
    the per-trial outcomes keyed by ``(N, variance)``.
    """
    system = make_system(plan.system)
    res = ExperimentResult(plan)
    workers = thread_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for n in plan.n_values:
            clean = simulate(system, plan.horizon, n)
            for variance in plan.variances:
                seeds = [(plan.base_seed + k) % 2**64 for k in range(plan.trials)]
                results = list(pool.map(lambda s: run_trial(system, clean, plan, variance, s), seeds))
                outcomes = [r[0] for r in results]
                res.rows.append(aggregate(plan.system, n, variance, outcomes))
                res.singular_values.extend(_spectrum_records(plan.system, n, variance, results[0][1]))
                if outcomes_out is not None:
                    outcomes_out[(n, variance)] = outcomes
    return res


# ---------------------------------------------------------------- reporting

#: Report columns in table order: (field, markdown heading).
COLUMNS = (
    ("system", "system"),
    ("n", "N"),
    ("variance", "variance"),
    ("eps_x", "‖ε_x‖"),
    ("eps_dx", "‖ε_ẋ‖"),
    ("e_gamma", "‖E_Γ‖"),
    ("residual_opt", "Σ‖Γξ_opt‖"),
    ("residual_rref", "Σ‖Γξ_rref‖"),
    ("xi_error", "‖ξ_exact − ξ_rref‖"),
    ("accuracy", "accuracy"),
    ("library_accuracy", "library accuracy"),
    ("optimal", "optimal"),
    ("count", "count"),
    ("trials", "trials"),
)
SINGVAL_COLUMNS = ("system", "n", "variance", "library", "index", "sigma", "cutoff")


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "NaN"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def _csv_cell(value):
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else value


def _fmt_accuracy(value) -> str:
    return "NaN" if value is None else f"{100 * value:.1f}%"


def render_report(rows: Sequence[ExperimentRow], fmt: str) -> str:
    if not rows:
        raise ValidationError("no rows to report")
    if fmt not in REPORT_FORMATS:
        raise ConfigurationError(f"unknown report format {fmt!r}; choose from {', '.join(REPORT_FORMATS)}")
    if fmt == "json":
        return json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        names = [f.name for f in fields(ExperimentRow)]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for r in rows:
            writer.writerow([_csv_cell(getattr(r, k)) for k in names])
        return buf.getvalue()
    lines = [
        "| " + " | ".join(h for _, h in COLUMNS) + " |",
        "|" + "|".join("---" for _ in COLUMNS) + "|",
    ]
    for r in rows:
        cells = [_fmt_accuracy(getattr(r, k)) if k.endswith("accuracy") else _fmt(getattr(r, k)) for k, _ in COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_singular_values(records: Sequence[SingularValueRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SINGVAL_COLUMNS)
    for rec in records:
        writer.writerow([rec.system, rec.n, repr(rec.variance), rec.library, rec.index,
                         repr(rec.sigma), repr(rec.cutoff)])
    return buf.getvalue()


def emit_report(rows: Sequence[ExperimentRow], fmt: str, directory,
                singular_values: Sequence[SingularValueRecord] | None = None) -> Path:
    """Write ``report.<ext>`` (and ``singvals.csv`` when given) into ``directory``."""
    text = render_report(rows, fmt)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"report.{_EXTENSIONS[fmt]}"
    path.write_text(text, encoding="utf-8")
    if singular_values is not None:
        (out / "singvals.csv").write_text(render_singular_values(singular_values), encoding="utf-8")
    return path


def load_report_json(path) -> list[ExperimentRow]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ExperimentRow.from_dict(d) for d in data]
