"""Data-driven discovery of conservation laws.

Typical use::

    from conslaw import make_system, simulate, discover, STANDARD_MENU

    series = simulate(make_system("volpert"), t_end=1.0, n_points=20)
    result = discover(series.states, series.derivatives, STANDARD_MENU, 1e-10)
    print(result.law_strings())
"""

__version__ = "0.1.0"

from .benchmarks import (SYSTEM_NAMES, BenchmarkSystem, ConservationLaw, law_residual,
                         make_system, rk4, simulate)
from .differentiation import DerivativeError, DiffMethod, derivative_error, differentiate
from .errors import (ConfigurationError, ConslawError, DegeneracyError, DomainError,
                     FormatError, IntegrationError, NumericalError, ValidationError)
from .harness import ExperimentPlan, ExperimentRow, emit_report, render_report, run_plan
from .library import (STANDARD_MENU, LibrarySpec, Term, TermList, eval_gamma, eval_theta,
                      expand, library_size, parse_candidates)
from .nullspace import (BoundReport, SvdAnalysis, analyze, bounds, cutoff_from_noise,
                        subspace_distance)
from .selection import (CandidateReport, CutoffPolicy, DiscoveryResult, discover,
                        format_law, rref_reduce)
from .timeseries import (NoiseReport, NoiseSpec, TimeSeries, add_noise, load_csv, save_csv,
                         save_derivatives_csv, trim_interior)
