"""Permutation-invariant matrix observables for word-matrix ensembles."""

__version__ = "0.1.0"

from .errors import DegenerateDataError, FlagError, IngestionError, NumericalError, PimoError  # noqa: E402
from .obsgraph import TABLE, DirectedGraphObservable, ObservableSet, canonical_set, evaluate  # noqa: E402
from .ensemble import MatrixEnsemble, load_ensemble, mix  # noqa: E402
from .gaussmodel import PatternMoments, fit_pattern_moments, theoretical_moment  # noqa: E402

__all__ = [
    "__version__",
    "PimoError",
    "FlagError",
    "IngestionError",
    "NumericalError",
    "DegenerateDataError",
    "TABLE",
    "DirectedGraphObservable",
    "ObservableSet",
    "canonical_set",
    "evaluate",
    "MatrixEnsemble",
    "load_ensemble",
    "mix",
    "PatternMoments",
    "fit_pattern_moments",
    "theoretical_moment",
]
