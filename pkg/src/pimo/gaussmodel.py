"""Permutation-invariant Gaussian model fitted by matching linear and quadratic moments.

The model is parametrised by invariant entrywise moments: the mean of a
diagonal entry, the mean of an off-diagonal entry, and the second moment
E[M_ab M_cd] for each index-coincidence pattern of (a, b, c, d).  Patterns
related by swapping the two factors carry the same moment, leaving 11
quadratic classes; with the 2 means that gives 13 numbers, fixed from the
ensemble averages of table rows 1-13.

Higher moments follow from Isserlis' theorem: the expectation of an
observable is a sum over set partitions of its summed indices (weighted by
the number of distinct-value assignments) of sums over pairings of the
matrix factors.
"""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .ensemble import MatrixEnsemble, compute_stats
from .errors import DegenerateDataError, NumericalError
from .obsgraph import DirectedGraphObservable, ObservableSet, TABLE, canonical_form, evaluate_batch
from .partitions import coarsenings, enumerate_partitions, falling_factorial, matchings, rgs_of

__all__ = [
    "PatternMoments",
    "GaussianityReport",
    "QUADRATIC_PATTERNS",
    "QUADRATIC_ORBITS",
    "ROW_FOR_ORBIT",
    "orbit_key",
    "fit_pattern_moments",
    "exact_from_unrestricted",
    "unrestricted_from_exact",
    "theoretical_moment",
    "gaussianity_report",
    "entry_covariance",
    "iter_samples",
    "sample_ensemble",
]

MAX_DEGREE = 4
PSD_TOL = 1e-8
MAX_SAMPLE_DIM = 12


def _swap(rgs):
    # pattern of (c, d, a, b) given the pattern of (a, b, c, d)
    return rgs_of((rgs[2], rgs[3], rgs[0], rgs[1]))


def orbit_key(rgs) -> str:
    """Key of the factor-swap orbit of a 4-slot pattern: its smaller RGS, e.g. ``"0001"``."""
    rgs = tuple(rgs)
    return "".join(map(str, min(rgs, _swap(rgs))))


QUADRATIC_PATTERNS = tuple(p.rgs for p in enumerate_partitions(4))
QUADRATIC_ORBITS = tuple(sorted({orbit_key(r) for r in QUADRATIC_PATTERNS}))


def _quadratic_graph_key(rgs):
    n = max(rgs) + 1
    return canonical_form(n, [(rgs[0], rgs[1]), (rgs[2], rgs[3])])


def _row_for_pattern() -> dict[str, int]:
    """Table row (3..13) whose graph is the identification ``rgs`` of M_ab M_cd."""
    by_key = {TABLE[k - 1].canonical_key(): k for k in range(3, 14)}
    return {orbit_key(r): by_key[_quadratic_graph_key(r)] for r in QUADRATIC_PATTERNS}


ROW_FOR_ORBIT = _row_for_pattern()


@dataclass(frozen=True, eq=False)
class PatternMoments:
    """Exact-pattern first and second entrywise moments at dimension ``dim``.

    ``second`` maps each orbit key to E[M_ab M_cd] over assignments realising
    exactly that pattern; patterns with more blocks than ``dim`` cannot be
    realised and are stored as 0.
    """

    dim: int
    mu_diag: float
    mu_off: float
    second: dict[str, float]
    n_words: int = 0

    def __post_init__(self):
        missing = set(QUADRATIC_ORBITS) - set(self.second)
        if missing:
            raise ValueError(f"missing quadratic patterns {sorted(missing)}")

    def mean(self, diagonal: bool) -> float:
        return self.mu_diag if diagonal else self.mu_off

    def second_moment(self, rgs) -> float:
        return self.second[orbit_key(rgs)]

    def covariance(self, rgs) -> float:
        rgs = tuple(rgs)
        return self.second_moment(rgs) - self.mean(rgs[0] == rgs[1]) * self.mean(rgs[2] == rgs[3])

    @property
    def covariances(self) -> dict[str, float]:
        return {k: self.covariance(tuple(int(c) for c in k)) for k in QUADRATIC_ORBITS}

    def populated(self, rgs) -> bool:
        return max(rgs) + 1 <= self.dim

    @classmethod
    def from_covariances(cls, dim, mu_diag, mu_off, cov: dict[str, float], n_words=0) -> "PatternMoments":
        second = {}
        for k in QUADRATIC_ORBITS:
            r = tuple(int(c) for c in k)
            m = (mu_diag if r[0] == r[1] else mu_off) * (mu_diag if r[2] == r[3] else mu_off)
            second[k] = float(cov.get(k, 0.0)) + m
        return cls(dim, float(mu_diag), float(mu_off), second, n_words)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "n_words": self.n_words,
            "mu_diag": self.mu_diag,
            "mu_off": self.mu_off,
            "second_moments": dict(self.second),
            "covariances": self.covariances,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PatternMoments":
        return cls(int(obj["dim"]), float(obj["mu_diag"]), float(obj["mu_off"]),
                   {k: float(v) for k, v in obj["second_moments"].items()}, int(obj.get("n_words", 0)))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def exact_from_unrestricted(unrestricted: dict[str, float]) -> dict[str, float]:
    """Möbius inversion: sums over all consistent assignments -> sums over exact patterns.

    Both dicts are keyed by quadratic orbit.  A sum over assignments
    consistent with pattern s (slots in one block equal, blocks free) is the
    sum of exact-pattern sums over every coarsening of s.
    """
    return {
        k: sum(mu * unrestricted[orbit_key(p)] for p, mu in coarsenings(tuple(int(c) for c in k)))
        for k in QUADRATIC_ORBITS
    }


def unrestricted_from_exact(exact: dict[str, float]) -> dict[str, float]:
    return {
        k: sum(exact[orbit_key(p)] for p, _ in coarsenings(tuple(int(c) for c in k)))
        for k in QUADRATIC_ORBITS
    }


def fit_pattern_moments(ens: MatrixEnsemble, values: np.ndarray | None = None) -> PatternMoments:
    """Match the ensemble averages of table rows 1-13.

    ``values`` may carry precomputed per-word values of rows 1..13 (shape
    (N, 13)).
    """
    if len(ens) == 0:
        raise DegenerateDataError("cannot fit an empty ensemble")
    D = ens.dim
    if values is None:
        values = evaluate_batch(TABLE[:13], ens.matrices)
    avg = np.asarray(values, dtype=float).mean(axis=0)
    trace, total = avg[0], avg[1]
    mu_diag = trace / D
    ff2 = falling_factorial(D, 2)
    mu_off = (total - trace) / ff2 if ff2 else 0.0

    unrestricted = {k: avg[ROW_FOR_ORBIT[k] - 1] for k in QUADRATIC_ORBITS}
    exact = exact_from_unrestricted(unrestricted)
    second = {}
    for k, e in exact.items():
        ff = falling_factorial(D, max(int(c) for c in k) + 1)
        second[k] = float(e / ff) if ff else 0.0
    return PatternMoments(D, float(mu_diag), float(mu_off), second, n_words=len(ens))


# ---------------------------------------------------------------------------
# Wick expansion
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _wick_expansion(node_count: int, edges: tuple) -> tuple:
    """Symbolic expectation of a graph observable.

    Returns (block_count, factors, multiplicity) terms; a factor is
    ``("m", diagonal_flag)`` for an unpaired edge mean or ``("c", orbit)``
    for a covariance between two paired edges.
    """
    terms: Counter = Counter()
    pairings = matchings(len(edges))
    for part in enumerate_partitions(node_count):
        r = part.rgs
        ends = [(r[s], r[t]) for s, t in edges]
        for pairs, single in pairings:
            factors = [("m", ends[e][0] == ends[e][1]) for e in single]
            for e, f in pairs:
                factors.append(("c", orbit_key(rgs_of(ends[e] + ends[f]))))
            terms[(part.block_count, tuple(sorted(factors)))] += 1
    return tuple((p, f, n) for (p, f), n in sorted(terms.items()))


def theoretical_moment(obs: DirectedGraphObservable, pm: PatternMoments, dim: int | None = None) -> float:
    """Gaussian-model expectation of ``obs`` at dimension ``dim`` (default ``pm.dim``)."""
    if obs.degree > MAX_DEGREE:
        raise ValueError(f"observable degree {obs.degree} exceeds {MAX_DEGREE}")
    D = pm.dim if dim is None else dim
    if D != pm.dim:
        raise ValueError(f"pattern moments fitted at D={pm.dim}, requested D={D}")
    cov = pm.covariances
    total = 0.0
    for p, factors, mult in _wick_expansion(*canonical_form(obs.node_count, obs.edges)):
        ff = falling_factorial(D, p)
        if not ff:
            continue
        term = float(mult * ff)
        for kind, arg in factors:
            term *= pm.mean(arg) if kind == "m" else cov[arg]
        total += term
    return total


# ---------------------------------------------------------------------------
# Gaussianity report
# ---------------------------------------------------------------------------

def _undefined_std(std, mean) -> bool:
    return not std > 1e-12 * abs(mean)


@dataclass(frozen=True, eq=False)
class GaussianityReport:
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    expt_mean: np.ndarray
    theor_mean: np.ndarray
    std: np.ndarray
    normalized_difference: tuple[float | None, ...]  # None where the std vanishes
    pattern_moments: PatternMoments = field(repr=False)

    def rows(self) -> list[dict]:
        return [
            {"id": i, "label": lab, "expt_mean": float(e), "theor_mean": float(t), "std": float(s),
             "normalized_difference": nd}
            for i, lab, e, t, s, nd in zip(self.ids, self.labels, self.expt_mean, self.theor_mean,
                                           self.std, self.normalized_difference)
        ]

    def to_json(self) -> dict:
        return {"observables": self.rows(), "pattern_moments": self.pattern_moments.to_json()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "label", "expt_mean", "theor_mean", "std", "normalized_difference"])
        for r in self.rows():
            nd = r["normalized_difference"]
            w.writerow([r["id"], r["label"], repr(r["expt_mean"]), repr(r["theor_mean"]), repr(r["std"]),
                        "undefined" if nd is None else repr(nd)])
        return buf.getvalue()


def gaussianity_report(obs_set: Sequence[DirectedGraphObservable], ens: MatrixEnsemble,
                       pm: PatternMoments | None = None) -> GaussianityReport:
    """Normalised difference |expt - theor| / std for each observable."""
    obs = list(obs_set)
    if pm is None:
        pm = fit_pattern_moments(ens)
    stats = compute_stats(obs, ens)
    theor = np.array([theoretical_moment(o, pm) for o in obs])
    nd = tuple(
        None if _undefined_std(s, m) else float(abs(m - t) / s)
        for m, t, s in zip(stats.mean, theor, stats.std)
    )
    return GaussianityReport(
        ids=tuple(o.name for o in obs),
        labels=tuple(o.label for o in obs),
        expt_mean=stats.mean,
        theor_mean=theor,
        std=stats.std,
        normalized_difference=nd,
        pattern_moments=pm,
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _pattern_codes(D: int) -> np.ndarray:
    """Orbit index of (a, b, c, d) for every entry pair, shape (D*D, D*D)."""
    a, b, c, d = np.meshgrid(*(np.arange(D),) * 4, indexing="ij")
    bits = ((a == b) * 1 | (a == c) * 2 | (a == d) * 4 | (b == c) * 8 | (b == d) * 16 | (c == d) * 32)
    table = np.zeros(64, dtype=int)
    for r in QUADRATIC_PATTERNS:
        x = ((r[0] == r[1]) * 1 | (r[0] == r[2]) * 2 | (r[0] == r[3]) * 4
             | (r[1] == r[2]) * 8 | (r[1] == r[3]) * 16 | (r[2] == r[3]) * 32)
        table[x] = QUADRATIC_ORBITS.index(orbit_key(r))
    return table[bits].reshape(D * D, D * D)


def entry_covariance(pm: PatternMoments, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean matrix (D, D) and covariance (D^2, D^2) of the row-major flattened entries."""
    D = pm.dim if dim is None else dim
    if D > pm.dim and pm.dim < 4:
        raise ValueError(f"patterns fitted at D={pm.dim} do not determine the model at D={D}")
    mean = np.full((D, D), pm.mu_off)
    np.fill_diagonal(mean, pm.mu_diag)
    cov = pm.covariances
    values = np.array([cov[k] for k in QUADRATIC_ORBITS])
    return mean, values[_pattern_codes(D)]


def _psd_factor(C: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(C)
    top = max(lam.max(), 0.0)
    if lam.min() < -PSD_TOL * top:
        raise NumericalError(f"covariance not positive semidefinite: min eigenvalue {lam.min():.3e}, "
                             f"max {top:.3e}")
    return V * np.sqrt(np.clip(lam, 0.0, None))


def iter_samples(pm: PatternMoments, dim: int | None, count: int, seed: int,
                 chunk: int = 100_000) -> Iterator[np.ndarray]:
    """Yield i.i.d. model matrices in chunks of shape (n, D, D); deterministic in ``seed``."""
    D = pm.dim if dim is None else dim
    if D > MAX_SAMPLE_DIM:
        raise ValueError(f"sampling needs the full covariance; D={D} > {MAX_SAMPLE_DIM}")
    mean, C = entry_covariance(pm, D)
    L = _psd_factor(C)
    rng = np.random.default_rng(seed)
    done = 0
    while done < count:
        n = min(chunk, count - done)
        z = rng.standard_normal((n, D * D))
        yield (z @ L.T).reshape(n, D, D) + mean
        done += n


def sample_ensemble(pm: PatternMoments, dim: int | None, count: int, seed: int) -> MatrixEnsemble:
    D = pm.dim if dim is None else dim
    mats = np.concatenate(list(iter_samples(pm, D, count, seed))) if count else np.empty((0, D, D))
    width = len(str(count))
    words = tuple(f"s{i:0{width}d}" for i in range(count))
    return MatrixEnsemble(D, words, mats, source=f"sample(seed={seed})")
