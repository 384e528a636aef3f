"""Observable feature vectors and the inner products used to compare them.

Feature modes
    raw     observable values per word
    expt    values minus the ensemble mean
    theor   values minus the Gaussian-model prediction

Metric kinds
    DiagonalValue / DiagonalDeviation
        distinct observables orthogonal, each scaled by the mean of its
        squared column (the second moment for raw values, the variance for
        experimental deviations, mean w^2 for model deviations)
    Mahalanobis
        pseudo-inverse of the feature covariance
    Flat
        plain Euclidean product
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ensemble import MatrixEnsemble, observable_values
from .errors import DegenerateDataError, IngestionError
from .obsgraph import DirectedGraphObservable

__all__ = [
    "RAW",
    "DEV_EXPT",
    "DEV_THEOR",
    "MODES",
    "DIAG_VALUE",
    "DIAG_DEV",
    "MAHA",
    "FLAT",
    "METRIC_KINDS",
    "FeatureTable",
    "MetricSpec",
    "build_features",
    "build_metric",
    "cosine",
    "norm",
    "pair_cosine_array",
    "flatten_matrix_features",
    "load_word_vectors",
    "vector_invariant_features",
    "VECTOR_INVARIANTS",
    "VECTOR_SUBSETS",
]

RAW, DEV_EXPT, DEV_THEOR = "RawValue", "DeviationExpt", "DeviationTheor"
MODES = (RAW, DEV_EXPT, DEV_THEOR)
DIAG_VALUE, DIAG_DEV, MAHA, FLAT = "DiagonalValue", "DiagonalDeviation", "Mahalanobis", "Flat"
METRIC_KINDS = (DIAG_VALUE, DIAG_DEV, MAHA, FLAT)

PINV_RCOND = 1e-10
# a column whose rms is below this fraction of its magnitude counts as constant
ZERO_SCALE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureTable:
    words: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray  # (N, n)
    mode: str = RAW
    reference: np.ndarray | None = None  # per-column value subtracted in deviation modes

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.words), len(self.columns)):
            raise ValueError(f"values shape {vals.shape} does not match {len(self.words)} words x "
                             f"{len(self.columns)} columns")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "columns", tuple(self.columns))
        ref = np.zeros(vals.shape[1]) if self.reference is None else np.asarray(self.reference, float)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def row(self, word: str) -> np.ndarray:
        return self.values[self._index[word]]

    def rows(self, words: Sequence[str]) -> np.ndarray:
        return self.values[[self._index[w] for w in words]]

    def select(self, columns: Sequence[int]) -> "FeatureTable":
        cols = list(columns)
        return FeatureTable(self.words, tuple(self.columns[c] for c in cols), self.values[:, cols],
                            self.mode, self.reference[cols])

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "columns": list(self.columns),
            "rows": [{"word": w, "values": [float(x) for x in r]} for w, r in zip(self.words, self.values)],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["word", *self.columns])
        for word, r in zip(self.words, self.values):
            w.writerow([word, *(repr(float(x)) for x in r)])
        return buf.getvalue()


def build_features(ens: MatrixEnsemble, observables: Sequence[DirectedGraphObservable], mode: str = DEV_EXPT,
                   pm=None, values: np.ndarray | None = None) -> FeatureTable:
    obs = list(observables)
    if mode not in MODES:
        raise ValueError(f"unknown feature mode {mode!r}")
    if values is None:
        values = observable_values(obs, ens)
    cols = tuple(o.name for o in obs)
    if mode == RAW:
        return FeatureTable(ens.words, cols, values, RAW)
    if mode == DEV_EXPT:
        ref = values.mean(axis=0)
    else:
        if pm is None:
            raise ValueError("model deviations need fitted pattern moments")
        from .gaussmodel import theoretical_moment

        ref = np.array([theoretical_moment(o, pm) for o in obs])
    return FeatureTable(ens.words, cols, values - ref, mode, ref)


@dataclass(frozen=True, eq=False)
class MetricSpec:
    kind: str
    retained: np.ndarray  # column indices used by the metric
    scales: np.ndarray | None = None  # per retained column, diagonal kinds
    K: np.ndarray | None = None  # retained x retained, Mahalanobis
    dropped: tuple[str, ...] = ()

    def gram(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Row-wise inner products g(U[i], V[i])."""
        U = np.atleast_2d(U)[:, self.retained]
        V = np.atleast_2d(V)[:, self.retained]
        if self.kind == MAHA:
            return np.einsum("ni,ij,nj->n", U, self.K, V)
        return np.einsum("ni,ni->n", U / self.scales, V)

    def inner(self, u, v) -> float:
        return float(self.gram(np.asarray(u, float), np.asarray(v, float))[0])

    def to_json(self) -> dict:
        out = {"kind": self.kind, "retained": [int(i) for i in self.retained], "dropped": list(self.dropped)}
        if self.scales is not None:
            out["scales"] = [float(s) for s in self.scales]
        if self.K is not None:
            out["K"] = [[float(x) for x in r] for r in self.K]
        return out


def _constant_columns(ft: FeatureTable) -> np.ndarray:
    rms = np.sqrt((ft.values ** 2).mean(axis=0)) if len(ft) else np.zeros(len(ft.columns))
    spread = ft.values.std(axis=0) if len(ft) else np.zeros(len(ft.columns))
    mag = np.abs(ft.reference) + rms
    return rms <= ZERO_SCALE_RTOL * mag, spread <= ZERO_SCALE_RTOL * mag


def build_metric(ft: FeatureTable, kind: str) -> MetricSpec:
    if kind not in METRIC_KINDS:
        raise ValueError(f"unknown metric kind {kind!r}")
    n = len(ft.columns)
    if kind == FLAT:
        return MetricSpec(FLAT, np.arange(n), scales=np.ones(n))
    if len(ft) < (1 if kind == DIAG_VALUE else 2):
        raise DegenerateDataError(f"{kind} metric needs more words, got {len(ft)}")
    zero, flat = _constant_columns(ft)
    drop = flat if kind == MAHA else zero
    retained = np.flatnonzero(~drop)
    dropped = tuple(ft.columns[i] for i in np.flatnonzero(drop))
    if retained.size == 0:
        raise DegenerateDataError("every feature column is constant")
    X = ft.values[:, retained]
    if kind == MAHA:
        centred = X - X.mean(axis=0)
        sd = np.sqrt((centred ** 2).mean(axis=0))
        corr = (centred / sd).T @ (centred / sd) / X.shape[0]
        K = np.linalg.pinv(corr, rcond=PINV_RCOND, hermitian=True) / np.outer(sd, sd)
        K = 0.5 * (K + K.T)
        return MetricSpec(MAHA, retained, K=K, dropped=dropped)
    return MetricSpec(kind, retained, scales=(X ** 2).mean(axis=0), dropped=dropped)


def cosine(u, v, m: MetricSpec) -> float | None:
    """g(u, v) / sqrt(g(u, u) g(v, v)); None when either vector has zero length."""
    u = np.asarray(u, float)[None]
    v = np.asarray(v, float)[None]
    return pair_cosine_array(u, v, m)[0]


def pair_cosine_array(U: np.ndarray, V: np.ndarray, m: MetricSpec) -> list[float | None]:
    uv = m.gram(U, V)
    uu = m.gram(U, U)
    vv = m.gram(V, V)
    out = []
    for a, b, c in zip(uv, uu, vv):
        out.append(float(a / np.sqrt(b * c)) if b > 0 and c > 0 else None)
    return out


def norm(u, m: MetricSpec) -> float:
    return float(np.sqrt(max(m.inner(u, u), 0.0)))


# ---------------------------------------------------------------------------
# baseline features
# ---------------------------------------------------------------------------

def flatten_matrix_features(ens: MatrixEnsemble, deviation: bool = False) -> FeatureTable:
    """Row-major flattening of every matrix, optionally centred on the ensemble mean."""
    D = ens.dim
    cols = tuple(f"M_{i}_{j}" for i in range(D) for j in range(D))
    X = ens.matrices.reshape(len(ens), D * D)
    if not deviation:
        return FeatureTable(ens.words, cols, X, RAW)
    ref = X.mean(axis=0)
    return FeatureTable(ens.words, cols, X - ref, DEV_EXPT, ref)


def load_word_vectors(path) -> dict[str, np.ndarray]:
    """Text file, one ``word v1 v2 ... vD`` per line."""
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            word, nums = parts[0], parts[1:]
            try:
                vec = np.array([float(x) for x in nums])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric vector entry") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise IngestionError(f"{path}:{lineno}: vector length {vec.size}, expected {dim}")
            if word in out:
                raise IngestionError(f"{path}:{lineno}: duplicate word {word!r}")
            out[word] = vec
    if not out:
        raise IngestionError(f"{path}: no word vectors")
    return out


# (name, degree, power-sum exponents) with p_k = sum_i v_i^k
VECTOR_INVARIANTS = (
    ("v_i", 1, (1,)),
    ("v_i^2", 2, (2,)),
    ("v_i v_j", 2, (1, 1)),
    ("v_i^3", 3, (3,)),
    ("v_i^2 v_j", 3, (2, 1)),
    ("v_i v_j v_k", 3, (1, 1, 1)),
    ("v_i^4", 4, (4,)),
    ("v_i^3 v_j", 4, (3, 1)),
    ("v_i^2 v_j^2", 4, (2, 2)),
    ("v_i^2 v_j v_k", 4, (2, 1, 1)),
    ("v_i v_j v_k v_l", 4, (1, 1, 1, 1)),
)
VECTOR_SUBSETS = {"set1": (1, 2), "set2": (3, 4), "set3": (1, 2, 3, 4)}


def vector_invariant_features(vectors: Mapping[str, np.ndarray], subset: str = "set3",
                              words: Sequence[str] | None = None, mode: str = RAW) -> FeatureTable:
    """Permutation invariants of plain word vectors, as products of power sums."""
    if subset not in VECTOR_SUBSETS:
        raise ValueError(f"unknown invariant subset {subset!r}")
    degrees = VECTOR_SUBSETS[subset]
    chosen = [inv for inv in VECTOR_INVARIANTS if inv[1] in degrees]
    words = list(vectors) if words is None else list(words)
    missing = [w for w in words if w not in vectors]
    if missing:
        raise KeyError(f"no vector for {missing[:5]}")
    V = np.array([vectors[w] for w in words], dtype=float)
    p = {k: (V ** k).sum(axis=1) for k in range(1, 5)}
    X = np.column_stack([np.prod([p[e] for e in exps], axis=0) for _, _, exps in chosen]) if words else \
        np.empty((0, len(chosen)))
    cols = tuple(name for name, _, _ in chosen)
    if mode == RAW:
        return FeatureTable(tuple(words), cols, X, RAW)
    ref = X.mean(axis=0)
    return FeatureTable(tuple(words), cols, X - ref, DEV_EXPT, ref)
