"""Word-matrix ensembles: loading, a/(1-a) mixing and ensemble statistics."""
from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError, IngestionError
from .obsgraph import DirectedGraphObservable, evaluate_batch

log = logging.getLogger(__name__)

__all__ = [
    "MatrixEnsemble",
    "EnsembleStats",
    "load_ensemble",
    "save_ensemble",
    "read_matrix",
    "mix",
    "compute_stats",
    "observable_values",
]

MANIFEST = "manifest.json"
_SPLIT = re.compile(r"[,\s]+")


@dataclass(frozen=True)
class MatrixEnsemble:
    dim: int
    words: tuple[str, ...]
    matrices: np.ndarray  # (N, D, D), read-only
    source: str = ""
    dropped: int = 0  # words lost when this ensemble was built by mixing

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1:] != (self.dim, self.dim):
            raise ValueError(f"matrices must have shape (N, {self.dim}, {self.dim}), got {mats.shape}")
        words = tuple(self.words)
        if len(words) != mats.shape[0]:
            raise ValueError("one matrix per word required")
        if len(set(words)) != len(words):
            raise ValueError("duplicate word names")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "words", words)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    @property
    def index(self) -> dict[str, int]:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {w: i for i, w in enumerate(self.words)}
            object.__setattr__(self, "_index", idx)
        return idx

    def __getitem__(self, word: str) -> np.ndarray:
        return self.matrices[self.index[word]]

    def subset(self, words: Sequence[str]) -> "MatrixEnsemble":
        return MatrixEnsemble(self.dim, tuple(words), self.matrices[[self.index[w] for w in words]], self.source)


def read_matrix(path, dim: int | None = None) -> np.ndarray:
    """Parse a text matrix: one row per line, comma or whitespace separated."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(x) for x in _SPLIT.split(line) if x])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise IngestionError(f"{path}: empty matrix file")
    D = dim if dim is not None else len(rows)
    if len(rows) != D or any(len(r) != D for r in rows):
        shape = f"{len(rows)}x{max(len(r) for r in rows)}"
        raise IngestionError(f"{path}: dimension mismatch, expected {D}x{D}, got {shape}")
    return np.array(rows)


def load_ensemble(path) -> MatrixEnsemble:
    path = os.fspath(path)
    if not os.path.isdir(path):
        raise IngestionError(f"{path}: not a directory")
    manifest = os.path.join(path, MANIFEST)
    if not os.path.exists(manifest):
        if not os.listdir(path):
            raise IngestionError(f"{path}: empty ensemble directory")
        raise IngestionError(f"{path}: missing {MANIFEST}")
    try:
        with open(manifest) as fh:
            meta = json.load(fh)
        dim = int(meta["dim"])
    except (ValueError, KeyError, TypeError) as exc:
        raise IngestionError(f"{manifest}: malformed manifest ({exc})") from None
    fmt = meta.get("format", "csv")
    words = meta.get("words")
    if words is None:
        suffix = "." + fmt
        words = sorted(f[: -len(suffix)] for f in os.listdir(path) if f.endswith(suffix))
    if not words:
        raise IngestionError(f"{path}: empty ensemble")
    if len(set(words)) != len(words):
        dup = sorted({w for w in words if words.count(w) > 1})
        raise IngestionError(f"{manifest}: duplicate words {dup}")
    mats = np.empty((len(words), dim, dim))
    for i, w in enumerate(words):
        f = os.path.join(path, f"{w}.{fmt}")
        if not os.path.exists(f):
            raise IngestionError(f"{f}: matrix file missing")
        mats[i] = read_matrix(f, dim)
    return MatrixEnsemble(dim, tuple(words), mats, source=path)


def save_ensemble(ens: MatrixEnsemble, path, precision: int = 17) -> None:
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, MANIFEST), "w") as fh:
        json.dump({"dim": ens.dim, "format": "csv", "words": list(ens.words)}, fh, indent=2)
        fh.write("\n")
    for w, m in zip(ens.words, ens.matrices):
        with open(os.path.join(path, f"{w}.csv"), "w") as fh:
            for row in m:
                fh.write(",".join(f"{x:.{precision}g}" for x in row) + "\n")


def mix(mo: MatrixEnsemble, ms: MatrixEnsemble, a: float) -> MatrixEnsemble:
    """Per shared word, ``a * M_O + (1 - a) * M_S``.

    Words present on only one side are dropped; the count is logged and kept
    on the result as ``dropped``.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"mixing parameter a={a} outside [0, 1]")
    if mo.dim != ms.dim:
        raise IngestionError(f"dimension mismatch between ensembles: {mo.dim} vs {ms.dim}")
    words = [w for w in mo.words if w in ms]
    if not words:
        raise DegenerateDataError("ensembles share no words")
    dropped = len(mo) + len(ms) - 2 * len(words)
    if dropped:
        log.warning("mix: %d words present in only one ensemble were dropped", dropped)
    io = [mo.index[w] for w in words]
    iS = [ms.index[w] for w in words]
    mats = a * mo.matrices[io] + (1.0 - a) * ms.matrices[iS]
    return MatrixEnsemble(mo.dim, tuple(words), mats, source=f"mix(a={a:g})", dropped=dropped)


@dataclass(frozen=True)
class EnsembleStats:
    observables: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    second_moment: np.ndarray
    stderr: np.ndarray
    n_words: int
    values: np.ndarray = field(repr=False)  # (N, n_obs) per-word observable values

    def to_json(self) -> dict:
        return {
            "n_words": self.n_words,
            "observables": [
                {"id": o, "mean": float(m), "std": float(s), "second_moment": float(q), "stderr": float(e)}
                for o, m, s, q, e in zip(self.observables, self.mean, self.std, self.second_moment, self.stderr)
            ],
        }


def observable_values(observables: Sequence[DirectedGraphObservable], ens: MatrixEnsemble) -> np.ndarray:
    return evaluate_batch(list(observables), ens.matrices)


def compute_stats(observables: Sequence[DirectedGraphObservable], ens: MatrixEnsemble,
                  values: np.ndarray | None = None) -> EnsembleStats:
    """Ensemble mean, population standard deviation and second moment per observable."""
    if len(ens) == 0:
        raise DegenerateDataError("empty ensemble")
    observables = list(observables)
    if values is None:
        values = observable_values(observables, ens)
    n = values.shape[0]
    mean = values.mean(axis=0)
    std = np.sqrt(((values - mean) ** 2).mean(axis=0))
    second = (values ** 2).mean(axis=0)
    return EnsembleStats(
        observables=tuple(o.name for o in observables),
        mean=mean,
        std=std,
        second_moment=second,
        stderr=std / np.sqrt(n),
        n_words=n,
        values=values,
    )
