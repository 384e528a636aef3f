"""Lexical-relation experiments on cosines of word feature vectors.

Classes are ordered along the cosine axis (e.g. antonyms < none < synonyms).
Between two neighbouring classes with means D_lo < D_hi and standard
deviations s_lo, s_hi the boundary is

    D_lo + (4 / pi) * arctan(s_lo / s_hi) * (D_hi - D_lo) / 2

and pairs are assigned to the interval they fall in; a cosine exactly on a
boundary goes to the higher class.  Performance is the balanced accuracy,
i.e. the mean of the per-class true rates.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateDataError, IngestionError
from .geometry import (
    DEV_EXPT,
    DIAG_DEV,
    FLAT,
    RAW,
    FeatureTable,
    MetricSpec,
    build_metric,
    flatten_matrix_features,
    norm,
    pair_cosine_array,
    vector_invariant_features,
)

__all__ = [
    "SYNONYMS",
    "ANTONYMS",
    "NONE",
    "HYPER_HYPONYMS",
    "COHYPONYMS",
    "RELATIONS",
    "TASKS",
    "WordPair",
    "PairDataset",
    "load_pairs",
    "CosineGroups",
    "pair_cosines",
    "relation_means",
    "ordering_check",
    "divide",
    "ClassReport",
    "classify_ordered",
    "classify_binary",
    "classify_three_way",
    "fit_divides",
    "full_protocol",
    "split_protocol",
    "synonym_vs_rest",
    "hyper_cohypo_task",
    "LengthReport",
    "hyper_length_ratio",
    "histograms",
    "run_baselines",
]

SYNONYMS, ANTONYMS, NONE = "SYNONYMS", "ANTONYMS", "NONE"
HYPER_HYPONYMS, COHYPONYMS = "HYPER_HYPONYMS", "COHYPONYMS"
RELATIONS = (SYNONYMS, ANTONYMS, NONE, HYPER_HYPONYMS, COHYPONYMS)

# task name -> ordered classes (low cosine first); a class pools one or more relations
TASKS: dict[str, tuple[tuple[str, tuple[str, ...]], ...]] = {
    "syn-ant": ((ANTONYMS, (ANTONYMS,)), (SYNONYMS, (SYNONYMS,))),
    "syn-ant-none": ((ANTONYMS, (ANTONYMS,)), (NONE, (NONE,)), (SYNONYMS, (SYNONYMS,))),
    "syn-vs-rest": (("NON_SYNONYMS", (ANTONYMS, NONE)), (SYNONYMS, (SYNONYMS,))),
    "hyper-cohypo": ((HYPER_HYPONYMS, (HYPER_HYPONYMS,)), (COHYPONYMS, (COHYPONYMS,))),
}


# ---------------------------------------------------------------------------
# pair data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WordPair:
    word1: str
    word2: str
    relation: str
    score: float
    hyper_direction: int | None = None  # 1 or 2: which word is the hypernym


@dataclass(frozen=True)
class PairDataset:
    pairs: tuple[WordPair, ...]
    source: str = ""

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def with_relation(self, *relations: str) -> list[WordPair]:
        return [p for p in self.pairs if p.relation in relations]


PAIR_HEADER = ["word1", "word2", "relation", "score", "hyper_direction"]


def load_pairs(path) -> PairDataset:
    """Read the TSV pair file (header ``word1 word2 relation score hyper_direction``)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise IngestionError(f"{path}: pairs file not found")
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PAIR_HEADER:
            raise IngestionError(f"{path}: expected header {' '.join(PAIR_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 5:
                raise IngestionError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            w1, w2, rel, score, hd = (x.strip() for x in row)
            if rel not in RELATIONS:
                raise IngestionError(f"{path}:{lineno}: unknown relation {rel!r}")
            try:
                s = float(score)
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric score {score!r}") from None
            if not 0.0 <= s <= 10.0:
                raise IngestionError(f"{path}:{lineno}: score {s} outside [0, 10]")
            if hd not in ("1", "2", "-"):
                raise IngestionError(f"{path}:{lineno}: hyper_direction must be 1, 2 or -")
            pairs.append(WordPair(w1, w2, rel, s, None if hd == "-" else int(hd)))
    return PairDataset(tuple(pairs), source=path)


def save_pairs(ds: PairDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(PAIR_HEADER)
        for p in ds:
            w.writerow([p.word1, p.word2, p.relation, repr(p.score), "-" if p.hyper_direction is None
                        else p.hyper_direction])


# ---------------------------------------------------------------------------
# cosines and relation means
# ---------------------------------------------------------------------------

@dataclass
class CosineGroups:
    groups: dict[str, np.ndarray]
    skipped_missing: int = 0
    skipped_undefined: int = 0

    def __getitem__(self, relation):
        return self.groups.get(relation, np.empty(0))

    def pooled(self, relations: Sequence[str]) -> np.ndarray:
        return np.concatenate([self[r] for r in relations])

    @property
    def skipped(self) -> dict[str, int]:
        return {"missing_word": self.skipped_missing, "zero_norm": self.skipped_undefined}


def pair_cosines(ft: FeatureTable, metric: MetricSpec, pairs: PairDataset | Sequence[WordPair]) -> CosineGroups:
    """Cosine of every pair whose words both have features, grouped by relation."""
    kept = [p for p in pairs if p.word1 in ft and p.word2 in ft]
    missing = len(pairs) - len(kept)
    cos = pair_cosine_array(ft.rows([p.word1 for p in kept]), ft.rows([p.word2 for p in kept]), metric) \
        if kept else []
    groups: dict[str, list[float]] = {}
    undefined = 0
    for p, c in zip(kept, cos):
        if c is None:
            undefined += 1
            continue
        groups.setdefault(p.relation, []).append(c)
    ordered = {r: np.array(groups[r]) for r in RELATIONS if r in groups}
    return CosineGroups(ordered, missing, undefined)


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std() / math.sqrt(x.size))


def relation_means(groups: CosineGroups | Mapping[str, np.ndarray]) -> dict[str, dict]:
    """Mean and standard error (population std / sqrt(n)) per relation; empty groups omitted."""
    g = groups.groups if isinstance(groups, CosineGroups) else groups
    out = {}
    for rel in RELATIONS:
        x = np.asarray(g.get(rel, ()), dtype=float)
        if x.size:
            m, se = _mean_stderr(x)
            out[rel] = {"mean": m, "stderr": se, "count": int(x.size)}
    return out


def ordering_check(means: Mapping[str, dict | float], order: Sequence[str] = (ANTONYMS, NONE, SYNONYMS)) -> bool:
    """True when the relation means increase strictly along ``order``."""
    vals = []
    for rel in order:
        m = means.get(rel)
        if m is None:
            return False
        vals.append(m["mean"] if isinstance(m, Mapping) else float(m))
    return all(a < b for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# divides and classification
# ---------------------------------------------------------------------------

def divide(d_lo: float, s_lo: float, d_hi: float, s_hi: float) -> float:
    """Class boundary between a low-cosine and a high-cosine class.

    With s_hi == 0 the arctan factor tends to 2 and the boundary to d_hi.
    """
    if s_hi == 0:
        return float(d_hi)
    return float(d_lo + (4.0 / math.pi) * math.atan(s_lo / s_hi) * (d_hi - d_lo) / 2.0)


@dataclass
class ClassReport:
    classes: tuple[str, ...]
    confusion: np.ndarray  # confusion[true, predicted]
    divides: tuple[float, ...]
    skipped: dict[str, int] = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    repetitions: list[float] | None = None

    @property
    def counts(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def true_rates(self) -> list[float | None]:
        return [float(self.confusion[i, i] / n) if n else None for i, n in enumerate(self.counts)]

    @property
    def balanced_accuracy(self) -> float | None:
        if self.repetitions is not None:
            return float(np.mean(self.repetitions))
        rates = self.true_rates
        if any(r is None for r in rates):
            return None
        return float(np.mean(rates))

    @property
    def stderr(self) -> float:
        if not self.repetitions:
            return 0.0
        return float(np.std(self.repetitions) / math.sqrt(len(self.repetitions)))

    def binary_counts(self) -> dict[str, int] | None:
        """TP/FN/FP/TN with the higher-cosine class as positive."""
        if len(self.classes) != 2:
            return None
        c = self.confusion
        return {"TP": int(c[1, 1]), "FN": int(c[1, 0]), "FP": int(c[0, 1]), "TN": int(c[0, 0])}

    def to_json(self) -> dict:
        out = {
            "classes": list(self.classes),
            "confusion": self.confusion.astype(int).tolist(),
            "true_rates": self.true_rates,
            "balanced_accuracy": self.balanced_accuracy,
            "stderr": self.stderr,
            "divides": [float(d) for d in self.divides],
            "skipped": dict(self.skipped),
            "protocol": dict(self.protocol),
        }
        if self.binary_counts():
            out.update(self.binary_counts())
        if self.repetitions is not None:
            out["repetition_balanced_accuracies"] = list(self.repetitions)
        return out


def _class_arrays(groups: CosineGroups, task: str) -> tuple[tuple[str, ...], list[np.ndarray]]:
    spec = TASKS[task]
    return tuple(name for name, _ in spec), [groups.pooled(rels) for _, rels in spec]


def fit_divides(class_cosines: Sequence[np.ndarray]) -> tuple[float, ...]:
    """Boundaries between consecutive classes from their means and population stds."""
    for i, x in enumerate(class_cosines):
        if len(x) == 0:
            raise DegenerateDataError(f"class {i} has no pairs")
    stats = [(float(np.mean(x)), float(np.std(x))) for x in class_cosines]
    return tuple(divide(m0, s0, m1, s1) for (m0, s0), (m1, s1) in zip(stats, stats[1:]))


def classify_ordered(class_cosines: Sequence[np.ndarray], divides: Sequence[float],
                     classes: Sequence[str]) -> ClassReport:
    """Assign each cosine to the interval between consecutive divides."""
    divides = tuple(float(d) for d in divides)
    if any(not math.isfinite(d) for d in divides):
        raise DegenerateDataError("non-finite divide")
    if any(a > b for a, b in zip(divides, divides[1:])):
        raise DegenerateDataError(f"crossed divides {divides}")
    k = len(classes)
    conf = np.zeros((k, k), dtype=int)
    edges = np.asarray(divides)
    for i, x in enumerate(class_cosines):
        pred = np.searchsorted(edges, np.asarray(x, float), side="right")
        conf[i] += np.bincount(pred, minlength=k)
    return ClassReport(tuple(classes), conf, divides)


def classify_binary(cos_lo, cos_hi, divide_value: float, class_lo: str = ANTONYMS,
                    class_hi: str = SYNONYMS) -> ClassReport:
    return classify_ordered([np.asarray(cos_lo), np.asarray(cos_hi)], [divide_value], (class_lo, class_hi))


def classify_three_way(cos_a, cos_n, cos_s, d_an: float, d_ns: float) -> ClassReport:
    return classify_ordered([np.asarray(cos_a), np.asarray(cos_n), np.asarray(cos_s)], [d_an, d_ns],
                            (ANTONYMS, NONE, SYNONYMS))


def full_protocol(groups: CosineGroups, task: str = "syn-ant") -> ClassReport:
    """Fit the divides on all pairs and score on the same pairs."""
    classes, arrays = _class_arrays(groups, task)
    rep = classify_ordered(arrays, fit_divides(arrays), classes)
    rep.skipped = groups.skipped
    rep.protocol = {"protocol": "full", "task": task}
    return rep


def _split_indices(sizes, frac, rng, stratify):
    """Train masks per relation group."""
    if stratify:
        masks = []
        for n in sizes:
            m = np.zeros(n, dtype=bool)
            m[rng.permutation(n)[: int(round(frac * n))]] = True
            masks.append(m)
        return masks
    total = sum(sizes)
    pooled = np.zeros(total, dtype=bool)
    pooled[rng.permutation(total)[: int(round(frac * total))]] = True
    return np.split(pooled, np.cumsum(sizes)[:-1])


def split_protocol(groups: CosineGroups, task: str = "syn-ant", frac: float = 0.65, reps: int = 20,
                   seed: int = 0, stratify: bool = True, max_retries: int = 100) -> ClassReport:
    """Repeated random train/test splits: fit divides on ``frac`` of the pairs, score the rest.

    Repetition ``r`` draws from its own stream seeded by ``(seed, r)``.  With
    ``frac >= 1`` the test set would be empty, so the training pairs are
    scored instead (the full-set protocol).
    """
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"train fraction {frac} outside (0, 1]")
    spec = TASKS[task]
    classes = tuple(name for name, _ in spec)
    # stratification is per relation, so a pooled class is split relation by relation
    rel_lists = [[groups[r] for r in rels] for _, rels in spec]
    flat = [x for lst in rel_lists for x in lst]
    sizes = [len(x) for x in flat]
    bas, conf_total, last_divides = [], np.zeros((len(classes),) * 2, dtype=int), ()
    for r in range(reps):
        rng = np.random.default_rng([seed, r])
        for _ in range(max_retries):
            masks = _split_indices(sizes, frac, rng, stratify)
            train, test, pos = [], [], 0
            for lst in rel_lists:
                tr, te = [], []
                for x in lst:
                    m = masks[pos]
                    tr.append(x[m])
                    te.append(x[~m] if frac < 1.0 else x[m])
                    pos += 1
                train.append(np.concatenate(tr))
                test.append(np.concatenate(te))
            if all(len(t) for t in train) and all(len(t) for t in test):
                break
        else:
            raise DegenerateDataError(f"could not draw a split with every class present after {max_retries} tries")
        last_divides = fit_divides(train)
        rep = classify_ordered(test, last_divides, classes)
        conf_total += rep.confusion
        bas.append(rep.balanced_accuracy)
    out = ClassReport(classes, conf_total, last_divides, skipped=groups.skipped, repetitions=bas)
    out.protocol = {"protocol": "split", "task": task, "frac": frac, "reps": reps, "seed": seed,
                    "stratify": stratify}
    return out


def synonym_vs_rest(groups: CosineGroups) -> ClassReport:
    classes, arrays = _class_arrays(groups, "syn-vs-rest")
    if not len(arrays[0]) or not len(arrays[1]):
        raise DegenerateDataError("synonym-vs-rest needs both synonyms and non-synonyms")
    return full_protocol(groups, "syn-vs-rest")


def hyper_cohypo_task(ft: FeatureTable, metric: MetricSpec, pairs, protocol: str = "full", **split_kw) -> ClassReport:
    groups = pair_cosines(ft, metric, pairs)
    if protocol == "full":
        return full_protocol(groups, "hyper-cohypo")
    return split_protocol(groups, "hyper-cohypo", **split_kw)


# ---------------------------------------------------------------------------
# hypernym length test
# ---------------------------------------------------------------------------

@dataclass
class LengthReport:
    ratio: float
    longer: int
    ties: int
    total: int
    skipped: dict[str, int]

    def to_json(self) -> dict:
        return {"ratio": self.ratio, "hypernym_longer": self.longer, "ties": self.ties, "pairs": self.total,
                "skipped": dict(self.skipped)}


def hyper_length_ratio(ft: FeatureTable, metric: MetricSpec, pairs) -> LengthReport:
    """Fraction of directed hyper/hyponym pairs whose hypernym vector is strictly longer."""
    hh = [p for p in pairs if p.relation == HYPER_HYPONYMS]
    directed = [p for p in hh if p.hyper_direction in (1, 2)]
    usable = [p for p in directed if p.word1 in ft and p.word2 in ft]
    if not usable:
        raise DegenerateDataError("no hyper/hyponym pairs with a known direction")
    longer = ties = 0
    for p in usable:
        hyper, hypo = (p.word1, p.word2) if p.hyper_direction == 1 else (p.word2, p.word1)
        a, b = norm(ft.row(hyper), metric), norm(ft.row(hypo), metric)
        if a > b:
            longer += 1
        elif a == b:
            ties += 1
    skipped = {"undirected": len(hh) - len(directed), "missing_word": len(directed) - len(usable)}
    return LengthReport(longer / len(usable), longer, ties, len(usable), skipped)


# ---------------------------------------------------------------------------
# histograms and baselines
# ---------------------------------------------------------------------------

def histograms(groups: CosineGroups, bins: int = 40, lo: float = -1.0, hi: float = 1.0) -> list[dict]:
    """Per-relation cosine histograms normalised to unit total."""
    edges = np.linspace(lo, hi, bins + 1)
    rows = []
    for rel, x in groups.groups.items():
        counts, _ = np.histogram(np.clip(x, lo, hi), bins=edges)
        total = counts.sum()
        for i in range(bins):
            rows.append({"relation": rel, "bin_left": float(edges[i]), "bin_right": float(edges[i + 1]),
                         "normalized_count": float(counts[i] / total) if total else 0.0})
    return rows


def histogram_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["relation", "bin_left", "bin_right", "normalized_count"])
    for r in rows:
        w.writerow([r["relation"], repr(r["bin_left"]), repr(r["bin_right"]), repr(r["normalized_count"])])
    return buf.getvalue()


def _means_for(ft: FeatureTable, kind: str, pairs) -> dict:
    metric = build_metric(ft, kind)
    groups = pair_cosines(ft, metric, pairs)
    means = relation_means(groups)
    return {"metric": kind, "means": means, "ordering_ok": ordering_check(means), "skipped": groups.skipped,
            "dropped": list(metric.dropped)}


def run_baselines(ens, pairs, word_vectors: Mapping[str, np.ndarray] | None = None) -> dict[str, dict]:
    """Relation-mean tables for the matrix and word-vector baselines.

    matrix_flat           plain normalised product of flattened matrices
    matrix_flat_deviation flattened matrices minus their mean, diagonal variance metric
    vector_set1..3        invariants of word vectors (degrees 1-2, 3-4, 1-4), deviations, diagonal metric
    vector_plain          plain normalised product of word vectors
    vector_deviation      word vectors minus their mean, diagonal variance metric
    """
    out = {
        "matrix_flat": _means_for(flatten_matrix_features(ens), FLAT, pairs),
        "matrix_flat_deviation": _means_for(flatten_matrix_features(ens, deviation=True), DIAG_DEV, pairs),
    }
    if word_vectors is None:
        return out
    words = [w for w in word_vectors]
    for subset in ("set1", "set2", "set3"):
        ft = vector_invariant_features(word_vectors, subset, words, mode=DEV_EXPT)
        out[f"vector_{subset}"] = _means_for(ft, DIAG_DEV, pairs)
    V = np.array([word_vectors[w] for w in words])
    cols = tuple(f"v_{i}" for i in range(V.shape[1]))
    out["vector_plain"] = _means_for(FeatureTable(tuple(words), cols, V, RAW), FLAT, pairs)
    ref = V.mean(axis=0)
    out["vector_deviation"] = _means_for(FeatureTable(tuple(words), cols, V - ref, DEV_EXPT, ref), DIAG_DEV, pairs)
    return out
