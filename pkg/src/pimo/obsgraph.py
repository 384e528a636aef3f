"""Permutation-invariant matrix observables encoded as directed multigraphs.

A graph with ``n`` nodes and edges ``(s, t)`` stands for the polynomial

    sum over i_0..i_{n-1} of  prod_{(s, t)} M[i_s, i_t]

so nodes are summed indices and every edge is one matrix factor.  The 28
observables used throughout the package are embedded in ``TABLE``.

Evaluation goes through a :class:`ContractionPlan`: the graph is split into
connected components (disjoint index sums factor) and each component is
contracted by summing out one node at a time in min-degree order.  Every
intermediate factor of the tabulated graphs has at most two free indices, so
the cost is O(D^3) per observable.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DirectedGraphObservable",
    "ObservableSet",
    "ContractionPlan",
    "ComponentPlan",
    "TABLE",
    "SET_NAMES",
    "table_row",
    "canonical_set",
    "load_observables",
    "evaluate_naive",
    "plan",
    "evaluate",
    "evaluate_all",
    "evaluate_batch",
]


@dataclass(frozen=True)
class DirectedGraphObservable:
    node_count: int
    edges: tuple[tuple[int, int], ...]
    id: int | None = None
    label: str = ""

    def __post_init__(self):
        edges = tuple((int(s), int(t)) for s, t in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        if not edges:
            raise ValueError("observable needs at least one edge")
        seen = set()
        for s, t in edges:
            if not (0 <= s < self.node_count and 0 <= t < self.node_count):
                raise ValueError(f"edge {(s, t)} references a node outside 0..{self.node_count - 1}")
            seen.update((s, t))
        if len(seen) != self.node_count:
            missing = sorted(set(range(self.node_count)) - seen)
            raise ValueError(f"isolated nodes {missing}")

    @property
    def degree(self) -> int:
        """Polynomial degree, i.e. the number of matrix factors."""
        return len(self.edges)

    def canonical_key(self) -> tuple:
        return canonical_form(self.node_count, self.edges)

    def to_json(self) -> dict:
        out = {"nodes": self.node_count, "edges": [list(e) for e in self.edges]}
        if self.id is not None:
            out["id"] = self.id
        if self.label:
            out["label"] = self.label
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DirectedGraphObservable":
        return cls(
            node_count=int(obj["nodes"]),
            edges=tuple(tuple(e) for e in obj["edges"]),
            id=obj.get("id"),
            label=obj.get("label", ""),
        )

    @property
    def name(self) -> str:
        if self.id is not None:
            return str(self.id)
        return self.label or "custom"


# The 28 tabulated observables: (label, node count, edges).
_TABLE_SPEC = [
    ("M_{ii}", 1, [(0, 0)]),
    ("M_{ij}", 2, [(0, 1)]),
    ("M_{ij}M_{ij}", 2, [(0, 1), (0, 1)]),
    ("M_{ij}M_{ji}", 2, [(0, 1), (1, 0)]),
    ("M_{ii}M_{ij}", 2, [(0, 0), (0, 1)]),
    ("M_{ii}M_{ji}", 2, [(0, 0), (1, 0)]),
    ("M_{ij}M_{ik}", 3, [(0, 1), (0, 2)]),
    ("M_{ij}M_{kj}", 3, [(0, 1), (2, 1)]),
    ("M_{ij}M_{jk}", 3, [(0, 1), (1, 2)]),
    ("M_{ij}M_{kl}", 4, [(0, 1), (2, 3)]),
    ("M^2_{ii}", 1, [(0, 0), (0, 0)]),
    ("M_{ii}M_{jj}", 2, [(0, 0), (1, 1)]),
    ("M_{ii}M_{jk}", 3, [(0, 0), (1, 2)]),
    ("M^3_{ii}", 1, [(0, 0)] * 3),
    ("M^3_{ij}", 2, [(0, 1)] * 3),
    ("M_{ij}M_{jk}M_{ki}", 3, [(0, 1), (1, 2), (2, 0)]),
    ("M_{ij}M_{jj}M_{jk}", 3, [(0, 1), (1, 1), (1, 2)]),
    ("M_{ij}M_{kk}M_{ll}", 4, [(0, 1), (2, 2), (3, 3)]),
    ("M_{ij}M_{jk}M_{ll}", 4, [(0, 1), (1, 2), (3, 3)]),
    ("M_{ij}M_{kl}M_{mm}", 5, [(0, 1), (2, 3), (4, 4)]),
    ("M_{ij}M_{kl}M_{mn}", 6, [(0, 1), (2, 3), (4, 5)]),
    ("M_{ij}M_{kl}M_{mn}M_{oo}", 7, [(0, 1), (2, 3), (4, 5), (6, 6)]),
    ("M_{ij}M_{kl}M_{mn}M_{op}", 8, [(0, 1), (2, 3), (4, 5), (6, 7)]),
    ("M^4_{ii}", 1, [(0, 0)] * 4),
    ("M^4_{ij}", 2, [(0, 1)] * 4),
    ("M_{ij}M_{jk}M_{pq}M_{qr}", 6, [(0, 1), (1, 2), (3, 4), (4, 5)]),
    ("M_{ij}M_{jk}M_{kl}", 4, [(0, 1), (1, 2), (2, 3)]),
    # Same graph as row 27 under relabelling; kept as a separate row.
    ("M_{jk}M_{kl}M_{lm}", 4, [(0, 1), (1, 2), (2, 3)]),
]

TABLE: tuple[DirectedGraphObservable, ...] = tuple(
    DirectedGraphObservable(n, tuple(edges), id=k + 1, label=label)
    for k, (label, n, edges) in enumerate(_TABLE_SPEC)
)

# set name -> 1-based rows of the table
SET_NAMES = {
    "13": range(1, 14),
    "10": range(14, 24),
    "15": range(14, 29),
    "23": range(1, 24),
    "28": range(1, 29),
}


def table_row(k: int) -> DirectedGraphObservable:
    if not 1 <= k <= len(TABLE):
        raise KeyError(f"no table row {k}")
    return TABLE[k - 1]


@dataclass(frozen=True)
class ObservableSet:
    name: str
    observables: tuple[DirectedGraphObservable, ...]

    def __len__(self):
        return len(self.observables)

    def __iter__(self):
        return iter(self.observables)

    def __getitem__(self, i):
        return self.observables[i]

    @property
    def ids(self) -> list[str]:
        return [o.name for o in self.observables]

    def to_json(self) -> dict:
        return {"name": self.name, "observables": [o.to_json() for o in self.observables]}


def canonical_set(name: str) -> ObservableSet:
    try:
        rows = SET_NAMES[str(name)]
    except KeyError:
        raise KeyError(f"unknown observable set {name!r}; expected one of {sorted(SET_NAMES)}") from None
    return ObservableSet(str(name), tuple(TABLE[k - 1] for k in rows))


def load_observables(path) -> ObservableSet:
    """Read a custom observable set: a JSON list of graphs or ``{"observables": [...]}``."""
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict):
        obj = obj["observables"]
    return ObservableSet("custom", tuple(DirectedGraphObservable.from_json(o) for o in obj))


# ---------------------------------------------------------------------------
# canonical forms
# ---------------------------------------------------------------------------

def _node_signature(node_count, edges):
    out_deg = [0] * node_count
    in_deg = [0] * node_count
    loops = [0] * node_count
    for s, t in edges:
        if s == t:
            loops[s] += 1
        else:
            out_deg[s] += 1
            in_deg[t] += 1
    return [(loops[v], out_deg[v], in_deg[v]) for v in range(node_count)]


def canonical_form(node_count: int, edges: Sequence[tuple[int, int]]) -> tuple:
    """Relabelling-invariant key of a directed multigraph.

    Nodes are first ordered by degree signature; the lexicographically
    smallest sorted edge list over relabellings that respect that order is
    the canonical one.
    """
    sig = _node_signature(node_count, edges)
    groups: dict[tuple, list[int]] = {}
    for v in range(node_count):
        groups.setdefault(sig[v], []).append(v)
    ordered = [groups[k] for k in sorted(groups)]
    best = None
    for perms in itertools.product(*(itertools.permutations(g) for g in ordered)):
        relabel = {}
        for v in itertools.chain.from_iterable(perms):
            relabel[v] = len(relabel)
        cand = tuple(sorted((relabel[s], relabel[t]) for s, t in edges))
        if best is None or cand < best:
            best = cand
    return (node_count, best)


# ---------------------------------------------------------------------------
# naive evaluation (reference oracle)
# ---------------------------------------------------------------------------

def evaluate_naive(obs: DirectedGraphObservable, M) -> float:
    """Sum over all D**n index assignments of the product of edge entries.

    Enumerates every assignment explicitly (vectorised in chunks); intended
    as a reference for small D only.
    """
    M = np.asarray(M, dtype=float)
    D = M.shape[0]
    n = obs.node_count
    total = 0.0
    chunk = max(1, 2 ** 20 // max(1, n))
    count = D ** n
    for start in range(0, count, chunk):
        flat = np.arange(start, min(count, start + chunk))
        idx = np.stack(np.unravel_index(flat, (D,) * n))
        prod = np.ones(flat.shape[0])
        for s, t in obs.edges:
            prod = prod * M[idx[s], idx[t]]
        total += prod.sum()
    return float(total)


# ---------------------------------------------------------------------------
# contraction planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanStep:
    node: int
    factors: tuple[int, ...]  # indices into the factor list at this step
    scope: tuple[int, ...]  # all nodes touched, eliminated node included
    result: tuple[int, ...]  # free nodes of the produced factor


@dataclass(frozen=True)
class ComponentPlan:
    key: tuple  # canonical form of the component
    node_count: int
    edges: tuple[tuple[int, int], ...]  # in canonical labelling
    order: tuple[int, ...]
    steps: tuple[PlanStep, ...]

    @property
    def max_arity(self) -> int:
        return max(len(s.result) for s in self.steps)

    @property
    def max_scope(self) -> int:
        return max(len(s.scope) for s in self.steps)

    def cost(self, D: int) -> int:
        return sum(D ** len(s.scope) for s in self.steps)


@dataclass(frozen=True)
class ContractionPlan:
    observable: DirectedGraphObservable
    components: tuple[ComponentPlan, ...]

    def cost(self, D: int) -> int:
        """Upper bound on floating point multiply-adds at dimension D."""
        return sum(c.cost(D) for c in self.components) + len(self.components)

    @property
    def max_exponent(self) -> int:
        return max(c.max_scope for c in self.components)


def _components(node_count, edges):
    parent = list(range(node_count))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, t in edges:
        a, b = find(s), find(t)
        if a != b:
            parent[max(a, b)] = min(a, b)
    comps: dict[int, list[int]] = {}
    for v in range(node_count):
        comps.setdefault(find(v), []).append(v)
    out = []
    for nodes in sorted(comps.values()):
        local = {v: i for i, v in enumerate(nodes)}
        sub = [(local[s], local[t]) for s, t in edges if s in local]
        out.append((len(nodes), sub))
    return out


def _relabel_to_canonical(node_count, edges):
    key = canonical_form(node_count, edges)
    return key, key[1]


def _plan_component(node_count, edges) -> ComponentPlan:
    key, cedges = _relabel_to_canonical(node_count, edges)
    # factor scopes: self loop -> (v,), ordinary edge -> (s, t)
    scopes = [tuple(sorted({s, t})) for s, t in cedges]
    alive = set(range(node_count))
    order, steps = [], []
    while alive:
        def n_neighbors(v):
            nb = set()
            for sc in scopes:
                if v in sc:
                    nb.update(sc)
            nb.discard(v)
            return len(nb)

        v = min(sorted(alive), key=n_neighbors)
        touched = tuple(i for i, sc in enumerate(scopes) if v in sc)
        scope = tuple(sorted(set().union(*(scopes[i] for i in touched))))
        result = tuple(u for u in scope if u != v)
        steps.append(PlanStep(v, touched, scope, result))
        scopes = [sc for i, sc in enumerate(scopes) if i not in touched] + [result]
        alive.remove(v)
        order.append(v)
    return ComponentPlan(key, node_count, tuple(cedges), tuple(order), tuple(steps))


_PLAN_CACHE: dict[tuple, ComponentPlan] = {}


def plan(obs: DirectedGraphObservable) -> ContractionPlan:
    comps = []
    for n, sub in _components(obs.node_count, obs.edges):
        key = canonical_form(n, sub)
        cp = _PLAN_CACHE.get(key)
        if cp is None:
            cp = _PLAN_CACHE[key] = _plan_component(n, sub)
        comps.append(cp)
    return ContractionPlan(obs, tuple(comps))


# ---------------------------------------------------------------------------
# plan execution
# ---------------------------------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxy"


def _run_component(cp: ComponentPlan, Ms: np.ndarray) -> np.ndarray:
    """Contract one connected component for a batch ``Ms`` of shape (B, D, D)."""
    diag = np.diagonal(Ms, axis1=1, axis2=2)
    factors: list[tuple[tuple[int, ...], np.ndarray]] = []
    for s, t in cp.edges:
        if s == t:
            factors.append(((s,), diag))
        else:
            factors.append(((s, t), Ms))
    for step in cp.steps:
        used = [factors[i] for i in step.factors]
        # eliminated node goes last so the reduction runs over a contiguous axis
        out_vars = step.result + (step.node,)
        subs = ",".join("z" + "".join(_LETTERS[v] for v in vs) for vs, _ in used)
        target = "z" + "".join(_LETTERS[v] for v in out_vars)
        prod = np.einsum(f"{subs}->{target}", *(a for _, a in used))
        reduced = np.ascontiguousarray(prod).sum(axis=-1)
        factors = [f for i, f in enumerate(factors) if i not in step.factors]
        factors.append((step.result, reduced))
    (vs, val), = factors
    assert vs == ()
    return val


def _chunk_size(D: int, n_batch: int, budget: int = 1 << 22) -> int:
    return max(1, min(n_batch, budget // max(1, D ** 3)))


def _as_batch(M) -> np.ndarray:
    Ms = np.asarray(M, dtype=float)
    if Ms.ndim == 2:
        Ms = Ms[None]
    if Ms.ndim != 3 or Ms.shape[1] != Ms.shape[2]:
        raise ValueError(f"expected square matrices, got shape {Ms.shape}")
    return Ms


def evaluate(obs: DirectedGraphObservable, M) -> float:
    return float(evaluate_batch([obs], _as_batch(M))[0, 0])


def evaluate_all(obs_set: Iterable[DirectedGraphObservable], M) -> list[float]:
    """Values of every observable on one matrix, sharing component contractions."""
    return [float(x) for x in evaluate_batch(list(obs_set), _as_batch(M))[0]]


def evaluate_batch(observables: Sequence[DirectedGraphObservable], Ms) -> np.ndarray:
    """Evaluate observables on a stack of matrices; returns shape (B, n_obs).

    Each distinct connected component (by canonical form) is contracted once
    per matrix and reused by every observable that contains it.
    """
    Ms = _as_batch(Ms)
    B, D, _ = Ms.shape
    plans = [plan(o) for o in observables]
    out = np.empty((B, len(plans)))
    step = _chunk_size(D, B)
    for start in range(0, B, step):
        chunk = Ms[start:start + step]
        cache: dict[tuple, np.ndarray] = {}
        for j, p in enumerate(plans):
            val = np.ones(chunk.shape[0])
            for cp in p.components:
                if cp.key not in cache:
                    cache[cp.key] = _run_component(cp, chunk)
                val = val * cache[cp.key]
            out[start:start + step, j] = val
    return out
