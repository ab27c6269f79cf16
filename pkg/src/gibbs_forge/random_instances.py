"""Random instance generation and short-cycle structure.

Two generators: the null model (uniform distinct-entry ordered tuples,
weights drawn independently from the family law) and the teacher-student
model (ground truth first, then tuples and weights tilted toward it).

The short-cycle census enumerates simple cycles of the bipartite
variable/factor incidence graph below a length threshold, where length
counts bipartite nodes (a cycle through L variables and L factors has
length 2L). Instances whose short cycles are pairwise node-disjoint form
the admissible family for the sequential sampler.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core_model import FactorGraph, WeightTable
from .errors import InvalidInput, InvalidSize
from .models import ModelSpec, draw_params, weight_from_params


# ---------------------------------------------------------------------------
# Tuple sampling.
# ---------------------------------------------------------------------------

def draw_distinct_tuple(n: int, k: int, rng) -> tuple:
    """Uniform ordered k-tuple of distinct variable indices."""
    if n < k:
        raise InvalidSize(f"cannot pick {k} distinct nodes out of {n}")
    if k == 2:
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        return (i, j)
    return tuple(int(x) for x in rng.choice(n, size=k, replace=False))


class AliasSampler:
    """Vose alias table for repeated draws from a fixed finite law."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or w.sum() <= 0:
            raise InvalidInput("weights must be a nonneg vector with mass")
        p = w * (w.size / w.sum())
        self.n = w.size
        self.prob = np.zeros(self.n)
        self.alias = np.zeros(self.n, dtype=np.int64)
        small = [i for i in range(self.n) if p[i] < 1.0]
        large = [i for i in range(self.n) if p[i] >= 1.0]
        while small and large:
            s, lg = small.pop(), large.pop()
            self.prob[s] = p[s]
            self.alias[s] = lg
            p[lg] = (p[lg] + p[s]) - 1.0
            (small if p[lg] < 1.0 else large).append(lg)
        for i in large + small:
            self.prob[i] = 1.0

    def draw(self, rng) -> int:
        i = int(rng.integers(0, self.n))
        if rng.random() < self.prob[i]:
            return i
        return int(self.alias[i])


# ---------------------------------------------------------------------------
# Null model.
# ---------------------------------------------------------------------------

def _check_size(n: int, m: int, k: int):
    if k < 2:
        raise InvalidSize("arity must be at least 2")
    if n < k:
        raise InvalidSize(f"need n >= k, got n={n}, k={k}")
    if m < 0:
        raise InvalidSize("factor count cannot be negative")


def sample_null(n: int, m: int, k: int, spec: ModelSpec,
                rng) -> FactorGraph:
    """m factors with uniform distinct-entry tuples and iid family weights."""
    if k != spec.k:
        raise InvalidInput(f"k={k} disagrees with spec.k={spec.k}")
    _check_size(n, m, k)
    factors = []
    shared = None
    if not spec.has_random_weights:
        shared = weight_from_params(spec, draw_params(spec, rng))
    for _ in range(m):
        tup = draw_distinct_tuple(n, k, rng)
        if shared is not None:
            factors.append((tup, shared))
        else:
            factors.append((tup, weight_from_params(
                spec, draw_params(spec, rng))))
    return FactorGraph(n, factors, q=spec.q, k=k)


# ---------------------------------------------------------------------------
# Teacher-student model.
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PlantedPair:
    """A generated graph together with the ground truth that tilted it."""

    graph: FactorGraph
    ground_truth: np.ndarray


# below this n, the k=2 tuple law is tabulated exactly instead of rejected
_ALIAS_CUTOFF = 512


def _mean_table(spec: ModelSpec) -> WeightTable:
    """Entrywise expectation of the family's weight table.

    Deterministic families return their single table. The clause family
    averages to a constant off-zero value; couplings with symmetric J
    average the odd part away. Both land on constant tables, so tuple
    selection under the tilt is uniform for them.
    """
    if not spec.has_random_weights:
        return weight_from_params(spec, draw_params(spec, None))
    if spec.family == "nae_sat":
        vals = np.full(2**spec.k, 1.0 - 2.0 / 2**spec.k)
    else:
        vals = np.ones(2**spec.k)
    return WeightTable(spec.q, spec.k, vals)


def _tilted_params(spec: ModelSpec, truth_values: tuple, rng) -> dict:
    """Factor parameter draw conditioned on the tuple's truth spins.

    The tilted law reweights the base parameter law by the realized table
    value at the truth spins; both random families admit exact rejection
    samplers for it.
    """
    if spec.family == "nae_sat":
        # forbidden sign vectors are the two making the truth literals agree
        bad_a = tuple(bool(s) for s in truth_values)
        bad_b = tuple(not b for b in bad_a)
        while True:
            signs = tuple(bool(b) for b in rng.integers(0, 2, size=spec.k))
            if signs != bad_a and signs != bad_b:
                return {"signs": signs}
    if spec.family == "k_spin":
        if spec.coupling_law == "fixed":
            return {"j": float(spec.j_value)}
        s = 1.0
        for v in truth_values:
            s *= 1.0 if v == 0 else -1.0
        # target density (1 + tanh(beta J) s) phi(J); envelope 2 phi(J)
        while True:
            j = float(rng.standard_normal())
            if rng.random() < 0.5 * (1.0 + math.tanh(spec.beta * j) * s):
                return {"j": j}
    return draw_params(spec, rng)


def sample_planted(n: int, m: int, k: int, spec: ModelSpec,
                   rng) -> PlantedPair:
    """Ground truth first, then tuples weighted by the mean table at the
    truth and weights from the correspondingly tilted parameter law."""
    if k != spec.k:
        raise InvalidInput(f"k={k} disagrees with spec.k={spec.k}")
    _check_size(n, m, k)
    truth = rng.integers(0, spec.q, size=n).astype(np.int64)
    mean_w = _mean_table(spec)
    arr = mean_w.values
    wmax = float(arr.max())
    uniform_tuples = bool(np.all(arr == arr[0]))

    sampler = None
    pairs = None
    if not uniform_tuples and k == 2 and n <= _ALIAS_CUTOFF:
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        weights = [mean_w.value((truth[i], truth[j])) for i, j in pairs]
        sampler = AliasSampler(weights)

    factors = []
    for _ in range(m):
        if uniform_tuples:
            tup = draw_distinct_tuple(n, k, rng)
        elif sampler is not None:
            tup = pairs[sampler.draw(rng)]
        else:
            while True:   # rejection from the null tuple law
                tup = draw_distinct_tuple(n, k, rng)
                tv = mean_w.value(tuple(truth[list(tup)]))
                if tv > 0 and rng.random() < tv / wmax:
                    break
        params = _tilted_params(spec, tuple(int(truth[v]) for v in tup), rng)
        factors.append((tup, weight_from_params(spec, params)))
    g = FactorGraph(n, factors, q=spec.q, k=k)
    truth.setflags(write=False)
    return PlantedPair(graph=g, ground_truth=truth)


# ---------------------------------------------------------------------------
# Short cycles.
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Cycle:
    """Simple bipartite cycle: variables[i] - factors[i] - variables[i+1],
    closing from factors[-1] back to variables[0]."""

    variables: tuple
    factors: tuple

    @property
    def length(self) -> int:
        return 2 * len(self.variables)

    def shares_node_with(self, other: "Cycle") -> bool:
        return bool(set(self.variables) & set(other.variables)
                    or set(self.factors) & set(other.factors))


@dataclasses.dataclass(frozen=True)
class CycleCensus:
    """Short-cycle listing plus the pairwise-disjointness verdict."""

    threshold: int
    short_cycles: tuple
    in_family_G: bool

    def cycle_membership(self):
        """Maps var->cycle index and factor->cycle index (disjoint case)."""
        var_of = {}
        factor_of = {}
        for ci, cyc in enumerate(self.short_cycles):
            for v in cyc.variables:
                var_of[v] = ci
            for f in cyc.factors:
                factor_of[f] = ci
        return var_of, factor_of


def default_threshold(n: int, d: float, k: int) -> int:
    """floor(log base d*k of n, divided by 10); requires d*k > 1."""
    if d * k <= 1:
        raise InvalidInput("threshold formula needs d*k > 1")
    return int(math.floor(math.log(n) / math.log(d * k) / 10.0))


def enumerate_short_cycles(g: FactorGraph, threshold: int) -> tuple:
    """All simple bipartite cycles with node count < threshold.

    Each cycle is reported once: rooted at its smallest variable index,
    direction fixed by first factor < last factor. Cycles are subgraphs:
    two cycles over the same node set but different incidences both count.
    """
    max_vars = (threshold - 1) // 2
    if max_vars < 2:
        return ()
    var_fs = g.var_factors()
    out = []
    for root in range(g.n):
        # path_vars[0] == root; grow var -> factor -> var with all nodes new
        stack = [(root, [root], [], {root}, set())]
        while stack:
            v, pv, pf, seen_v, seen_f = stack.pop()
            for f in var_fs[v]:
                if f in seen_f:
                    continue
                tup = g.factors[f][0]
                if len(pv) >= 2 and root in tup and pf and pf[0] < f:
                    out.append(Cycle(tuple(pv), tuple(pf) + (f,)))
                if len(pv) < max_vars:
                    for w in tup:
                        if w > root and w not in seen_v:
                            stack.append((w, pv + [w], pf + [f],
                                          seen_v | {w}, seen_f | {f}))
    out.sort(key=lambda c: (c.variables, c.factors))
    return tuple(out)


def cycle_census(g: FactorGraph, d: float, k: int,
                 override_threshold: int | None = None) -> CycleCensus:
    """Census at threshold override or floor(log_{dk}(n)/10)."""
    if override_threshold is not None:
        threshold = int(override_threshold)
    else:
        threshold = default_threshold(g.n, d, k)
    if threshold <= 0:
        return CycleCensus(threshold=threshold, short_cycles=(),
                           in_family_G=True)
    cycles = enumerate_short_cycles(g, threshold)
    ok = True
    for i in range(len(cycles)):
        for j in range(i + 1, len(cycles)):
            if cycles[i].shares_node_with(cycles[j]):
                ok = False
                break
        if not ok:
            break
    return CycleCensus(threshold=threshold, short_cycles=cycles,
                       in_family_G=ok)


def is_balanced(sigma, q: int, c: float = 3.0) -> bool:
    """True iff every spin frequency is within c * n^(-2/3) of 1/q."""
    arr = np.asarray(sigma, dtype=np.int64).reshape(-1)
    n = arr.size
    if n == 0:
        raise InvalidInput("empty configuration")
    counts = np.bincount(arr, minlength=q)
    tol = c * n ** (-2.0 / 3.0)
    return bool(np.all(np.abs(counts / n - 1.0 / q) <= tol))
