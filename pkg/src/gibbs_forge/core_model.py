"""Factor-graph data model and exact small-instance oracles.

Conventions used throughout the package:

- Spins are integers 0..q-1. A total configuration is a length-n integer
  array (anything np.asarray can digest); a partial configuration is a plain
  dict mapping variable index -> spin.
- Weight tables are dense, length q**k, row-major: the tuple
  (t_0, ..., t_{k-1}) lives at flat index sum(t_i * q**(k-1-i)).
- Distributions over configurations of a node tuple use spin tuples as keys,
  plus the reserved atom FAIL for process abort mass.

Everything here is immutable after construction and side-effect free.
"""
from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    InvalidInput,
    SizeExceeded,
    ZeroMass,
    ZeroMeasureCondition,
)

# Reserved outcome atom: the probability a process run aborts. It takes part
# in total-variation arithmetic exactly like an ordinary support point.
FAIL = "fail"

# Hard cap for exact enumeration: q**n beyond this raises SizeExceeded.
ENUMERATION_CAP = 2**24

# Enumeration proceeds in blocks of this many configurations to bound memory.
_BLOCK = 1 << 14


class WeightTable:
    """Dense nonnegative weight table over spin k-tuples.

    Entries must be nonnegative with at least one positive; the canonical
    model constructors additionally keep every entry below 2, and raw tables
    may opt out of that range check with validate_range=False.
    """

    __slots__ = ("q", "k", "values", "_strides", "_row_sums")

    def __init__(self, q: int, k: int, values, validate_range: bool = True):
        if q < 2:
            raise InvalidInput("need at least two spins")
        if k < 1:
            raise InvalidInput("arity must be positive")
        v = np.asarray(values, dtype=np.float64).reshape(-1).copy()
        if v.size != q**k:
            raise InvalidInput(f"expected {q ** k} entries, got {v.size}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidInput("weights must be finite and nonnegative")
        if not np.any(v > 0):
            raise ZeroMass("weight table has no positive entry")
        if validate_range and np.any(v >= 2):
            raise InvalidInput("weights must lie in [0, 2); "
                               "pass validate_range=False for raw tables")
        v.setflags(write=False)
        self.q = int(q)
        self.k = int(k)
        self.values = v
        self._strides = tuple(q ** (k - 1 - i) for i in range(k))
        self._row_sums = None

    def index(self, spins) -> int:
        """Flat row-major index of a spin tuple."""
        idx = 0
        for s, st in zip(spins, self._strides):
            idx += s * st
        return idx

    def value(self, spins) -> float:
        return float(self.values[self.index(spins)])

    def as_array(self) -> np.ndarray:
        """Read-only view shaped (q,)*k."""
        return self.values.reshape((self.q,) * self.k)

    def row_sums(self) -> np.ndarray:
        """row_sums()[i, c] = sum of entries whose coordinate i equals c."""
        if self._row_sums is None:
            arr = self.as_array()
            out = np.empty((self.k, self.q), dtype=np.float64)
            for i in range(self.k):
                axes = tuple(a for a in range(self.k) if a != i)
                out[i] = arr.sum(axis=axes)
            out.setflags(write=False)
            self._row_sums = out
        return self._row_sums

    def row_sum(self, coord: int, spin: int) -> float:
        return float(self.row_sums()[coord, spin])

    def total(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other):
        return (isinstance(other, WeightTable) and self.q == other.q
                and self.k == other.k
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.q, self.k, self.values.tobytes()))

    def __repr__(self):
        return f"WeightTable(q={self.q}, k={self.k})"


class FactorGraph:
    """Variable nodes 0..n-1 plus factors carrying ordered neighbour tuples.

    Every factor's tuple has k distinct entries; all factors share one arity
    k and one spin count q. Graphs with no factors must state q and k
    explicitly.
    """

    __slots__ = ("n", "q", "k", "factors", "_var_factors")

    def __init__(self, n: int, factors, q: int | None = None,
                 k: int | None = None):
        n = int(n)
        if n < 1:
            raise InvalidInput("need at least one variable node")
        factors = [(tuple(int(x) for x in tup), table)
                   for tup, table in factors]
        if factors:
            k_seen = factors[0][1].k
            q_seen = factors[0][1].q
            if k is not None and k != k_seen:
                raise InvalidInput("stated k disagrees with factor tables")
            if q is not None and q != q_seen:
                raise InvalidInput("stated q disagrees with factor tables")
            k, q = k_seen, q_seen
        if q is None or k is None:
            raise InvalidInput("empty graph needs explicit q and k")
        for tup, table in factors:
            if len(tup) != k or table.k != k or table.q != q:
                raise InvalidInput("all factors must share one q and one k")
            if len(set(tup)) != len(tup):
                raise InvalidInput(f"neighbour tuple {tup} repeats a node")
            if min(tup) < 0 or max(tup) >= n:
                raise InvalidInput(f"neighbour tuple {tup} out of range")
        self.n = n
        self.q = int(q)
        self.k = int(k)
        self.factors = tuple(factors)
        self._var_factors = None

    @property
    def m(self) -> int:
        return len(self.factors)

    def var_factors(self) -> tuple:
        """var_factors()[v] = ascending tuple of factor indices touching v."""
        if self._var_factors is None:
            adj = [[] for _ in range(self.n)]
            for j, (tup, _) in enumerate(self.factors):
                for v in tup:
                    adj[v].append(j)
            self._var_factors = tuple(tuple(a) for a in adj)
        return self._var_factors

    def __repr__(self):
        return f"FactorGraph(n={self.n}, m={self.m}, q={self.q}, k={self.k})"


def _as_total(g: FactorGraph, sigma) -> np.ndarray:
    arr = np.asarray(sigma, dtype=np.int64).reshape(-1)
    if arr.size != g.n:
        raise InvalidInput(f"configuration has {arr.size} spins, need {g.n}")
    if arr.size and (arr.min() < 0 or arr.max() >= g.q):
        raise InvalidInput("spin out of range")
    return arr


def gibbs_weight(g: FactorGraph, sigma) -> float:
    """Product of factor weights at a total configuration (0 allowed)."""
    arr = _as_total(g, sigma)
    w = 1.0
    for tup, table in g.factors:
        w *= table.values[table.index(arr[list(tup)])]
        if w == 0.0:
            return 0.0
    return float(w)


def _config_blocks(n_vars: int, q: int, block: int = _BLOCK):
    """Yield (codes, matrix) blocks of all q**n_vars configurations.

    Lexicographic order with variable 0 most significant. codes are the flat
    indices; matrix rows are the spin vectors.
    """
    total = q**n_vars
    powers = q ** np.arange(n_vars - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, block):
        codes = np.arange(start, min(start + block, total), dtype=np.int64)
        mat = (codes[:, None] // powers[None, :]) % q
        yield codes, mat


def _block_weights(g: FactorGraph, mat: np.ndarray,
                   columns: Mapping[int, int] | None = None) -> np.ndarray:
    """Gibbs weight of every row of a configuration block.

    columns remaps variable index -> column of mat (default: identity).
    """
    w = np.ones(mat.shape[0], dtype=np.float64)
    for tup, table in g.factors:
        if columns is None:
            cols = list(tup)
        else:
            cols = [columns[v] for v in tup]
        idx = np.zeros(mat.shape[0], dtype=np.int64)
        for c, st in zip(cols, (table.q ** (table.k - 1 - i)
                                for i in range(table.k))):
            idx += mat[:, c] * st
        w *= table.values[idx]
    return w


def _check_cap(g: FactorGraph):
    if g.q**g.n > ENUMERATION_CAP:
        raise SizeExceeded(
            f"q**n = {g.q}**{g.n} exceeds the enumeration cap {ENUMERATION_CAP}")


def partition_function(g: FactorGraph) -> float:
    """Sum of gibbs_weight over all q**n configurations (may be 0)."""
    _check_cap(g)
    z = 0.0
    for _, mat in _config_blocks(g.n, g.q):
        z += float(_block_weights(g, mat).sum())
    return z


class ExactDistribution:
    """Probability distribution over spin tuples of a fixed node tuple.

    Keys are spin tuples aligned with ``domain``; the reserved FAIL atom may
    also carry mass. Probabilities must be nonnegative and sum to 1 within
    1e-12 unless normalize=True (then they are scaled, and a zero total is an
    error).
    """

    __slots__ = ("domain", "_p")

    def __init__(self, domain: Iterable[int], probs: Mapping,
                 normalize: bool = False):
        self.domain = tuple(int(v) for v in domain)
        items = {}
        total = 0.0
        for key, p in probs.items():
            p = float(p)
            if p < 0:
                if p < -1e-15:
                    raise InvalidInput("negative probability")
                p = 0.0
            if key is not FAIL and key != FAIL:
                key = tuple(int(s) for s in key)
                if len(key) != len(self.domain):
                    raise InvalidInput("support key does not match domain")
            else:
                key = FAIL
            items[key] = items.get(key, 0.0) + p
            total += p
        if normalize:
            if total <= 0:
                raise ZeroMass("cannot normalize zero mass")
            items = {key: p / total for key, p in items.items()}
        else:
            if abs(total - 1.0) > 1e-12:
                raise InvalidInput(f"probabilities sum to {total!r}, not 1")
        self._p = items

    def prob(self, key) -> float:
        if key is not FAIL and key != FAIL:
            key = tuple(int(s) for s in key)
        else:
            key = FAIL
        return self._p.get(key, 0.0)

    def items(self):
        """Deterministically ordered (key, prob) pairs; FAIL sorts last."""
        def sort_key(kv):
            key = kv[0]
            return (1, ()) if key == FAIL else (0, key)

        return sorted(self._p.items(), key=sort_key)

    def support(self):
        return [key for key, p in self.items() if p > 0]

    def fail_mass(self) -> float:
        return self._p.get(FAIL, 0.0)

    def __len__(self):
        return len(self._p)

    def __repr__(self):
        return (f"ExactDistribution(domain={self.domain}, "
                f"support={len(self._p)})")


def total_variation(p: ExactDistribution, r: ExactDistribution) -> float:
    """(1/2) sum |p - r| over the union of supports (missing entries are 0)."""
    keys = set(p._p) | set(r._p)
    return 0.5 * sum(abs(p.prob(key) - r.prob(key)) for key in keys)


def exact_conditional(g: FactorGraph, target: Iterable[int],
                      cond: Mapping[int, int] | None = None
                      ) -> ExactDistribution:
    """Exact marginal of the Gibbs distribution on ``target`` given ``cond``.

    Computed by enumerating all configurations of the non-conditioned
    variables; requires q**n within the enumeration cap and a conditioning
    event of positive measure.
    """
    _check_cap(g)
    cond = dict(cond) if cond else {}
    for v, s in cond.items():
        if not (0 <= v < g.n) or not (0 <= s < g.q):
            raise InvalidInput("conditioning assignment out of range")
    target = tuple(int(v) for v in target)
    if any(not 0 <= v < g.n for v in target):
        raise InvalidInput("target node out of range")
    free = [v for v in range(g.n) if v not in cond]
    columns = {v: i for i, v in enumerate(free)}

    t_sz = g.q ** len(target)
    if t_sz > ENUMERATION_CAP:
        raise SizeExceeded("target tuple too large to tabulate")
    masses = np.zeros(t_sz, dtype=np.float64)
    t_strides = g.q ** np.arange(len(target) - 1, -1, -1, dtype=np.int64)

    # Fixed contribution of conditioned targets to the target code.
    base_code = 0
    var_positions = []   # (position in target, free-column) pairs
    for pos, v in enumerate(target):
        if v in cond:
            base_code += cond[v] * int(t_strides[pos])
        else:
            var_positions.append((pos, columns[v]))

    n_free = len(free)
    if n_free == 0:
        full = np.array([[cond[v] for v in range(g.n)]], dtype=np.int64)
        w = _block_weights(g, full)
        total = float(w.sum())
        if total <= 0:
            raise ZeroMeasureCondition("conditioning event has zero measure")
        masses[base_code] = total
    else:
        cond_cols = np.array([cond.get(v, 0) for v in range(g.n)],
                             dtype=np.int64)
        free_idx = np.array(free, dtype=np.int64)
        total = 0.0
        for _, mat in _config_blocks(n_free, g.q):
            full = np.broadcast_to(cond_cols, (mat.shape[0], g.n)).copy()
            full[:, free_idx] = mat
            w = _block_weights(g, full)
            total += float(w.sum())
            code = np.full(mat.shape[0], base_code, dtype=np.int64)
            for pos, col in var_positions:
                code += mat[:, col] * int(t_strides[pos])
            np.add.at(masses, code, w)
        if total <= 0:
            raise ZeroMeasureCondition("conditioning event has zero measure")

    probs = {}
    for code in np.nonzero(masses)[0]:
        spins = []
        rem = int(code)
        for st in t_strides:
            spins.append(rem // int(st))
            rem %= int(st)
        probs[tuple(spins)] = masses[code] / total
    return ExactDistribution(target, probs, normalize=False)


def edge_marginal(w: WeightTable,
                  cond: Mapping[int, int] | None = None) -> ExactDistribution:
    """Normalized weight table as a distribution over spin k-tuples.

    With cond = {coordinate: spin}, returns the conditional distribution over
    the remaining coordinates by restriction and renormalization (domain keys
    are the remaining coordinate positions).
    """
    if cond:
        cond = dict(cond)
        for c, s in cond.items():
            if not (0 <= c < w.k) or not (0 <= s < w.q):
                raise InvalidInput("conditioned coordinate out of range")
        keep = [c for c in range(w.k) if c not in cond]
        arr = w.as_array()
        slicer = tuple(cond.get(c, slice(None)) for c in range(w.k))
        sub = np.asarray(arr[slicer], dtype=np.float64).reshape(-1)
        total = float(sub.sum())
        if total <= 0:
            raise ZeroMass("conditioned edge measure has zero mass")
        probs = {}
        it = np.ndindex(*((w.q,) * len(keep))) if keep else iter([()])
        for spins, p in zip(it, sub):
            if p > 0:
                probs[tuple(spins)] = p / total
        return ExactDistribution(keep, probs)
    total = w.total()
    if total <= 0:
        raise ZeroMass("edge measure has zero mass")
    probs = {}
    for flat in np.nonzero(w.values)[0]:
        spins = []
        rem = int(flat)
        for st in w._strides:
            spins.append(rem // st)
            rem %= st
        probs[tuple(spins)] = w.values[flat] / total
    return ExactDistribution(range(w.k), probs)


# ---------------------------------------------------------------------------
# Serialization: line-oriented text format with exact float round-trip.
# Header "n k q"; one line per factor: k indices then q**k row-major weights;
# optionally a final line "truth s_0 ... s_{n-1}" for planted instances.
# ---------------------------------------------------------------------------

def dump_graph(g: FactorGraph, truth=None) -> str:
    lines = [f"{g.n} {g.k} {g.q}"]
    for tup, table in g.factors:
        parts = [str(v) for v in tup]
        parts.extend(repr(float(x)) for x in table.values)
        lines.append(" ".join(parts))
    if truth is not None:
        arr = _as_total(g, truth)
        lines.append("truth " + " ".join(str(int(s)) for s in arr))
    return "\n".join(lines) + "\n"


def save_graph(path, g: FactorGraph, truth=None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_graph(g, truth))


def parse_graph(text: str):
    """Inverse of dump_graph; returns (FactorGraph, truth-or-None)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidInput("empty graph file")
    head = lines[0].split()
    if len(head) != 3:
        raise InvalidInput("header must be 'n k q'")
    n, k, q = (int(x) for x in head)
    truth = None
    body = lines[1:]
    if body and body[-1].startswith("truth"):
        truth = np.array([int(x) for x in body[-1].split()[1:]],
                         dtype=np.int64)
        body = body[:-1]
    factors = []
    tables: dict[bytes, WeightTable] = {}
    want = k + q**k
    for ln in body:
        parts = ln.split()
        if len(parts) != want:
            raise InvalidInput(
                f"factor line has {len(parts)} fields, expected {want}")
        tup = tuple(int(x) for x in parts[:k])
        vals = np.array([float(x) for x in parts[k:]], dtype=np.float64)
        key = vals.tobytes()
        table = tables.get(key)
        if table is None:
            table = WeightTable(q, k, vals, validate_range=False)
            tables[key] = table
        factors.append((tup, table))
    return FactorGraph(n, factors, q=q, k=k), truth


def load_graph(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_graph(fh.read())


def config_key(sigma) -> tuple:
    """Total configuration as a hashable spin tuple."""
    return tuple(int(s) for s in np.asarray(sigma).reshape(-1))


def run_length_encode(sigma) -> list:
    """[[spin, count], ...] encoding of a total configuration."""
    arr = np.asarray(sigma, dtype=np.int64).reshape(-1)
    out = []
    for s in arr:
        s = int(s)
        if out and out[-1][0] == s:
            out[-1][1] += 1
        else:
            out.append([s, 1])
    return out


def run_length_decode(pairs) -> np.ndarray:
    out = []
    for spin, count in pairs:
        out.extend([int(spin)] * int(count))
    return np.array(out, dtype=np.int64)
