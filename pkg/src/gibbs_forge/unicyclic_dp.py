"""Exact inference and sampling on factor trees and broken cycles.

The working representation is a MiniGraph: a bag of factors over arbitrary
variable labels whose tables may have different arities, because pinning a
variable slices it out of every adjacent table. Messages are renormalized
per node with the scale folded into a log accumulator, so hard-constraint
products neither underflow nor lose the partition value.

A cycle subgraph (the cycle's factors plus every variable they touch) is
sampled by pinning one cycle variable, which turns the rest into a forest.
Pinning to a uniform spin is only valid when the subgraph's single-node
marginal at that variable is uniform; that premise is recomputed and
checked on every call rather than trusted.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Mapping

import numpy as np

from .core_model import ExactDistribution, FactorGraph
from .errors import (
    Corrupt,
    DegenerateH,
    InvalidInput,
    ZeroMeasureCondition,
)
from .random_instances import Cycle

UNIFORM_PIN_TOL = 1e-12


class MiniGraph:
    """Factor graph fragment with per-factor arity and global labels."""

    __slots__ = ("q", "variables", "factors", "log_const", "zero")

    def __init__(self, q: int, variables: Iterable[int], factors,
                 log_const: float = 0.0, zero: bool = False):
        self.q = int(q)
        if self.q < 2:
            raise InvalidInput("spin alphabet needs at least two values")
        self.variables = tuple(sorted({int(v) for v in variables}))
        vset = set(self.variables)
        fs = []
        for tup, values in factors:
            tup = tuple(int(v) for v in tup)
            if not set(tup) <= vset:
                raise InvalidInput("factor touches an unknown variable")
            if len(set(tup)) != len(tup):
                raise InvalidInput("factor tuple repeats a variable")
            values = np.asarray(values, dtype=np.float64).reshape(-1)
            if values.size != self.q ** len(tup):
                raise InvalidInput("table size does not match factor arity")
            if np.any(values < 0.0) or not np.all(np.isfinite(values)):
                raise InvalidInput("table entries must be finite and >= 0")
            fs.append((tup, values))
        self.factors = tuple(fs)
        self.log_const = float(log_const)
        self.zero = bool(zero)

    @classmethod
    def from_factor_graph(cls, g: FactorGraph) -> "MiniGraph":
        return cls(g.q, range(g.n), [(tup, w.values) for tup, w in g.factors])

    def pin(self, assignment: Mapping[int, int]) -> "MiniGraph":
        """Fix variables to spins by slicing them out of every table.

        A factor whose variables are all pinned collapses to a scalar,
        folded into log_const (or the zero flag when the scalar is 0).
        """
        assignment = {int(v): int(s) for v, s in assignment.items()}
        for v, s in assignment.items():
            if v not in set(self.variables):
                raise InvalidInput(f"cannot pin unknown variable {v}")
            if not 0 <= s < self.q:
                raise InvalidInput("pinned spin out of range")
        log_const = self.log_const
        zero = self.zero
        new_factors = []
        for tup, values in self.factors:
            if not any(v in assignment for v in tup):
                new_factors.append((tup, values))
                continue
            arr = values.reshape((self.q,) * len(tup))
            slicer = tuple(
                assignment[v] if v in assignment else slice(None) for v in tup)
            arr = arr[slicer]
            keep = tuple(v for v in tup if v not in assignment)
            if keep:
                new_factors.append(
                    (keep, np.ascontiguousarray(arr).reshape(-1)))
            else:
                val = float(arr)
                if val <= 0.0:
                    zero = True
                else:
                    log_const += math.log(val)
        remaining = [v for v in self.variables if v not in assignment]
        return MiniGraph(self.q, remaining, new_factors,
                         log_const=log_const, zero=zero)

    def log_weight(self, config: Mapping[int, int]) -> float:
        """log Gibbs weight of a total assignment; -inf on a zero factor."""
        if self.zero:
            return -math.inf
        total = self.log_const
        for tup, values in self.factors:
            idx = 0
            for v in tup:
                s = int(config[v])
                if not 0 <= s < self.q:
                    raise InvalidInput("spin out of range")
                idx = idx * self.q + s
            val = float(values[idx])
            if val <= 0.0:
                return -math.inf
            total += math.log(val)
        return total


@dataclasses.dataclass
class _Component:
    root: int
    log_z: float                       # -inf when the component has no mass
    root_marginal: np.ndarray | None
    down_order: list                   # (factor_id, parent_var, child_vars)


class _TreePlan:
    """One leaf-to-root pass over a forest; reusable for many draws.

    Every message is renormalized to sum 1 and the scale is accumulated
    in log space, so plan.log_z is the exact log partition function of
    the fragment (including collapsed-factor constants).
    """

    def __init__(self, mini: MiniGraph, root_hint: int | None = None):
        self.mini = mini
        self.q = mini.q
        self.zero = mini.zero
        self.components: list[_Component] = []
        self._var_up: dict[int, np.ndarray] = {}
        log_z = mini.log_const

        adj: dict[int, list[int]] = {v: [] for v in mini.variables}
        for fi, (tup, _) in enumerate(mini.factors):
            for v in tup:
                adj[v].append(fi)
        self._adj = adj

        roots: list[int] = []
        if root_hint is not None and root_hint in adj:
            roots.append(root_hint)
        roots.extend(mini.variables)

        seen_v: set[int] = set()
        seen_f: set[int] = set()
        for root in roots:
            if root in seen_v:
                continue
            comp = self._build_component(root, seen_v, seen_f)
            self.components.append(comp)
            if comp.root_marginal is None:
                self.zero = True
            else:
                log_z += comp.log_z
        self.log_z = -math.inf if self.zero else log_z

    def _build_component(self, root, seen_v, seen_f) -> _Component:
        q = self.q
        factors = self.mini.factors
        adj = self._adj
        # BFS with parent pointers; a repeated node means a cycle.
        order: list[tuple[str, int, int | None]] = [("v", root, None)]
        seen_v.add(root)
        head = 0
        while head < len(order):
            kind, ident, parent = order[head]
            head += 1
            if kind == "v":
                for fi in adj[ident]:
                    if fi == parent:
                        continue
                    if fi in seen_f:
                        raise InvalidInput("fragment is not a forest")
                    seen_f.add(fi)
                    order.append(("f", fi, ident))
            else:
                for v in factors[ident][0]:
                    if v == parent:
                        continue
                    if v in seen_v:
                        raise InvalidInput("fragment is not a forest")
                    seen_v.add(v)
                    order.append(("v", v, ident))

        log_z = 0.0
        f_up: dict[int, np.ndarray] = {}
        down_order = [(ident, parent, tuple(v for v in factors[ident][0]
                                            if v != parent))
                      for kind, ident, parent in order if kind == "f"]
        for kind, ident, parent in reversed(order):
            if kind == "v":
                m = np.ones(q)
                for fi in adj[ident]:
                    if parent is not None and fi == parent:
                        continue
                    m = m * f_up[fi]
                s = float(m.sum())
                if s <= 0.0:
                    return _Component(root, -math.inf, None, down_order)
                log_z += math.log(s)
                if parent is None:
                    return _Component(root, log_z, m / s, down_order)
                self._var_up[ident] = m / s
            else:
                tup, values = factors[ident]
                arr = values.reshape((q,) * len(tup))
                arr = np.moveaxis(arr, tup.index(parent), 0)
                for v in tup:
                    if v != parent:
                        arr = np.tensordot(arr, self._var_up[v],
                                           axes=([1], [0]))
                s = float(arr.sum())
                if s <= 0.0:
                    return _Component(root, -math.inf, None, down_order)
                log_z += math.log(s)
                f_up[ident] = arr / s
        raise Corrupt("component traversal ended without reaching its root")

    # -- sampling ---------------------------------------------------------

    def _factor_slices(self, ident, parent, child_vars):
        """(q, q^|children|) weight matrix: rows index the parent spin."""
        q = self.q
        tup, values = self.mini.factors[ident]
        arr = values.reshape((q,) * len(tup))
        arr = np.moveaxis(arr, tup.index(parent), 0)
        flat = arr.reshape(q, -1)
        msg = np.ones(1)
        for v in child_vars:
            msg = np.multiply.outer(msg, self._var_up[v]).reshape(-1)
        return flat * msg[None, :]

    def draw(self, rng) -> dict[int, int]:
        if self.zero:
            raise ZeroMeasureCondition("conditioned measure has zero mass")
        out: dict[int, int] = {}
        for comp in self.components:
            cum = np.cumsum(comp.root_marginal)
            root_idx = int(np.searchsorted(cum, rng.random(), side="right"))
            out[comp.root] = min(root_idx, self.q - 1)
            for ident, parent, child_vars in comp.down_order:
                if not child_vars:
                    continue
                w = self._factor_slices(ident, parent, child_vars)[out[parent]]
                total = w.sum()
                if total <= 0.0:
                    raise Corrupt("sampled a parent spin with zero row mass")
                cum = np.cumsum(w / total)
                idx = int(np.searchsorted(cum, rng.random(), side="right"))
                idx = min(idx, w.size - 1)
                for v in reversed(child_vars):
                    out[v] = idx % self.q
                    idx //= self.q
        return out

    def draw_many(self, rng, size: int) -> dict[int, np.ndarray]:
        """Vectorized draws; same law as repeated draw() calls."""
        if self.zero:
            raise ZeroMeasureCondition("conditioned measure has zero mass")
        q = self.q
        out: dict[int, np.ndarray] = {}
        for comp in self.components:
            cum = np.cumsum(comp.root_marginal)
            u = rng.random(size)
            out[comp.root] = np.minimum(
                np.searchsorted(cum, u, side="right"), q - 1).astype(np.int64)
            for ident, parent, child_vars in comp.down_order:
                if not child_vars:
                    continue
                w = self._factor_slices(ident, parent, child_vars)
                sums = w.sum(axis=1, keepdims=True)
                safe = np.where(sums > 0.0, sums, 1.0)
                cum_rows = np.cumsum(w / safe, axis=1)
                cum_rows[sums[:, 0] <= 0.0] = 1.0
                parents = out[parent]
                u = rng.random(size)
                idx = (cum_rows[parents] < u[:, None]).sum(axis=1)
                idx = np.minimum(idx, w.shape[1] - 1)
                for v in reversed(child_vars):
                    out[v] = (idx % q).astype(np.int64)
                    idx = idx // q
        return out


def _as_minigraph(t) -> MiniGraph:
    if isinstance(t, MiniGraph):
        return t
    if isinstance(t, FactorGraph):
        return MiniGraph.from_factor_graph(t)
    raise InvalidInput("expected a MiniGraph or FactorGraph")


def log_partition(t, cond: Mapping[int, int] | None = None) -> float:
    """Exact log partition function of a forest fragment (-inf if empty)."""
    mini = _as_minigraph(t)
    if cond:
        mini = mini.pin(cond)
    return _TreePlan(mini).log_z


def tree_marginal(t, node: int,
                  cond: Mapping[int, int] | None = None) -> ExactDistribution:
    """Exact single-node conditional marginal on a forest.

    Leaf-to-root message passing rooted at the queried node; every other
    component is still swept so a zero-mass condition anywhere raises.
    """
    mini = _as_minigraph(t)
    cond = dict(cond) if cond else {}
    pinned = mini.pin(cond)
    if node in cond:
        plan = _TreePlan(pinned)
        if plan.zero:
            raise ZeroMeasureCondition("condition has zero measure")
        return ExactDistribution((node,), {(cond[node],): 1.0})
    if node not in set(pinned.variables):
        raise InvalidInput(f"unknown variable {node}")
    plan = _TreePlan(pinned, root_hint=node)
    if plan.zero:
        raise ZeroMeasureCondition("condition has zero measure")
    if plan.components[0].root != node:
        raise Corrupt("root hint was not honoured")
    marg = plan.components[0].root_marginal
    return ExactDistribution((node,), {(s,): float(p)
                                       for s, p in enumerate(marg)},
                             normalize=True)


def sample_tree(t, boundary_cond: Mapping[int, int] | None, rng
                ) -> dict[int, int]:
    """One exact draw from the conditioned Gibbs law of a forest.

    A single leaf-to-root pass plus a root-to-leaf sweep realizes the same
    law as sampling variables one at a time from tree_marginal.
    """
    mini = _as_minigraph(t)
    cond = dict(boundary_cond) if boundary_cond else {}
    plan = _TreePlan(mini.pin(cond))
    return plan.draw(rng)


def sample_tree_many(t, boundary_cond: Mapping[int, int] | None, rng,
                     size: int) -> dict[int, np.ndarray]:
    """Vectorized sample_tree: arrays of spins keyed by free variable."""
    mini = _as_minigraph(t)
    cond = dict(boundary_cond) if boundary_cond else {}
    plan = _TreePlan(mini.pin(cond))
    return plan.draw_many(rng, int(size))


def dump_node_marginals_csv(t, fh, cond: Mapping[int, int] | None = None
                            ) -> None:
    """Debug dump: variable,spin,probability rows for every free node."""
    mini = _as_minigraph(t)
    cond = dict(cond) if cond else {}
    fh.write("variable,spin,probability\n")
    for v in mini.variables:
        if v in cond:
            continue
        dist = tree_marginal(mini, v, cond)
        for s in range(mini.q):
            fh.write(f"{v},{s},{dist.prob((s,))!r}\n")


@dataclasses.dataclass(eq=False)
class HSubgraph:
    """A short cycle's factors plus every variable they touch.

    boundary_nodes is the closing factor's full tuple; m_nodes are its two
    slots lying on the cycle. Removing the closing factor leaves mini_bar,
    a path of factors with pendant variables hanging off it.
    """

    q: int
    cycle: Cycle
    closing_factor: int
    boundary_nodes: tuple[int, ...]
    m_nodes: tuple[int, int]
    pendant_variables: tuple[int, ...]
    variables: tuple[int, ...]
    xi_variables: tuple[int, ...]
    mini: MiniGraph
    mini_bar: MiniGraph


def build_h_subgraph(g: FactorGraph, cycle: Cycle,
                     closing_factor: int) -> HSubgraph:
    if closing_factor not in cycle.factors:
        raise InvalidInput("closing factor is not on the cycle")
    ell = len(cycle.factors)
    idx = cycle.factors.index(closing_factor)
    m_nodes = (cycle.variables[idx], cycle.variables[(idx + 1) % ell])
    boundary_nodes = g.factors[closing_factor][0]
    if not set(m_nodes) <= set(boundary_nodes):
        raise Corrupt("cycle incidences disagree with the graph")
    variables: set[int] = set()
    h_factors = []
    bar_factors = []
    for fi in cycle.factors:
        tup, table = g.factors[fi]
        variables.update(tup)
        h_factors.append((tup, table.values))
        if fi != closing_factor:
            bar_factors.append((tup, table.values))
    pendants = tuple(sorted(variables - set(cycle.variables)))
    xi = tuple(sorted(variables - set(boundary_nodes)))
    return HSubgraph(
        q=g.q,
        cycle=cycle,
        closing_factor=closing_factor,
        boundary_nodes=boundary_nodes,
        m_nodes=m_nodes,
        pendant_variables=pendants,
        variables=tuple(sorted(variables)),
        xi_variables=xi,
        mini=MiniGraph(g.q, variables, h_factors),
        mini_bar=MiniGraph(g.q, variables, bar_factors),
    )


def _pin_log_partitions(h: HSubgraph) -> list[float]:
    """log Z of H with the first m-node pinned to each spin in turn."""
    x_hat = h.m_nodes[0]
    return [_TreePlan(h.mini.pin({x_hat: c})).log_z for c in range(h.q)]


def sample_boundary_of_H(h: HSubgraph, rng) -> dict[int, int]:
    """Exact draw of the closing factor's tuple from the cycle Gibbs law.

    Pins the first m-node to a uniform spin, which is exact only when the
    cycle law's marginal there is uniform; the marginal is recomputed from
    per-spin partition functions and verified before the pin is trusted.
    """
    log_zs = _pin_log_partitions(h)
    finite = [lz for lz in log_zs if lz > -math.inf]
    if not finite:
        raise DegenerateH("cycle subgraph carries no feasible configuration")
    if len(finite) < len(log_zs):
        raise Corrupt("pinned-node marginal is not uniform")
    top = max(finite)
    probs = np.exp(np.asarray(log_zs) - top)
    probs = probs / probs.sum()
    if np.max(np.abs(probs - 1.0 / h.q)) > UNIFORM_PIN_TOL:
        raise Corrupt("pinned-node marginal is not uniform")

    x_hat = h.m_nodes[0]
    cond: dict[int, int] = {x_hat: int(rng.integers(h.q))}
    for v in h.boundary_nodes:
        if v in cond:
            continue
        dist = tree_marginal(h.mini, v, cond)
        cum = 0.0
        u = float(rng.random())
        spin = h.q - 1
        for s in range(h.q):
            cum += dist.prob((s,))
            if u < cum:
                spin = s
                break
        cond[v] = spin
    return {v: cond[v] for v in h.boundary_nodes}


def boundary_probability(h: HSubgraph, eta: Mapping[int, int]) -> float:
    """Exact probability of a closing-tuple assignment under the cycle law."""
    missing = [v for v in h.boundary_nodes if v not in eta]
    if missing:
        raise InvalidInput(f"boundary assignment misses nodes {missing}")
    log_zs = _pin_log_partitions(h)
    tops = [lz for lz in log_zs if lz > -math.inf]
    if not tops:
        raise DegenerateH("cycle subgraph carries no feasible configuration")
    top = max(tops)
    log_total = top + math.log(sum(math.exp(lz - top) for lz in log_zs))
    pinned = h.mini.pin({v: eta[v] for v in h.boundary_nodes})
    log_num = _TreePlan(pinned).log_z
    if log_num == -math.inf:
        return 0.0
    return math.exp(log_num - log_total)


def sample_Xi_given_boundary(h: HSubgraph, eta: Mapping[int, int], rng
                             ) -> dict[int, int]:
    """Exact draw of the off-boundary cycle variables given the boundary.

    Works on the opened cycle (closing factor removed): with the whole
    closing tuple pinned that factor is a constant, so the conditional law
    agrees with the full cycle law whenever the pin is feasible there.
    """
    missing = [v for v in h.boundary_nodes if v not in eta]
    if missing:
        raise InvalidInput(f"boundary assignment misses nodes {missing}")
    pinned = h.mini_bar.pin({v: eta[v] for v in h.boundary_nodes})
    plan = _TreePlan(pinned)
    if plan.zero:
        raise ZeroMeasureCondition("boundary assignment has zero mass")
    return plan.draw(rng)


def xi_probability(h: HSubgraph, eta: Mapping[int, int],
                   xi: Mapping[int, int]) -> float:
    """Exact probability that sample_Xi_given_boundary returns xi."""
    pinned = h.mini_bar.pin({v: eta[v] for v in h.boundary_nodes})
    plan = _TreePlan(pinned)
    if plan.zero:
        raise ZeroMeasureCondition("boundary assignment has zero mass")
    log_w = pinned.log_weight(xi)
    if log_w == -math.inf:
        return 0.0
    return math.exp(log_w - plan.log_z)
