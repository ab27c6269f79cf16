"""Disagreement-propagation processes over factor graphs.

One engine drives every variant. A run starts from a boundary set of
pre-assigned variables, keeps a FIFO frontier of factor nodes adjacent to
disagreements, and at each factor either copies the input spins or swaps
the two disagreement spins of its unassigned neighbours, with a flip
probability chosen so that forward and reverse runs are in detailed
balance. Short cycles get a deterministic sweep instead of per-factor coin
flips. The variants differ only in how many initial disagreements they
accept and in the cycle handling, so they share the engine and diverge
through a policy object that supplies the coin flips. Replaying a run
against a fixed target configuration with the same policy interface turns
the engine into an exact transition-probability evaluator.
"""
from __future__ import annotations

import dataclasses
from collections import deque
from typing import Mapping

import numpy as np

from .core_model import (
    FAIL,
    ExactDistribution,
    FactorGraph,
    config_key,
)
from .errors import (
    Corrupt,
    InfeasibleBoundary,
    InvalidInput,
    SizeExceeded,
    ZeroMeasureCondition,
)
from .random_instances import CycleCensus
from .unicyclic_dp import HSubgraph, sample_Xi_given_boundary, xi_probability

REVISIT = "revisit"
SHORT_CYCLE_CONFLICT = "short_cycle_conflict"
BOUNDARY_REACHED = "boundary_reached"

_LAW_CAP = 2**22


@dataclasses.dataclass(frozen=True)
class ProcessOutcome:
    """Result of one process run.

    config is the total output configuration (ok runs only). visited and
    disagreements are the variable-node sets the run assigned and flipped;
    visited_factors the processed factor nodes. changes maps the variables
    whose output spin differs from the input to their new spin.
    """

    status: str
    config: np.ndarray | None
    fail_reason: str | None
    visited: frozenset
    visited_factors: frozenset
    disagreements: frozenset
    changes: Mapping[int, int]

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class _Unreachable(Exception):
    """Replay target is inconsistent with the forced trajectory."""


class _ForkNeeded(Exception):
    """Script exhausted at a genuine coin flip (carries its probability)."""

    def __init__(self, q_beta: float):
        self.q_beta = q_beta


class _RngPolicy:
    """Live run: one uniform draw per non-degenerate branch decision."""

    __slots__ = ("rng",)

    def __init__(self, rng):
        self.rng = rng

    def decide(self, q_beta, nodes, keep_vals, flip_vals) -> bool:
        return float(self.rng.random()) < q_beta

    def observe(self, node, value) -> None:
        pass


class _XiPolicy:
    """Replay toward a fixed target; accumulates the trajectory probability."""

    __slots__ = ("xi", "prob")

    def __init__(self, xi: np.ndarray):
        self.xi = xi
        self.prob = 1.0

    def decide(self, q_beta, nodes, keep_vals, flip_vals) -> bool:
        want = [int(self.xi[v]) for v in nodes]
        if want == flip_vals:
            self.prob *= q_beta
            return True
        if want == keep_vals:
            self.prob *= 1.0 - q_beta
            return False
        raise _Unreachable

    def observe(self, node, value) -> None:
        if int(self.xi[node]) != value:
            raise _Unreachable


class _ScriptPolicy:
    """Replay a branch script; fork when it runs out."""

    __slots__ = ("script", "pos")

    def __init__(self, script):
        self.script = script
        self.pos = 0

    def decide(self, q_beta, nodes, keep_vals, flip_vals) -> bool:
        if self.pos >= len(self.script):
            raise _ForkNeeded(q_beta)
        choice = self.script[self.pos]
        self.pos += 1
        return choice

    def observe(self, node, value) -> None:
        pass


@dataclasses.dataclass
class _RunResult:
    status: str
    fail_reason: str | None
    assignments: dict
    disagreements: set
    visited_factors: set
    dis_pair: dict


def _flip_probability(table, tup, pivot_pos, sigma, tau_pivot) -> float:
    """max{0, 1 - ratio of the pivot-conditioned edge marginals}."""
    spins = [int(sigma[v]) for v in tup]
    w_old = table.value(spins)
    r_old = table.row_sum(pivot_pos, spins[pivot_pos])
    if w_old <= 0.0 or r_old <= 0.0:
        raise Corrupt("input configuration is infeasible at a frontier factor")
    spins[pivot_pos] = tau_pivot
    w_new = table.value(spins)
    if w_new <= 0.0:
        ratio = 0.0
    else:
        r_new = table.row_sum(pivot_pos, tau_pivot)
        ratio = (w_new / r_new) * (r_old / w_old)
    return max(0.0, 1.0 - ratio)


def _engine(g: FactorGraph, sigma: np.ndarray, boundary: Mapping[int, int],
            policy, census: CycleCensus | None = None,
            active_mask: np.ndarray | None = None) -> _RunResult:
    """One process run; sigma is read-only, results come back as dicts.

    boundary maps the pre-assigned variables to their output spins; every
    boundary node differing from sigma seeds a disagreement whose spin pair
    is inherited by the disagreements it spawns.
    """
    var_factors = g.var_factors()
    tau = dict(boundary)
    lambda_nodes = set(boundary)
    dis_pair: dict[int, tuple[int, int]] = {}
    disagreements: set[int] = set()
    visited_factors: set[int] = set()
    queue: deque[int] = deque()
    queued: set[int] = set()

    if census is not None:
        var_cycle, factor_cycle = census.cycle_membership()
        cycles = census.short_cycles
    else:
        var_cycle = factor_cycle = {}
        cycles = ()

    def enqueue_neighbours(x: int) -> None:
        for fi in var_factors[x]:
            if active_mask is not None and not active_mask[fi]:
                continue
            if fi not in visited_factors and fi not in queued:
                queue.append(fi)
                queued.add(fi)

    for x, s in boundary.items():
        if s != int(sigma[x]):
            dis_pair[x] = (int(sigma[x]), s)
            disagreements.add(x)
    for x in sorted(disagreements):
        enqueue_neighbours(x)

    def check_pairs() -> None:
        # only the two disagreement spins of a run may change
        for x in disagreements:
            lo, hi = dis_pair[x]
            assert int(sigma[x]) in (lo, hi) and tau[x] in (lo, hi), (
                "changed spin outside its disagreement pair")

    def fail(reason: str) -> _RunResult:
        check_pairs()
        return _RunResult("fail", reason, tau, disagreements, visited_factors,
                          dis_pair)

    while queue:
        fi = queue.popleft()
        queued.discard(fi)
        if fi in visited_factors:
            continue
        tup, table = g.factors[fi]
        assigned = [v for v in tup if v in tau]
        if not assigned:
            raise Corrupt("frontier factor has no assigned neighbour")
        if len(assigned) > 1:
            hits_boundary = any(
                v in lambda_nodes and tau[v] == int(sigma[v])
                for v in assigned)
            return fail(BOUNDARY_REACHED if hits_boundary else REVISIT)
        pivot = assigned[0]
        if pivot not in dis_pair:
            raise Corrupt("frontier factor's assigned neighbour agrees")
        d_lo, d_hi = dis_pair[pivot]

        def swapped(s: int) -> int:
            if s == d_lo:
                return d_hi
            if s == d_hi:
                return d_lo
            return s

        # short-cycle rule: a frontier factor on or beside an untouched
        # short cycle triggers a deterministic sweep of the neighbourhood
        region = set()
        if census is not None:
            hit = set()
            ci = factor_cycle.get(fi)
            if ci is not None:
                hit.add(ci)
            for v in tup:
                ci = var_cycle.get(v)
                if ci is not None:
                    hit.add(ci)
            for ci in hit:
                cyc = cycles[ci]
                if all(f not in visited_factors for f in cyc.factors):
                    if active_mask is not None and not all(
                            active_mask[f] for f in cyc.factors):
                        continue
                    region.update(cyc.factors)
        if region:
            region.add(fi)
            c_nodes = set()
            for rf in sorted(region):
                c_nodes.update(g.factors[rf][0])
            for v in c_nodes:
                if v != pivot and v in tau:
                    return fail(SHORT_CYCLE_CONFLICT)
            sweep: dict[int, int] = {}
            swept_dis = {pivot}
            progress = True
            while progress:
                progress = False
                for rf in sorted(region):
                    rtup = g.factors[rf][0]
                    if not any(v in swept_dis for v in rtup):
                        continue
                    todo = [v for v in rtup if v not in tau and v not in sweep]
                    if not todo:
                        continue
                    progress = True
                    for v in todo:
                        s_old = int(sigma[v])
                        s_new = swapped(s_old)
                        sweep[v] = s_new
                        if s_new != s_old:
                            swept_dis.add(v)
            for v in c_nodes:
                if v not in tau and v not in sweep:
                    sweep[v] = int(sigma[v])
            new_dis = []
            for v in sorted(sweep):
                tau[v] = sweep[v]
                policy.observe(v, sweep[v])
                if sweep[v] != int(sigma[v]):
                    dis_pair[v] = (d_lo, d_hi)
                    disagreements.add(v)
                    new_dis.append(v)
            visited_factors.update(region)
            for v in new_dis:
                enqueue_neighbours(v)
            continue

        # ordinary rule: keep all unassigned neighbours with probability
        # 1 - q_beta, else swap their disagreement spins
        m_prime = [v for v in tup if v != pivot]
        keep_vals = [int(sigma[v]) for v in m_prime]
        flip_vals = [swapped(s) for s in keep_vals]
        if keep_vals == flip_vals:
            vals = keep_vals
        else:
            q_beta = _flip_probability(table, tup, tup.index(pivot), sigma,
                                       tau[pivot])
            if q_beta <= 0.0:
                flip = False
            elif q_beta >= 1.0:
                flip = True
            else:
                flip = policy.decide(q_beta, m_prime, keep_vals, flip_vals)
            vals = flip_vals if flip else keep_vals
        visited_factors.add(fi)
        new_dis = []
        for v, s in zip(m_prime, vals):
            tau[v] = s
            policy.observe(v, s)
            if s != int(sigma[v]):
                dis_pair[v] = (d_lo, d_hi)
                disagreements.add(v)
                new_dis.append(v)
        for v in sorted(new_dis):
            enqueue_neighbours(v)

    check_pairs()
    return _RunResult("ok", None, tau, disagreements, visited_factors,
                      dis_pair)


# ---------------------------------------------------------------------------
# input validation and outcome assembly


def _total_config(g: FactorGraph, sigma) -> np.ndarray:
    arr = np.asarray(sigma, dtype=np.int64).reshape(-1)
    if arr.size != g.n:
        raise InvalidInput(f"configuration has {arr.size} spins, need {g.n}")
    if arr.size and (arr.min() < 0 or arr.max() >= g.q):
        raise InvalidInput("spin out of range")
    return arr


def _check_boundary_pair(g: FactorGraph, sigma: np.ndarray,
                         eta: Mapping[int, int], kappa: Mapping[int, int],
                         max_disagreements: int | None) -> dict:
    eta = {int(v): int(s) for v, s in eta.items()}
    kappa = {int(v): int(s) for v, s in kappa.items()}
    if set(eta) != set(kappa):
        raise InvalidInput("eta and kappa must share one variable set")
    for v, s in list(eta.items()) + list(kappa.items()):
        if not 0 <= v < g.n:
            raise InvalidInput(f"boundary variable {v} out of range")
        if not 0 <= s < g.q:
            raise InvalidInput("boundary spin out of range")
    for v, s in eta.items():
        if int(sigma[v]) != s:
            raise InvalidInput("sigma disagrees with eta on the boundary")
    diffs = sum(1 for v in eta if eta[v] != kappa[v])
    if max_disagreements is not None and diffs > max_disagreements:
        raise InvalidInput(
            f"eta and kappa differ on {diffs} nodes, at most "
            f"{max_disagreements} allowed")
    return kappa


def _outcome(g: FactorGraph, sigma: np.ndarray, res: _RunResult
             ) -> ProcessOutcome:
    changes = {v: s for v, s in res.assignments.items()
               if s != int(sigma[v])}
    if res.status == "ok":
        config = sigma.copy()
        for v, s in changes.items():
            config[v] = s
        config.setflags(write=False)
    else:
        config = None
    return ProcessOutcome(
        status=res.status,
        config=config,
        fail_reason=res.fail_reason,
        visited=frozenset(res.assignments),
        visited_factors=frozenset(res.visited_factors),
        disagreements=frozenset(res.disagreements),
        changes=changes,
    )


def _feasible(g: FactorGraph, sigma: np.ndarray,
              skip_factor: int | None = None) -> None:
    # per-factor check rather than gibbs_weight: immune to underflow and
    # able to exempt a pending factor the configuration need not satisfy
    for j, (tup, table) in enumerate(g.factors):
        if j == skip_factor:
            continue
        if table.value([int(sigma[v]) for v in tup]) <= 0.0:
            raise InvalidInput("input configuration has zero Gibbs weight")


def switch_run(g: FactorGraph, sigma, eta: Mapping[int, int],
               kappa: Mapping[int, int], rng) -> ProcessOutcome:
    """Single-disagreement frontier process without cycle handling."""
    sigma = _total_config(g, sigma)
    kappa = _check_boundary_pair(g, sigma, eta, kappa, max_disagreements=1)
    _feasible(g, sigma)
    res = _engine(g, sigma, kappa, _RngPolicy(rng))
    return _outcome(g, sigma, res)


def rswitch_run(g: FactorGraph, sigma, eta: Mapping[int, int],
                kappa: Mapping[int, int], census: CycleCensus, rng
                ) -> ProcessOutcome:
    """switch_run plus the deterministic short-cycle sweep rule."""
    sigma = _total_config(g, sigma)
    kappa = _check_boundary_pair(g, sigma, eta, kappa, max_disagreements=1)
    _feasible(g, sigma)
    res = _engine(g, sigma, kappa, _RngPolicy(rng), census=census)
    return _outcome(g, sigma, res)


def mswitch_run(g: FactorGraph, sigma, eta: Mapping[int, int],
                kappa: Mapping[int, int], rng,
                census: CycleCensus | None = None) -> ProcessOutcome:
    """Concurrent growth from any number of initial disagreements."""
    sigma = _total_config(g, sigma)
    kappa = _check_boundary_pair(g, sigma, eta, kappa, max_disagreements=None)
    _feasible(g, sigma)
    res = _engine(g, sigma, kappa, _RngPolicy(rng), census=census)
    return _outcome(g, sigma, res)


def _cycleswitch_raw(g: FactorGraph, sigma: np.ndarray,
                     kappa: Mapping[int, int], h: HSubgraph, rng,
                     census: CycleCensus | None,
                     active_mask: np.ndarray | None,
                     mode: str) -> _RunResult:
    """Shared cycle-step body; sigma validated, kappa on h.boundary_nodes.

    Resamples the off-boundary cycle variables given the NEW boundary
    value, then pushes the induced disagreements through the graph with
    the cycle's own factors masked out.
    """
    try:
        xi_vals = sample_Xi_given_boundary(h, kappa, rng)
    except ZeroMeasureCondition as exc:
        raise InfeasibleBoundary(str(exc)) from exc

    tau_h = dict(kappa)
    tau_h.update(xi_vals)

    # propagation runs on the graph with every cycle factor removed; the
    # closing factor may sit one past the end when g predates it
    mask = (np.ones(g.m, dtype=bool) if active_mask is None
            else active_mask.copy())
    for fi in h.cycle.factors:
        if fi < g.m:
            mask[fi] = False

    if mode == "concurrent":
        return _engine(g, sigma, tau_h, _RngPolicy(rng), census=census,
                       active_mask=mask)
    if mode != "sequential":
        raise InvalidInput(f"unknown cycleswitch mode {mode!r}")

    flips = sorted(v for v, s in tau_h.items() if s != int(sigma[v]))
    current = sigma.copy()
    assignments = dict(tau_h)
    vfactors: set[int] = set()
    dis: set[int] = set()
    pairs: dict[int, tuple[int, int]] = {}
    boundary = {v: int(sigma[v]) for v in tau_h}
    for v in flips:
        boundary[v] = tau_h[v]
        res = _engine(g, current, dict(boundary), _RngPolicy(rng),
                      census=census, active_mask=mask)
        vfactors |= res.visited_factors
        dis |= res.disagreements
        pairs.update(res.dis_pair)
        assignments.update(res.assignments)
        if res.status == "fail":
            return _RunResult("fail", res.fail_reason, assignments, dis,
                              vfactors, pairs)
        for x, s in res.assignments.items():
            current[x] = s
    return _RunResult("ok", None, assignments, dis, vfactors, pairs)


def cycleswitch_run(g: FactorGraph, sigma, eta: Mapping[int, int],
                    kappa: Mapping[int, int], h: HSubgraph, rng,
                    census: CycleCensus | None = None,
                    mode: str = "concurrent") -> ProcessOutcome:
    """Boundary move across a closing short cycle.

    eta and kappa live on the closing factor's tuple and may differ only
    at its two cycle nodes. Disagreements propagate through the graph with
    every cycle factor removed (g may include or omit the closing factor;
    sigma need not satisfy it). A census, when given, must describe that
    reduced graph.
    """
    sigma = _total_config(g, sigma)
    kappa = _check_boundary_pair(g, sigma, eta, kappa, max_disagreements=None)
    if set(kappa) != set(h.boundary_nodes):
        raise InvalidInput("eta and kappa must cover the closing tuple")
    for v in kappa:
        if eta[v] != kappa[v] and v not in h.m_nodes:
            raise InvalidInput(
                "eta and kappa may differ only on the cycle pair")
    _feasible(g, sigma, skip_factor=h.closing_factor)
    res = _cycleswitch_raw(g, sigma, kappa, h, rng, census, None, mode)
    return _outcome(g, sigma, res)


def rupdate_run(g: FactorGraph, sigma, eta: Mapping[int, int],
                kappa: Mapping[int, int], census: CycleCensus | None, rng,
                h: HSubgraph | None = None,
                bar_census: CycleCensus | None = None,
                mode: str = "concurrent",
                pending_factor: int | None = None) -> ProcessOutcome:
    """Boundary update: fix one non-cycle disagreement at a time, then the
    cycle pair in a single cycle step.

    eta and kappa live on the tuple of a factor the propagation graph does
    not contain yet. When g nevertheless includes that factor, name it via
    pending_factor (or via h, whose closing factor is the pending one) and
    it is ignored throughout: sigma need not satisfy it and disagreements
    never propagate through it. Disagreements outside the cycle pair are
    chained in ascending variable order through single-disagreement runs;
    a disagreement on the pair finishes with a cycle step (h must then be
    given). The first failing subprocess aborts the run.
    """
    sigma = _total_config(g, sigma)
    kappa = _check_boundary_pair(g, sigma, eta, kappa, max_disagreements=None)
    if pending_factor is None and h is not None:
        pending_factor = h.closing_factor
    _feasible(g, sigma, skip_factor=pending_factor)
    eta = {int(v): int(s) for v, s in eta.items()}
    m_nodes = set(h.m_nodes) if h is not None else set()
    plain = sorted(v for v in kappa
                   if eta[v] != kappa[v] and v not in m_nodes)
    m_diff = sorted(v for v in kappa
                    if eta[v] != kappa[v] and v in m_nodes)
    if m_diff and h is None:
        raise InvalidInput("cycle-pair disagreement needs the cycle subgraph")

    if m_diff and set(kappa) != set(h.boundary_nodes):
        raise InvalidInput("eta and kappa must cover the closing tuple")

    chain_mask = None
    if pending_factor is not None and 0 <= pending_factor < g.m:
        chain_mask = np.ones(g.m, dtype=bool)
        chain_mask[pending_factor] = False

    current = sigma.copy()
    assignments: dict[int, int] = {}
    visited_factors: set[int] = set()
    dis: set[int] = set()
    pairs: dict[int, tuple[int, int]] = {}
    boundary = dict(eta)
    for v in plain:
        boundary[v] = kappa[v]
        res = _engine(g, current, dict(boundary), _RngPolicy(rng),
                      census=census, active_mask=chain_mask)
        visited_factors |= res.visited_factors
        dis |= res.disagreements
        pairs.update(res.dis_pair)
        assignments.update(res.assignments)
        if res.status == "fail":
            return _outcome(g, sigma, _RunResult(
                "fail", res.fail_reason, assignments, dis, visited_factors,
                pairs))
        for x, s in res.assignments.items():
            current[x] = s

    if m_diff:
        res = _cycleswitch_raw(g, current, dict(kappa), h, rng, bar_census,
                               None, mode)
        visited_factors |= res.visited_factors
        dis |= res.disagreements
        pairs.update(res.dis_pair)
        assignments.update(res.assignments)
        if res.status == "fail":
            return _outcome(g, sigma, _RunResult(
                "fail", res.fail_reason, assignments, dis, visited_factors,
                pairs))
    return _outcome(g, sigma, _RunResult(
        "ok", None, assignments, dis, visited_factors, pairs))


# ---------------------------------------------------------------------------
# exact trajectory accounting


def transition_probability(g: FactorGraph, theta, xi, eta: Mapping[int, int],
                           kappa: Mapping[int, int], rule: str = "switch",
                           census: CycleCensus | None = None,
                           h: HSubgraph | None = None) -> float:
    """Exact probability that a run maps theta to xi.

    The FIFO rule makes the trajectory reaching xi unique, so the engine
    is replayed with every coin forced toward xi and the branch
    probabilities multiplied; deterministic cycle sweeps contribute factor
    one, and any inconsistency (or a forced failure) gives probability 0.
    """
    if rule not in ("switch", "rswitch", "mswitch", "cycleswitch"):
        raise InvalidInput(f"unknown rule {rule!r}")
    theta = _total_config(g, theta)
    xi = _total_config(g, xi)
    max_dis = {"switch": 1, "rswitch": 1}.get(rule)
    kappa = _check_boundary_pair(g, theta, eta, kappa,
                                 max_disagreements=max_dis)
    for v, s in kappa.items():
        if int(xi[v]) != s:
            raise InvalidInput("xi disagrees with kappa on the boundary")
    _feasible(g, theta,
              skip_factor=h.closing_factor if rule == "cycleswitch" and
              h is not None else None)
    if rule == "switch":
        census = None

    if rule == "cycleswitch":
        if h is None:
            raise InvalidInput("cycleswitch replay needs the cycle subgraph")
        for v in kappa:
            if eta[v] != kappa[v] and v not in h.m_nodes:
                raise InvalidInput(
                    "eta and kappa may differ only on the cycle pair")
        xi_target = {v: int(xi[v]) for v in h.xi_variables}
        p_resample = xi_probability(h, kappa, xi_target)
        if p_resample == 0.0:
            return 0.0
        tau_h = {v: int(xi[v]) for v in h.variables}
        mask = np.ones(g.m, dtype=bool)
        for fi in h.cycle.factors:
            if fi < g.m:
                mask[fi] = False
        policy = _XiPolicy(xi)
        try:
            res = _engine(g, theta, tau_h, policy, census=census,
                          active_mask=mask)
        except _Unreachable:
            return 0.0
        if res.status != "ok":
            return 0.0
        final = theta.copy()
        for v, s in res.assignments.items():
            final[v] = s
        if not np.array_equal(final, xi):
            return 0.0
        return p_resample * policy.prob

    policy = _XiPolicy(xi)
    try:
        res = _engine(g, theta, kappa, policy, census=census)
    except _Unreachable:
        return 0.0
    if res.status != "ok":
        return 0.0
    final = theta.copy()
    for v, s in res.assignments.items():
        final[v] = s
    if not np.array_equal(final, xi):
        return 0.0
    return policy.prob


def exact_output_law(g: FactorGraph, sigma, eta: Mapping[int, int],
                     kappa: Mapping[int, int], rule: str = "switch",
                     census: CycleCensus | None = None) -> ExactDistribution:
    """Full output law of one run: configurations plus the fail atom.

    Walks the binary trajectory tree, branching only at genuine coin
    flips, and accumulates leaf probabilities. Intended for small
    instances; the number of leaves is capped.
    """
    sigma = _total_config(g, sigma)
    max_dis = 1 if rule in ("switch", "rswitch") else None
    kappa = _check_boundary_pair(g, sigma, eta, kappa,
                                 max_disagreements=max_dis)
    if rule == "switch":
        census = None
    elif rule not in ("rswitch", "mswitch"):
        raise InvalidInput(f"unknown rule {rule!r}")
    _feasible(g, sigma)

    law: dict = {}
    stack = [((), 1.0)]
    leaves = 0
    while stack:
        script, prob = stack.pop()
        policy = _ScriptPolicy(script)
        try:
            res = _engine(g, sigma, kappa, policy, census=census)
        except _ForkNeeded as fork:
            stack.append((script + (True,), prob * fork.q_beta))
            stack.append((script + (False,), prob * (1.0 - fork.q_beta)))
            continue
        leaves += 1
        if leaves > _LAW_CAP:
            raise SizeExceeded("trajectory tree too large to enumerate")
        if res.status == "fail":
            law[FAIL] = law.get(FAIL, 0.0) + prob
        else:
            final = sigma.copy()
            for v, s in res.assignments.items():
                final[v] = s
            key = config_key(final)
            law[key] = law.get(key, 0.0) + prob
    return ExactDistribution(range(g.n), law, normalize=False)
