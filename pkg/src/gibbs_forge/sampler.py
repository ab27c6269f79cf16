"""Edge-insertion samplers that assemble a Gibbs draw one factor at a time.

A run inserts the factors in uniformly random order. Each step draws the
incoming factor's neighbourhood from its local measure, or from the exact
cycle law when that factor completes a short cycle, then reconciles the
rest of the configuration through the frontier processes while the not yet
inserted factors stay masked out. The whole graph is kept as one immutable
object; prefixes exist only as a boolean activity mask, so a step costs
propagation work rather than graph-rebuild work.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import FactorGraph
from .errors import InvalidInput, NotInFamilyG
from .models import ModelSpec
from .random_instances import CycleCensus, cycle_census
from .unicyclic_dp import HSubgraph, build_h_subgraph, sample_boundary_of_H
from .update_processes import (
    ProcessOutcome,
    _cycleswitch_raw,
    _engine,
    _RngPolicy,
)


@dataclass(frozen=True)
class EdgeSequence:
    """Random insertion order plus the per-step cycle bookkeeping.

    order[j] is the factor inserted at step j. closing[j] is the opened
    subgraph of the short cycle that this insertion completes, or None;
    within one cycle the completing factor is the one inserted last.
    """

    order: tuple[int, ...]
    closing: tuple[HSubgraph | None, ...]
    census: CycleCensus | None


def _default_census(g: FactorGraph) -> CycleCensus:
    d = g.m * g.k / g.n
    if g.m == 0 or d * g.k <= 1.0:
        # threshold formula degenerates; such graphs carry no short cycles
        return CycleCensus(threshold=0, short_cycles=(), in_family_G=True)
    return cycle_census(g, d, g.k)


def build_sequence(g: FactorGraph, rng,
                   census: CycleCensus | None = None) -> EdgeSequence:
    if census is None:
        census = _default_census(g)
    order = tuple(int(j) for j in rng.permutation(g.m))
    pos = {fi: j for j, fi in enumerate(order)}
    closing: list[HSubgraph | None] = [None] * g.m
    for cyc in census.short_cycles:
        close_f = max(cyc.factors, key=pos.__getitem__)
        closing[pos[close_f]] = build_h_subgraph(g, cyc, close_f)
    return EdgeSequence(order, tuple(closing), census)


def _check_spec(g: FactorGraph, spec: ModelSpec | None) -> None:
    # None skips the check: graphs loaded from files carry their own tables
    if spec is not None and (spec.q != g.q or spec.k != g.k):
        raise InvalidInput("model spec and graph disagree on q or k")


def _edge_draw(table, rng, cache) -> tuple[int, ...]:
    """One exact draw from the factor's normalized local measure."""
    ent = cache.get(id(table))
    if ent is None:
        cum = np.cumsum(table.values)
        total = float(cum[-1])
        strides = [table.q ** p for p in range(table.k - 1, -1, -1)]
        ent = (cum, total, strides)
        cache[id(table)] = ent
    cum, total, strides = ent
    flat = int(np.searchsorted(cum, rng.random() * total, side="right"))
    spins = []
    for stride in strides:
        spins.append(flat // stride)
        flat %= stride
    return tuple(spins)


def _reconcile(g, sigma, tup, kappa, h, census, active, rng, dis_all):
    """Move sigma's restriction to tup from its current values to kappa.

    Runs the ascending chain of single flips for the nodes outside the
    closing pair, then one cycle step when the closing pair changed.
    Mutates sigma on success of each stage; returns the failing run or
    None. Mirrors the public chained-update operation on the prefix graph
    that `active` selects.
    """
    m_nodes = h.m_nodes if h is not None else ()
    boundary = {v: int(sigma[v]) for v in tup}
    plain = sorted(v for v in tup
                   if v not in m_nodes and kappa[v] != boundary[v])
    m_diff = any(kappa[v] != boundary[v] for v in m_nodes)
    for z in plain:
        boundary[z] = kappa[z]
        res = _engine(g, sigma, dict(boundary), _RngPolicy(rng),
                      census=census, active_mask=active)
        dis_all.update(res.disagreements)
        if res.status == "fail":
            return res
        for x, s in res.assignments.items():
            sigma[x] = s
    if m_diff:
        res = _cycleswitch_raw(g, sigma, dict(kappa), h, rng,
                               census, active, "concurrent")
        dis_all.update(res.disagreements)
        if res.status == "fail":
            return res
        for x, s in res.assignments.items():
            sigma[x] = s
    return None


def sample_once(g: FactorGraph, spec: ModelSpec, rng, *,
                variant: str = "rsampler",
                census: CycleCensus | None = None,
                sequence: EdgeSequence | None = None
                ) -> tuple[ProcessOutcome, int]:
    """One full assembly run; returns (outcome, completed step count)."""
    _check_spec(g, spec)
    if variant not in ("rsampler", "fixsampler"):
        raise InvalidInput(f"unknown sampler variant {variant!r}")
    use_r = variant == "rsampler"

    if use_r:
        if census is None:
            census = sequence.census if sequence is not None else None
        if census is None:
            census = _default_census(g)
        if not census.in_family_G:
            raise NotInFamilyG(
                "short cycles are not pairwise node-disjoint")
    if sequence is None:
        sequence = build_sequence(g, rng, census=census)
    elif len(sequence.order) != g.m:
        raise InvalidInput("sequence does not match the graph")

    sigma = rng.integers(0, g.q, size=g.n).astype(np.int64)
    sigma0 = sigma.copy()
    active = np.zeros(g.m, dtype=bool)
    eng_census = census if use_r else None
    cache: dict = {}
    dis_all: set[int] = set()

    for j, fi in enumerate(sequence.order):
        tup, table = g.factors[fi]
        h = sequence.closing[j] if use_r else None
        if h is not None:
            kappa = sample_boundary_of_H(h, rng)
        else:
            kappa = dict(zip(tup, _edge_draw(table, rng, cache)))
        res = _reconcile(g, sigma, tup, kappa, h, eng_census, active,
                         rng, dis_all)
        if res is not None:
            return (
                ProcessOutcome(
                    status="fail",
                    config=None,
                    fail_reason=res.fail_reason,
                    visited=frozenset(range(g.n)),
                    visited_factors=frozenset(
                        int(f) for f in sequence.order[:j]),
                    disagreements=frozenset(dis_all),
                    changes={},
                ),
                j,
            )
        active[fi] = True

    cfg = sigma.copy()
    cfg.setflags(write=False)
    changed = np.nonzero(sigma != sigma0)[0]
    return (
        ProcessOutcome(
            status="ok",
            config=cfg,
            fail_reason=None,
            visited=frozenset(range(g.n)),
            visited_factors=frozenset(range(g.m)),
            disagreements=frozenset(dis_all),
            changes={int(v): int(sigma[v]) for v in changed},
        ),
        g.m,
    )


def rsampler_run(g: FactorGraph, spec: ModelSpec, rng, *,
                 census: CycleCensus | None = None,
                 sequence: EdgeSequence | None = None) -> ProcessOutcome:
    """Full sampler: exact cycle-law draws plus sweep-aware propagation.

    Raises NotInFamilyG when the graph's short cycles overlap; subprocess
    fails (frontier collision, cycle conflict) come back as fail outcomes.
    """
    out, _ = sample_once(g, spec, rng, variant="rsampler", census=census,
                         sequence=sequence)
    return out


def fixsampler_run(g: FactorGraph, spec: ModelSpec, rng, *,
                   sequence: EdgeSequence | None = None) -> ProcessOutcome:
    """High-girth variant: plain local-measure draws and plain switches.

    No family membership check and no cycle machinery; on graphs with
    short cycles it simply fails more often.
    """
    out, _ = sample_once(g, spec, rng, variant="fixsampler",
                         sequence=sequence)
    return out
