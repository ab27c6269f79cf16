"""Canonical symmetric weight families and their regime conditions.

Families: antiferromagnetic Potts (Ising is its q=2, zero-field case),
proper colouring (the zero-temperature Potts limit), not-all-equal clauses
with per-factor negation signs, and even-arity two-spin glass couplings with
Gaussian strengths.

Spin encoding for the two-spin families: index 0 is +1, index 1 is -1.

Two structural checks are exposed: invariance of a table under swapping any
two spin values everywhere (check_sym1) and constant single-coordinate row
sums (check_sym2). Both hold for every table these constructors emit.
"""
from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .core_model import WeightTable
from .errors import DomainError, InvalidInput, InvalidSpec, ZeroMass

FAMILIES = ("potts", "colouring", "ising", "nae_sat", "k_spin")

# CLI spellings accepted for each canonical family name.
_FAMILY_ALIASES = {
    "potts": "potts",
    "colouring": "colouring",
    "coloring": "colouring",
    "ising": "ising",
    "nae": "nae_sat",
    "nae_sat": "nae_sat",
    "naesat": "nae_sat",
    "kspin": "k_spin",
    "k_spin": "k_spin",
}


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    """Immutable description of one weight family at fixed parameters.

    beta is the inverse temperature where the family has one (None for the
    clause family, -inf for colourings). coupling_law applies to the
    two-spin-glass family only: "standard_gaussian" draws a fresh strength
    per factor, "fixed" uses j_value for every factor.
    """

    family: str
    q: int
    k: int
    beta: float | None = None
    coupling_law: str = "standard_gaussian"
    j_value: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")
        if self.q < 2:
            raise InvalidSpec("need at least two spins")
        if self.k < 2:
            raise InvalidSpec("arity must be at least 2")
        fam, beta = self.family, self.beta
        if fam == "colouring":
            if beta is not None and beta != -math.inf:
                raise InvalidSpec("colouring fixes beta at -inf")
            object.__setattr__(self, "beta", -math.inf)
        elif fam in ("potts", "ising"):
            if beta is None or math.isnan(beta):
                raise InvalidSpec(f"{fam} needs a beta")
            if beta > 0:
                raise InvalidSpec("only beta <= 0 is supported "
                                  "(ferromagnetic regimes are out of scope)")
            if fam == "ising" and self.q != 2:
                raise InvalidSpec("ising means q=2")
        elif fam == "nae_sat":
            if self.q != 2:
                raise InvalidSpec("clause variables are binary")
            if beta is not None:
                raise InvalidSpec("the clause family has no temperature")
        elif fam == "k_spin":
            if self.q != 2:
                raise InvalidSpec("two-spin couplings need q=2")
            if self.k % 2 != 0:
                raise InvalidSpec("two-spin couplings need even arity")
            if beta is None or not math.isfinite(beta):
                raise InvalidSpec("k_spin needs a finite beta")
            if self.coupling_law not in ("standard_gaussian", "fixed"):
                raise InvalidSpec(
                    f"unknown coupling law {self.coupling_law!r}")
            if self.coupling_law == "fixed" and self.j_value is None:
                raise InvalidSpec("fixed coupling law needs j_value")

    @property
    def has_random_weights(self) -> bool:
        return (self.family == "nae_sat"
                or (self.family == "k_spin"
                    and self.coupling_law == "standard_gaussian"))


def make_model_spec(family: str, q: int | None = None, k: int = 2,
                    beta=None, h=None, coupling_law: str = "standard_gaussian",
                    j_value: float | None = None) -> ModelSpec:
    """Build a ModelSpec from loosely typed CLI-style inputs.

    An external-field parameter is rejected outright: only the zero-field
    case keeps the single-node marginals uniform, so h must be 0 or absent.
    """
    fam = _FAMILY_ALIASES.get(str(family).strip().lower())
    if fam is None:
        raise InvalidSpec(f"unknown family {family!r}")
    if h not in (None, 0, 0.0):
        raise InvalidSpec("external fields break spin symmetry; h must be 0")
    if q is None:
        if fam in ("ising", "nae_sat", "k_spin"):
            q = 2
        else:
            raise InvalidSpec(f"{fam} needs an explicit q")
    if isinstance(beta, str):
        beta = parse_beta(beta)
    return ModelSpec(fam, int(q), int(k), beta,
                     coupling_law=coupling_law, j_value=j_value)


def parse_beta(text: str) -> float:
    t = text.strip().lower()
    if t in ("-inf", "-infinity"):
        return -math.inf
    try:
        return float(t)
    except ValueError as exc:
        raise InvalidSpec(f"cannot parse beta {text!r}") from exc


def model_spec_from_config(text: str) -> ModelSpec:
    """Parse `key=value` lines (hash comments allowed) into a ModelSpec."""
    kv = {}
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise InvalidSpec(f"config line {ln!r} is not key=value")
        key, val = (part.strip() for part in ln.split("=", 1))
        kv[key] = val
    if "family" not in kv:
        raise InvalidSpec("config must set family")
    return make_model_spec(
        kv["family"],
        q=int(kv["q"]) if "q" in kv else None,
        k=int(kv.get("k", 2)),
        beta=kv.get("beta"),
        h=float(kv["h"]) if "h" in kv else None,
        coupling_law=kv.get("coupling_law", "standard_gaussian"),
        j_value=float(kv["j_value"]) if "j_value" in kv else None,
    )


# ---------------------------------------------------------------------------
# Table constructors.
# ---------------------------------------------------------------------------

def _all_tuples(q: int, k: int) -> np.ndarray:
    codes = np.arange(q**k, dtype=np.int64)
    powers = q ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return (codes[:, None] // powers[None, :]) % q


def potts_values(q: int, k: int, beta: float) -> np.ndarray:
    tup = _all_tuples(q, k)
    all_equal = np.all(tup == tup[:, :1], axis=1)
    vals = np.ones(q**k, dtype=np.float64)
    vals[all_equal] = math.exp(beta) if beta != -math.inf else 0.0
    return vals


def nae_values(k: int, signs) -> np.ndarray:
    """1 unless every literal agrees, where literal i reads the spin through
    the negation flag signs[i]."""
    signs = tuple(bool(s) for s in signs)
    if len(signs) != k:
        raise InvalidInput(f"need {k} negation flags")
    tup = _all_tuples(2, k)
    lit = tup ^ np.array(signs, dtype=np.int64)[None, :]
    all_equal = np.all(lit == lit[:, :1], axis=1)
    vals = np.ones(2**k, dtype=np.float64)
    vals[all_equal] = 0.0
    return vals


def k_spin_values(k: int, beta: float, j: float) -> np.ndarray:
    tup = _all_tuples(2, k)
    signs = np.where(tup == 0, 1.0, -1.0).prod(axis=1)
    return 1.0 + math.tanh(beta * j) * signs


def draw_params(spec: ModelSpec, rng) -> dict:
    """Sample the per-factor randomness (negation flags or coupling)."""
    if spec.family == "nae_sat":
        return {"signs": tuple(bool(b) for b in
                               rng.integers(0, 2, size=spec.k))}
    if spec.family == "k_spin":
        if spec.coupling_law == "fixed":
            return {"j": float(spec.j_value)}
        return {"j": float(rng.standard_normal())}
    return {}


def weight_from_params(spec: ModelSpec, params: dict) -> WeightTable:
    if spec.family in ("potts", "ising", "colouring"):
        vals = potts_values(spec.q, spec.k, spec.beta)
    elif spec.family == "nae_sat":
        vals = nae_values(spec.k, params["signs"])
    else:
        vals = k_spin_values(spec.k, spec.beta, params["j"])
    return WeightTable(spec.q, spec.k, vals)


def make_weight(spec: ModelSpec, rng=None):
    """One factor weight table plus the parameters that produced it."""
    if spec.has_random_weights and rng is None:
        raise InvalidInput("this family draws per-factor randomness; "
                           "pass an rng")
    params = draw_params(spec, rng)
    return weight_from_params(spec, params), params


# ---------------------------------------------------------------------------
# Symmetry checks.
# ---------------------------------------------------------------------------

def check_sym1(w: WeightTable, tol: float = 1e-12) -> bool:
    """True iff swapping any two spin values throughout leaves the table
    unchanged."""
    tup = _all_tuples(w.q, w.k)
    powers = w.q ** np.arange(w.k - 1, -1, -1, dtype=np.int64)
    for a in range(w.q):
        for b in range(a + 1, w.q):
            perm = np.arange(w.q, dtype=np.int64)
            perm[a], perm[b] = b, a
            mapped = (perm[tup] * powers[None, :]).sum(axis=1)
            if not np.allclose(w.values, w.values[mapped],
                               rtol=0.0, atol=tol):
                return False
    return True


def family_chi(spec: ModelSpec) -> float:
    """Mean table mass per entry, averaged over the family's randomness."""
    q, k = spec.q, spec.k
    if spec.family in ("potts", "ising"):
        return (q**k - q + q * math.exp(spec.beta)) / q**k
    if spec.family == "colouring":
        return (q**k - q) / q**k
    if spec.family == "nae_sat":
        return (2**k - 2) / 2**k
    return 1.0   # two-spin glass: the odd part integrates to zero


def check_sym2(w: WeightTable, chi: float, tol: float = 1e-12) -> bool:
    """True iff every single-coordinate row sum equals q**(k-1) * chi."""
    expected = w.q ** (w.k - 1) * chi
    return bool(np.allclose(w.row_sums(), expected, rtol=tol, atol=tol))


# ---------------------------------------------------------------------------
# Disagreement rate and the sampler-admissibility slack.
# ---------------------------------------------------------------------------

def max_pair_conditional_tv(w: WeightTable) -> float:
    """Worst total-variation gap between the table's conditional laws on
    coordinates 2..k as the first coordinate ranges over spin pairs."""
    arr = w.as_array().reshape(w.q, -1)
    sums = arr.sum(axis=1)
    if np.any(sums <= 0):
        raise ZeroMass("a first-coordinate row has zero mass")
    cond = arr / sums[:, None]
    best = 0.0
    for a in range(w.q):
        for b in range(a + 1, w.q):
            best = max(best, 0.5 * float(np.abs(cond[a] - cond[b]).sum()))
    return best


def fk(x: float, k: int) -> float:
    """|e^x - e^-x| / ((2^(k-1) - 1) e^-x + e^x), evaluated stably."""
    if k < 2:
        raise InvalidInput("arity must be at least 2")
    c = 2 ** (k - 1) - 1
    ax = abs(x)
    # divide through by e^|x|; exact at x=0
    e = math.exp(-2.0 * ax)
    if x >= 0:
        return (1.0 - e) / (c * e + 1.0)
    return (1.0 - e) / (c + e)


def fk_gauss_hermite(beta: float, k: int, points: int = 64) -> float:
    """E[fk(beta * J, k)] for a standard Gaussian J, by quadrature."""
    nodes, weights = np.polynomial.hermite.hermgauss(points)
    vals = np.array([fk(beta * math.sqrt(2.0) * x, k) for x in nodes])
    return float((weights * vals).sum() / math.sqrt(math.pi))


def fk_monte_carlo(beta: float, k: int, budget: int, rng):
    """Monte Carlo E[fk(beta * J, k)] over fresh standard-Gaussian draws.

    Returns (mean, standard_error); an independent route from the
    deterministic quadrature in fk_gauss_hermite.
    """
    if budget < 2:
        raise InvalidInput("need at least two draws")
    js = rng.standard_normal(budget)
    vals = np.array([fk(beta * float(j), k) for j in js])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(budget))
    return mean, se


def disagreement_rate(spec: ModelSpec, mc_budget: int | None = None,
                      rng=None) -> float:
    """Admissibility rate of one factor for the degree condition.

    For families with deterministic tables this is the exact worst-pair
    conditional total variation of the single table (the negation flags of
    the clause family do not move it, so any flag choice serves; a fixed
    coupling gives |tanh(beta*J)| exactly). For Gaussian couplings the
    admissibility condition is stated through fk, whose value at arity
    above 2 sits below the realized table's conditional total variation;
    the rate returned is E[fk(beta*J, k)], by 64-point quadrature or by
    Monte Carlo when mc_budget is given. Per-table total variation stays
    available through max_pair_conditional_tv.
    """
    if spec.family in ("potts", "ising", "colouring"):
        return max_pair_conditional_tv(
            WeightTable(spec.q, spec.k, potts_values(spec.q, spec.k,
                                                     spec.beta)))
    if spec.family == "nae_sat":
        return max_pair_conditional_tv(
            WeightTable(2, spec.k, nae_values(spec.k, (False,) * spec.k)))
    if spec.coupling_law == "fixed":
        return max_pair_conditional_tv(
            WeightTable(2, spec.k,
                        k_spin_values(spec.k, spec.beta, spec.j_value)))
    if mc_budget:
        if rng is None:
            raise InvalidInput("Monte Carlo integration needs an rng")
        return fk_monte_carlo(spec.beta, spec.k, mc_budget, rng)[0]
    return fk_gauss_hermite(spec.beta, spec.k)


@dataclasses.dataclass(frozen=True)
class SlackReport:
    """Disagreement rate against the 1/(d(k-1)) admissibility bound.

    slack is the delta with rate = (1 - delta) * bound; the condition holds
    exactly when slack is positive.
    """

    rate: float
    bound: float
    slack: float
    holds: bool

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def b1_slack(spec: ModelSpec, d: float, mc_budget: int | None = None,
             rng=None) -> SlackReport:
    """Slack of the disagreement-rate condition at expected degree d."""
    if d < 1.0 / (spec.k - 1):
        raise InvalidInput("d below 1/(k-1) is outside the regime")
    rate = disagreement_rate(spec, mc_budget=mc_budget, rng=rng)
    bound = 1.0 / (d * (spec.k - 1))
    slack = 1.0 - rate / bound
    return SlackReport(rate=rate, bound=bound, slack=slack,
                       holds=bool(slack > 0))


# ---------------------------------------------------------------------------
# Critical inverse temperatures.
# ---------------------------------------------------------------------------

def threshold_beta(kind: str, delta: float, k: int,
                   q: int | None = None) -> float:
    """log((delta*(k-1) - q**(k-1)) / (delta*(k-1))), with q=2 for ising."""
    kind = kind.strip().lower()
    if kind == "ising":
        q = 2
    elif kind == "potts":
        if q is None:
            raise InvalidInput("potts threshold needs q")
    else:
        raise InvalidInput(f"unknown threshold kind {kind!r}")
    dk = delta * (k - 1)
    arg = (dk - q ** (k - 1)) / dk
    if arg <= 0:
        raise DomainError(
            f"threshold undefined: delta*(k-1)={dk} must exceed "
            f"q**(k-1)={q ** (k - 1)}")
    return math.log(arg)


def closed_form_rate(spec: ModelSpec) -> float:
    """Independent closed forms for the disagreement rate, where known."""
    q, k = spec.q, spec.k
    if spec.family == "colouring":
        return 1.0 / (q ** (k - 1) - 1)
    if spec.family in ("potts", "ising"):
        eb = math.exp(spec.beta)
        return (1.0 - eb) / (q ** (k - 1) - 1 + eb)
    if spec.family == "nae_sat":
        return 1.0 / (2 ** (k - 1) - 1)
    raise InvalidInput("no closed form for random couplings")
