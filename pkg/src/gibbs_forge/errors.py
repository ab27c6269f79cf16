"""Exception types shared across the package."""


class GibbsForgeError(Exception):
    """Base class for all package-specific errors."""


class SizeExceeded(GibbsForgeError):
    """Exact enumeration was requested beyond the q**n cap."""


class ZeroMass(GibbsForgeError):
    """A weight table or distribution has no positive mass."""


class ZeroMeasureCondition(GibbsForgeError):
    """A conditioning event has probability zero."""


class InvalidSpec(GibbsForgeError):
    """A model specification violates its family's constraints."""


class DomainError(GibbsForgeError):
    """A threshold formula was evaluated outside its domain."""


class InvalidSize(GibbsForgeError):
    """Instance-generation sizes are inconsistent (e.g. n < k)."""


class InvalidInput(GibbsForgeError):
    """Arguments to an update process violate its preconditions."""


class InfeasibleBoundary(GibbsForgeError):
    """A cycle-repair boundary value has zero conditional mass."""


class DegenerateH(GibbsForgeError):
    """The unicyclic subgraph's Gibbs measure has zero total mass."""


class NotInFamilyG(GibbsForgeError):
    """The input graph has two short cycles sharing a node."""


class Corrupt(GibbsForgeError):
    """An internal invariant failed (e.g. a zero denominator that the
    feasibility preconditions should have made impossible)."""


class EmptySampleSet(GibbsForgeError):
    """A TV estimate was requested over zero samples."""
