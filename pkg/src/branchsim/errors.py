"""Exception types shared across the package."""


class BranchSimError(Exception):
    """Base class for all branchsim errors."""


class InvalidSeed(BranchSimError):
    """Seed cell index or value outside the simulator's domain."""


class UnstableParams(BranchSimError):
    """Parameter set violates the explicit-scheme stability bounds."""


class NumericFault(BranchSimError):
    """A NaN appeared in simulator state; never stored."""


class OutOfOrderAppend(BranchSimError):
    """Append did not continue the segment's current end step."""


class StepNotStored(BranchSimError):
    """Requested step lies outside the stored window."""


class CorruptStore(BranchSimError):
    """Store container failed magic/version/integrity checks."""


class NotYetSimulated(BranchSimError):
    """Branch or window refers past the simulated end of a node."""


class InvalidAnnotation(BranchSimError):
    """Annotation kind unknown or conditional text missing."""


class InvalidObservation(BranchSimError):
    """Observation region is malformed or out of grid bounds."""


class InvalidClassCount(BranchSimError):
    """Equivalence class counts must be at least 1."""


class UnknownNode(BranchSimError):
    """Node id not present in the tree, forest, or ledger."""


class TreeIncomplete(BranchSimError):
    """A savings report needs every terminal scenario complete or reused."""


class CorruptLineage(BranchSimError):
    """Reconstructed branch-start state does not match the recorded digest."""


class InvalidProbe(BranchSimError):
    """Probe coordinates outside the grid."""


class InvalidRange(BranchSimError):
    """Step range is inverted or empty where a span is required."""


class InvalidWorkerCount(BranchSimError):
    """Worker pools need at least one worker."""
