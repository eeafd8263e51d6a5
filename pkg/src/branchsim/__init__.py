"""branchsim: branching simulation engine with checkpointed trajectory trees,
digest-keyed suffix reuse, dirty-set incremental stepping, and space-time
probes over stored runs."""

from .branch_engine import Engine, ReflectStats, RunRequest, SuffixKey
from .cost_model import (
    BranchAdvice,
    CostLedger,
    SavingsReport,
    savings_report,
    theorem71_no_gain,
    theorem72_advice,
)
from .equivalence import (
    EquivalenceClass,
    ObservationSpec,
    TrajectoryDigest,
    observe,
    partition_classes,
    trajectory_digest,
)
from .errors import BranchSimError
from .probe import Frame, FrameDelta, ProbeQuery, extract_frame, frame_deltas, sample_point
from .scenario_tree import Annotation, Forest, ScenarioNode, ScenarioTree
from .sim_core import (
    FieldState,
    MaxcaParams,
    SimulatorSpec,
    VesselgridParams,
    canonical_bytes,
    init_state,
    step_full,
    step_incremental,
)
from .snapshot_store import Digest, Store, create_store, digest_state, open_store

__version__ = "0.1.0"
