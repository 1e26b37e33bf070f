"""Reason-based governor: defeasible moral inference, temporal guard
monitors, and advisor-driven theory revision for contained agents."""

from .reasons import (  # noqa: F401
    Const, Default, FactBase, GroundedDefault, GroundedModel, Justification,
    MatHead, PermissibleSet, PriorityCycleError, PriorityRelation, ReasonAtom,
    ReasonTheory, Var, add_default, add_priority, entails, ground_theory,
    permissible_mats,
)
from .ltlf import (  # noqa: F401
    ConflictOracle, Label, MatDefinition, Monitor, Prop, evaluate,
    instantiate, progress, step_monitor,
)
from .governor import (  # noqa: F401
    ContainmentBreach, DmmProposal, EpisodeRecord, Feedback, GuardVerdict,
    MmState, Observation, Session, TheoryRevision, accordance_confidence,
    mm_step, process_feedback,
)

__version__ = "0.1.0"
