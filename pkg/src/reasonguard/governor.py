"""Three-stage governed decision pipeline with advisor feedback.

Each step: the moral module grounds its theory on the interpreted
observation and derives the permissible MAT set; the decision module
proposes a primitive action; the guard progresses the permissible
monitors against the predicted label and rejects proposals that would
kill every obligation; accepted actions execute and an advisor may
criticize the step, triggering a theory revision.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Protocol, Sequence

from . import ltlf
from .ltlf import (
    ConflictOracle, Label, MatDefinition, Monitor, finalize_monitor,
    instantiate, step_monitor,
)
from .reasons import (
    Const, Default, FactBase, Justification, MatHead, PermissibleSet,
    PriorityCycleError, ReasonAtom, ReasonExpr, ReasonTheory, Var,
    add_default, add_priority, expr_atoms, ground_theory, permissible_mats,
    substitute_expr,
)


class GovernorError(Exception):
    pass


class InterpretationError(GovernorError):
    """The observation interpreter cannot handle an observation."""


class ConfigurationError(GovernorError):
    """A MAT in the permissible set has no formula definition."""


class RevisionError(GovernorError):
    """Feedback could not be incorporated; the theory is unchanged."""


class ContainmentBreach(GovernorError):
    """No proposal, including the fallback, passed the guard."""


# ---------------------------------------------------------------------------
# Observations and fact extraction


@dataclass(frozen=True)
class Observation:
    step: int
    key: str
    text: str = ""

    def digest(self) -> str:
        return "%s: %s" % (self.key, self.text) if self.text else self.key


class ObservationInterpreter(Protocol):
    def interpret(self, obs: Observation) -> FactBase: ...


@dataclass(frozen=True)
class TableInterpreter:
    """Deterministic pattern table: observation key -> emitted ground facts."""

    table: Mapping[str, tuple[ReasonAtom, ...]]
    strict: bool = True

    def interpret(self, obs: Observation) -> FactBase:
        if obs.key not in self.table:
            if self.strict:
                raise InterpretationError("no interpretation for observation %r" % obs.key)
            return FactBase()
        return FactBase(frozenset(self.table[obs.key]))


# ---------------------------------------------------------------------------
# Module states and wire types


@dataclass(frozen=True)
class MmState:
    theory: ReasonTheory
    interpreter: ObservationInterpreter
    conflict_oracle: ConflictOracle
    mat_definitions: Mapping[str, MatDefinition]
    priority_over_all_triggered: bool = False


@dataclass(frozen=True)
class DmmProposal:
    action: str
    declared_target: Optional[MatHead] = None
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.confidence is not None and self.declared_target is None:
            raise GovernorError("confidence requires a declared target")


ACCEPT, REJECT = "accept", "reject"


@dataclass(frozen=True)
class GuardVerdict:
    kind: str
    action: Optional[str] = None  # accepted action
    reason: Optional[str] = None  # rejection reason

    @classmethod
    def accept(cls, action: str) -> "GuardVerdict":
        return cls(ACCEPT, action=action)

    @classmethod
    def reject(cls, reason: str) -> "GuardVerdict":
        return cls(REJECT, reason=reason)


@dataclass(frozen=True)
class Feedback:
    criticized_action: str
    expected_mat: MatHead
    reason: ReasonExpr
    step: int


MORAL_MODULE, EXECUTOR_SIDE, NO_VIOLATION = "moral_module", "executor_side", "no_violation"


@dataclass(frozen=True)
class TheoryRevision:
    blame: str
    added_default: Optional[Default] = None
    added_priorities: tuple[tuple[str, str], ...] = ()  # (lower, higher)
    forwarded: bool = False


@dataclass(frozen=True)
class EpisodeRecord:
    step: int
    observation: str
    facts: FactBase
    phi_perm: PermissibleSet
    justification: Justification
    proposals: tuple[DmmProposal, ...]
    verdicts: tuple[GuardVerdict, ...]
    executed: Optional[str]
    labels: Label
    feedback: Optional[Feedback] = None
    revision: Optional[TheoryRevision] = None


# ---------------------------------------------------------------------------
# Module steps


def mm_step(state: MmState, obs: Observation) -> tuple[PermissibleSet, Justification, FactBase]:
    facts = state.interpreter.interpret(obs)
    model = ground_theory(state.theory, facts)
    phi, justification = permissible_mats(model, state.conflict_oracle)
    return phi, justification, facts


class DMM(Protocol):
    def propose(self, obs: Observation, phi: PermissibleSet,
                justification: Justification) -> DmmProposal: ...


class Advisor(Protocol):
    def review(self, record: EpisodeRecord) -> Optional[Feedback]: ...


class Guard:
    """Holds live monitors for the permissible MATs across steps.

    Monitors are created when a MAT first enters the permissible set,
    progressed with each executed step's labels while it stays there, and
    retired when it leaves.
    """

    def __init__(self, mat_definitions: Mapping[str, MatDefinition], retries: int = 3):
        self.mat_definitions = mat_definitions
        self.retries = retries
        self.monitors: dict[MatHead, Monitor] = {}

    def sync_phi(self, phi: PermissibleSet) -> None:
        if phi.is_unconstrained:
            self.monitors = {}
            return
        keep: dict[MatHead, Monitor] = {}
        for mat in phi.mats:
            existing = self.monitors.get(mat)
            if existing is not None:
                keep[mat] = existing
            else:
                defn = self.mat_definitions.get(mat.name)
                if defn is None:
                    raise ConfigurationError("no MAT definition for %s" % mat)
                keep[mat] = Monitor.start(mat, instantiate(defn, mat))
        self.monitors = keep

    def check(self, proposal: DmmProposal, phi: PermissibleSet,
              predicted_label: Label, predicted_terminal: bool = False) -> GuardVerdict:
        if phi.is_unconstrained:
            return GuardVerdict.accept(proposal.action)
        violated: list[str] = []
        survives = False
        for mat in phi.mats:
            monitor = step_monitor(self.monitors[mat], predicted_label,
                                   last=predicted_terminal)
            if monitor.status == ltlf.VIOLATED:
                violated.append(str(mat))
            else:
                survives = True
        if survives:
            return GuardVerdict.accept(proposal.action)
        return GuardVerdict.reject(
            "action %r would violate every permissible MAT monitor: %s"
            % (proposal.action, ", ".join(violated)))

    def commit(self, label: Label, terminal: bool = False) -> None:
        self.monitors = {
            mat: step_monitor(m, label, last=terminal)
            for mat, m in self.monitors.items()
        }


def dmm_step(dmm: DMM, obs: Observation, phi: PermissibleSet,
             justification: Justification) -> DmmProposal:
    return dmm.propose(obs, phi, justification)


def guard_step(guard: Guard, proposal: DmmProposal, phi: PermissibleSet,
               predicted_label: Label, predicted_terminal: bool = False) -> GuardVerdict:
    return guard.check(proposal, phi, predicted_label, predicted_terminal)


# ---------------------------------------------------------------------------
# Feedback processing


def _lift_feedback(reason: ReasonExpr, mat: MatHead) -> tuple[ReasonExpr, MatHead]:
    """Anti-unify shared constants of reason and MAT into fresh variables."""
    reason_consts = [a.name for atom in expr_atoms(reason)
                     for a in atom.args if isinstance(a, Const)]
    mat_consts = {a.name for a in mat.args if isinstance(a, Const)}
    fresh_names = itertools.chain(
        ("X", "Y", "Z"), ("X%d" % i for i in itertools.count(1)))
    mapping: dict[str, Var] = {}
    for name in reason_consts:
        if name in mat_consts and name not in mapping:
            mapping[name] = Var(next(fresh_names))

    def lift_expr(expr: ReasonExpr) -> ReasonExpr:
        if isinstance(expr, ReasonAtom):
            return ReasonAtom(expr.predicate, tuple(
                mapping.get(a.name, a) if isinstance(a, Const) else a
                for a in expr.args))
        return type(expr)(tuple(lift_expr(c) for c in expr.children))

    lifted_mat = MatHead(mat.name, tuple(
        mapping.get(a.name, a) if isinstance(a, Const) else a for a in mat.args))
    return lift_expr(reason), lifted_mat


def _next_rule_id(theory: ReasonTheory) -> str:
    existing = {d.id for d in theory.defaults}
    for i in itertools.count(1):
        candidate = "d%d" % i
        if candidate not in existing:
            return candidate
    raise AssertionError("unreachable")


def process_feedback(state: MmState, record: EpisodeRecord,
                     fb: Feedback) -> tuple[MmState, TheoryRevision]:
    """Assign blame and, on a moral-module gap, revise the theory.

    The revision is atomic: a priority cycle aborts it and surfaces a
    RevisionError with the theory untouched.
    """
    if fb.step != record.step:
        raise GovernorError("feedback step %d does not match record %d" % (fb.step, record.step))
    if not record.phi_perm.is_unconstrained and fb.expected_mat in record.phi_perm:
        return state, TheoryRevision(blame=EXECUTOR_SIDE, forwarded=True)

    lifted_reason, lifted_mat = _lift_feedback(fb.reason, fb.expected_mat)
    theory = state.theory
    new_default = Default(_next_rule_id(theory), lifted_reason, lifted_mat)
    theory, added = add_default(theory, new_default)
    if added:
        target_id = new_default.id
    else:
        target_id = next(d.id for d in theory.defaults if _same_shape(d, new_default))

    triggered_sources: list[str] = []
    for g in record.justification.triggered:
        if g.source_id in triggered_sources or g.source_id == target_id:
            continue
        if state.priority_over_all_triggered or state.conflict_oracle.conflict(
                g.conclusion, fb.expected_mat):
            triggered_sources.append(g.source_id)
    added_pairs: list[tuple[str, str]] = []
    try:
        for source_id in triggered_sources:
            theory, pair_added = add_priority(theory, source_id, target_id)
            if pair_added:
                added_pairs.append((source_id, target_id))
    except PriorityCycleError as exc:
        raise RevisionError(str(exc)) from exc

    revision = TheoryRevision(
        blame=MORAL_MODULE,
        added_default=new_default if added else None,
        added_priorities=tuple(added_pairs),
    )
    return replace(state, theory=theory), revision


def _same_shape(a: Default, b: Default) -> bool:
    from .reasons import alpha_equivalent
    return alpha_equivalent(a, b)


# ---------------------------------------------------------------------------
# Accordance confidence baseline


def accordance_confidence(state: MmState, proposal: DmmProposal, phi: PermissibleSet,
                          env, horizon: int, cap: int = 100000) -> float:
    """Fraction of exhaustively enumerated continuations (proposal first,
    then every action choice) under which some permissible monitor is not
    violated at the horizon."""
    if horizon < 1:
        raise GovernorError("horizon must be >= 1")
    if phi.is_unconstrained:
        return 1.0
    monitors = []
    for mat in phi.mats:
        defn = state.mat_definitions.get(mat.name)
        if defn is None:
            raise ConfigurationError("no MAT definition for %s" % mat)
        monitors.append(Monitor.start(mat, instantiate(defn, mat)))

    counter = {"leaves": 0, "ok": 0, "visits": 0}

    def walk(model, mons, depth: int, action: Optional[str]) -> None:
        counter["visits"] += 1
        if counter["visits"] > cap:
            raise GovernorError("branching cap exceeded in accordance estimation")
        _, label, terminal, _ = model.step(action)
        mons = [step_monitor(m, label, last=terminal) for m in mons]
        if depth >= horizon or terminal:
            counter["leaves"] += 1
            if any(m.status != ltlf.VIOLATED for m in mons):
                counter["ok"] += 1
            return
        for nxt in model.actions():
            walk(copy.deepcopy(model), mons, depth + 1, nxt)

    walk(copy.deepcopy(env), monitors, 1, proposal.action)
    return counter["ok"] / counter["leaves"] if counter["leaves"] else 1.0


# ---------------------------------------------------------------------------
# Session loop


@dataclass
class GuardConfig:
    retries: int = 3


class Session:
    """One governed episode: environment, moral module state, decision
    module, guard and advisor, with an append-only record stream."""

    def __init__(self, env, mm_state: MmState, dmm: DMM,
                 advisor: Optional[Advisor] = None,
                 guard_config: Optional[GuardConfig] = None):
        self.env = env
        self.mm_state = mm_state
        self.dmm = dmm
        self.advisor = advisor
        self.guard = Guard(mm_state.mat_definitions,
                           retries=(guard_config or GuardConfig()).retries)
        self.records: list[EpisodeRecord] = []
        self.halted = False
        self.finished = False
        self._obs: Optional[Observation] = None

    def current_observation(self) -> Optional[Observation]:
        if self._obs is None and not self.finished:
            self._obs = self.env.reset()
        return self._obs

    def run_step(self) -> Optional[EpisodeRecord]:
        """Advance one step; returns None once the episode has ended."""
        if self.halted:
            raise ContainmentBreach("session halted; no proposal passed the guard")
        if self.finished:
            return None
        obs = self.current_observation()
        assert obs is not None

        phi, justification, facts = mm_step(self.mm_state, obs)
        self.guard.sync_phi(phi)
        # The guard sees monitors as they stand before this step executes;
        # definitions may have been revised since they were created.
        self.guard.mat_definitions = self.mm_state.mat_definitions

        proposals: list[DmmProposal] = []
        verdicts: list[GuardVerdict] = []
        accepted: Optional[DmmProposal] = None
        for _ in range(self.guard.retries + 1):
            proposal = dmm_step(self.dmm, obs, phi, justification)
            verdict = self.guard.check(
                proposal, phi,
                self.env.predict_label(proposal.action),
                self.env.predict_terminal(proposal.action))
            proposals.append(proposal)
            verdicts.append(verdict)
            if verdict.kind == ACCEPT:
                accepted = proposal
                break
        if accepted is None:
            fallback = DmmProposal(action=self.env.fallback_action())
            verdict = self.guard.check(
                fallback, phi,
                self.env.predict_label(fallback.action),
                self.env.predict_terminal(fallback.action))
            proposals.append(fallback)
            verdicts.append(verdict)
            if verdict.kind == ACCEPT:
                accepted = fallback

        if accepted is None:
            record = EpisodeRecord(
                step=obs.step, observation=obs.digest(), facts=facts,
                phi_perm=phi, justification=justification,
                proposals=tuple(proposals), verdicts=tuple(verdicts),
                executed=None, labels=frozenset())
            self.records.append(record)
            self.halted = True
            return record

        next_obs, label, terminal, _reward = self.env.step(accepted.action)
        self.guard.commit(label, terminal)
        record = EpisodeRecord(
            step=obs.step, observation=obs.digest(), facts=facts,
            phi_perm=phi, justification=justification,
            proposals=tuple(proposals), verdicts=tuple(verdicts),
            executed=accepted.action, labels=label)

        if self.advisor is not None:
            feedback = self.advisor.review(record)
            if feedback is not None:
                new_state, revision = process_feedback(self.mm_state, record, feedback)
                self.mm_state = new_state
                record = replace(record, feedback=feedback, revision=revision)

        self.records.append(record)
        if terminal:
            self.finished = True
            self._obs = None
        else:
            self._obs = next_obs
        return record

    def run(self, max_steps: Optional[int] = None) -> list[EpisodeRecord]:
        """Run until the episode ends, the session halts, or max_steps."""
        out: list[EpisodeRecord] = []
        while not self.finished and not self.halted:
            if max_steps is not None and len(out) >= max_steps:
                break
            record = self.run_step()
            if record is None:
                break
            out.append(record)
        return out
