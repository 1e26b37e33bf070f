import pytest

from reasonguard import dsl, worlds
from reasonguard.governor import (
    ConfigurationError, ContainmentBreach, DmmProposal, EXECUTOR_SIDE,
    Feedback, GovernorError, Guard, GuardVerdict, InterpretationError,
    MORAL_MODULE, MmState, Observation, RevisionError, Session,
    TableInterpreter, accordance_confidence, guard_step, mm_step,
    process_feedback,
)
from reasonguard.ltlf import ConflictOracle, MatDefinition
from reasonguard.reasons import (
    AndExpr, Const, Default, FactBase, MatHead, PermissibleSet, ReasonAtom, Var,
)
from reasonguard.worlds import (
    ScriptedAdvisor, ScriptedDmm, SequenceDmm, TherapyEnv, label,
    scenario1_feedback, therapy_scenario_1, therapy_scenario_2,
)


def mm_state(grt_name: str) -> MmState:
    doc = worlds._load_grt(grt_name)
    return worlds._mm_state_from_doc(doc, worlds.therapy_interpreter())


def mat(text: str) -> MatHead:
    return dsl.parse_mat_head_text(text)


class TestMmStep:
    def test_scenario1(self):
        phi, just, facts = mm_step(mm_state("therapy_base.grt"),
                                   Observation(step=1, key="m1"))
        assert phi.mats == (mat("protect(l)"),)
        assert facts == FactBase(frozenset({ReasonAtom("D", (Const("l"),))}))
        assert just.conflicts == frozenset()

    def test_scenario2(self):
        phi, just, _ = mm_step(mm_state("therapy_revised.grt"),
                               Observation(step=1, key="m2"))
        assert [str(m) for m in phi.mats] == ["follow(not_i)", "report(h)"]
        assert just.conflicts == frozenset({(0, 2), (1, 2)})
        assert just.defeats == frozenset({(0, 2)})

    def test_unknown_observation_strict(self):
        with pytest.raises(InterpretationError):
            mm_step(mm_state("therapy_base.grt"), Observation(step=1, key="m9"))

    def test_unknown_observation_lenient(self):
        state = mm_state("therapy_base.grt")
        lenient = MmState(
            theory=state.theory,
            interpreter=TableInterpreter(worlds.THERAPY_FACTS, strict=False),
            conflict_oracle=state.conflict_oracle,
            mat_definitions=state.mat_definitions)
        phi, _, _ = mm_step(lenient, Observation(step=1, key="m9"))
        assert phi.is_unconstrained


class TestGuard:
    def setup_scenario2(self):
        state = mm_state("therapy_revised.grt")
        phi, just, _ = mm_step(state, Observation(step=1, key="m2"))
        guard = Guard(state.mat_definitions)
        guard.sync_phi(phi)
        env = TherapyEnv(["m2"])
        env.reset()
        return guard, phi, env

    def test_accept_emergency_call(self):
        guard, phi, env = self.setup_scenario2()
        verdict = guard_step(
            guard, DmmProposal("call_number(emergency)"), phi,
            env.predict_label("call_number(emergency)"),
            env.predict_terminal("call_number(emergency)"))
        assert verdict == GuardVerdict.accept("call_number(emergency)")

    def test_reject_friend_call(self):
        # Intervening violates follow(not_i) and, since the episode ends
        # here, the unmet report(h) eventuality is violated too.
        guard, phi, env = self.setup_scenario2()
        verdict = guard_step(
            guard, DmmProposal("call_number(friend)"), phi,
            env.predict_label("call_number(friend)"),
            env.predict_terminal("call_number(friend)"))
        assert verdict.kind == "reject"
        assert "follow(not_i)" in verdict.reason
        assert "report(h)" in verdict.reason

    def test_idle_keeps_follow_alive(self):
        guard, phi, env = self.setup_scenario2()
        verdict = guard_step(guard, DmmProposal("idle"), phi,
                             env.predict_label("idle"), env.predict_terminal("idle"))
        assert verdict.kind == "accept"

    def test_unconstrained_accepts_anything(self):
        guard = Guard({})
        phi = PermissibleSet(PermissibleSet.UNCONSTRAINED)
        guard.sync_phi(phi)
        verdict = guard.check(DmmProposal("whatever"), phi, frozenset())
        assert verdict.kind == "accept"

    def test_check_does_not_mutate_monitors(self):
        guard, phi, env = self.setup_scenario2()
        before = dict(guard.monitors)
        guard.check(DmmProposal("call_number(friend)"), phi,
                    env.predict_label("call_number(friend)"), True)
        assert guard.monitors == before

    def test_monitor_lifecycle(self):
        state = mm_state("therapy_base.grt")
        guard = Guard(state.mat_definitions)
        phi1 = PermissibleSet(PermissibleSet.CONSTRAINED, (mat("protect(l)"),))
        guard.sync_phi(phi1)
        created = guard.monitors[mat("protect(l)")]
        guard.commit(frozenset())
        stepped = guard.monitors[mat("protect(l)")]
        # Same MAT stays in the permissible set: monitor persists.
        guard.sync_phi(phi1)
        assert guard.monitors[mat("protect(l)")] is stepped
        assert created is not stepped
        # The MAT leaves: its monitor is retired, a new one starts fresh.
        guard.sync_phi(PermissibleSet(PermissibleSet.CONSTRAINED, (mat("follow(not_i)"),)))
        assert mat("protect(l)") not in guard.monitors
        guard.sync_phi(phi1)
        assert guard.monitors[mat("protect(l)")].current == created.current

    def test_missing_definition(self):
        guard = Guard({})
        with pytest.raises(ConfigurationError):
            guard.sync_phi(PermissibleSet(PermissibleSet.CONSTRAINED, (mat("mystery"),)))


class TestProcessFeedback:
    def run_scenario1(self):
        session = therapy_scenario_1()
        session.run()
        return session

    def test_moral_module_revision(self):
        session = self.run_scenario1()
        record = session.records[0]
        assert record.executed == "idle"
        revision = record.revision
        assert revision.blame == MORAL_MODULE
        d3 = revision.added_default
        assert d3.id == "d3"
        assert d3.antecedent == ReasonAtom("F", (Var("X"),))
        assert d3.conclusion == mat("report(X)").__class__("report", (Var("X"),))
        assert revision.added_priorities == (("d1", "d3"),)
        assert session.mm_state.theory.priority.precedes("d1", "d3")

    def test_revised_theory_matches_shipped_file(self):
        session = self.run_scenario1()
        doc = dsl.document_from_parts(
            session.mm_state.theory,
            definitions=dict(session.mm_state.mat_definitions),
            conflict_pairs=session.mm_state.conflict_oracle.declared)
        shipped = worlds.importlib.resources.files("reasonguard.data").joinpath(
            "therapy_revised.grt").read_text()
        assert dsl.print_theory(doc) == shipped

    def test_replay_is_idempotent(self):
        session = self.run_scenario1()
        record = session.records[0]
        state2, revision2 = process_feedback(
            session.mm_state, record, scenario1_feedback())
        assert revision2.blame == MORAL_MODULE
        assert revision2.added_default is None
        assert revision2.added_priorities == ()
        assert state2.theory == session.mm_state.theory

    def test_executor_side_blame(self):
        # Expected MAT already permissible: the moral theory was right.
        state = mm_state("therapy_revised.grt")
        session = therapy_scenario_2()
        session.run()
        record = session.records[0]
        fb = Feedback(criticized_action=record.executed,
                      expected_mat=mat("report(h)"),
                      reason=ReasonAtom("F", (Const("h"),)), step=1)
        new_state, revision = process_feedback(state, record, fb)
        assert revision.blame == EXECUTOR_SIDE
        assert revision.forwarded
        assert new_state is state

    def test_step_mismatch(self):
        session = self.run_scenario1()
        fb = Feedback("idle", mat("report(h)"), ReasonAtom("F", (Const("h"),)), step=7)
        with pytest.raises(GovernorError):
            process_feedback(session.mm_state, session.records[0], fb)

    def test_anti_unification_only_lifts_shared_constants(self):
        session = therapy_scenario_1(advisor=worlds.SilentAdvisor())
        session.run()
        record = session.records[0]
        fb = Feedback(
            criticized_action="idle",
            expected_mat=mat("report(h)"),
            reason=AndExpr((ReasonAtom("F", (Const("h"),)),
                            ReasonAtom("D", (Const("l"),)))),
            step=1)
        _, revision = process_feedback(session.mm_state, record, fb)
        added = revision.added_default
        # h is shared with the expected MAT and becomes X; l is not shared
        # and stays a constant.
        assert added.antecedent == AndExpr((ReasonAtom("F", (Var("X"),)),
                                            ReasonAtom("D", (Const("l"),))))
        assert added.conclusion.args == (Var("X"),)

    def test_cycle_aborts_revision_atomically(self):
        text = (
            "reason D/1\nreason F/1\n"
            "mat protect(X) := G !disclosed(X)\n"
            "mat report(X) := F reported(X)\n"
            "rule d1: D(X) => protect(X)\n"
            "rule d2: F(X) => report(X)\n"
            "prefer d1 > d2\n"
            "conflict protect(X) <> report(Y)\n")
        doc = dsl.parse_theory(text)
        interpreter = TableInterpreter({"m": (ReasonAtom("D", (Const("l"),)),
                                              ReasonAtom("F", (Const("h"),)))})
        state = worlds._mm_state_from_doc(doc, interpreter)
        env = TherapyEnv(["m"])
        session = Session(env, state, ScriptedDmm({"m": "idle"}))
        session.run()
        record = session.records[0]
        assert [str(m) for m in record.phi_perm.mats] == ["protect(l)"]
        fb = Feedback("idle", mat("report(h)"),
                      ReasonAtom("F", (Const("h"),)), step=1)
        before = session.mm_state.theory
        with pytest.raises(RevisionError):
            process_feedback(session.mm_state, record, fb)
        assert session.mm_state.theory == before


class BranchEnv(worlds.Environment):
    """Two actions; `bad` raises the alarm label, `good` does not."""

    def __init__(self, episode_len: int = 3):
        self.episode_len = episode_len
        self.steps = 0

    def reset(self):
        self.steps = 0
        return Observation(step=1, key="b")

    def step(self, action):
        self.steps += 1
        lbl = label("alarm") if action == "bad" else frozenset()
        terminal = self.steps >= self.episode_len
        return (None if terminal else Observation(step=self.steps + 1, key="b"),
                lbl, terminal, 0.0)

    def predict_label(self, action):
        return label("alarm") if action == "bad" else frozenset()

    def predict_terminal(self, action):
        return self.steps + 1 >= self.episode_len

    def fallback_action(self):
        return "good"

    def actions(self):
        return ["good", "bad"]

    def state_key(self):
        return self.steps


def branch_state() -> MmState:
    doc = dsl.parse_theory(
        "reason danger/0\nmat calm() := G !alarm\nrule d1: danger => calm()\n")
    return worlds._mm_state_from_doc(
        doc, TableInterpreter({"b": (ReasonAtom("danger"),)}))


class TestAccordanceConfidence:
    PHI = PermissibleSet(PermissibleSet.CONSTRAINED, (MatHead("calm"),))

    def test_safe_first_action_half(self):
        # After `good`, the horizon-2 continuations split evenly between
        # `good` (monitor alive) and `bad` (violated).
        value = accordance_confidence(
            branch_state(), DmmProposal("good"), self.PHI, BranchEnv(), horizon=2)
        assert value == 0.5

    def test_violating_first_action_zero(self):
        value = accordance_confidence(
            branch_state(), DmmProposal("bad"), self.PHI, BranchEnv(), horizon=2)
        assert value == 0.0

    def test_horizon_one_is_exact_guard_outcome(self):
        assert accordance_confidence(
            branch_state(), DmmProposal("good"), self.PHI, BranchEnv(), horizon=1) == 1.0

    def test_unconstrained_is_one(self):
        phi = PermissibleSet(PermissibleSet.UNCONSTRAINED)
        assert accordance_confidence(
            branch_state(), DmmProposal("bad"), phi, BranchEnv(), horizon=3) == 1.0

    def test_bad_horizon(self):
        with pytest.raises(GovernorError):
            accordance_confidence(
                branch_state(), DmmProposal("good"), self.PHI, BranchEnv(), horizon=0)

    def test_cap(self):
        with pytest.raises(GovernorError):
            accordance_confidence(
                branch_state(), DmmProposal("good"), self.PHI,
                BranchEnv(episode_len=30), horizon=20, cap=50)


class TestSession:
    def test_retries_then_accept(self):
        # Guard rejects the friend call twice, then the emergency call passes.
        state = mm_state("therapy_revised.grt")
        env = TherapyEnv(["m2"])
        dmm = SequenceDmm(["call_number(friend)", "call_number(friend)",
                           "call_number(emergency)"])
        session = Session(env, state, dmm)
        session.run()
        record = session.records[0]
        assert [v.kind for v in record.verdicts] == ["reject", "reject", "accept"]
        assert record.executed == "call_number(emergency)"
        assert not session.halted

    def test_fallback_after_exhausted_retries(self):
        state = mm_state("therapy_revised.grt")
        env = TherapyEnv(["m2"])
        dmm = SequenceDmm(["call_number(friend)"])
        session = Session(env, state, dmm)
        session.run()
        record = session.records[0]
        # retries + 1 rejected proposals, then the environment fallback.
        assert [p.action for p in record.proposals][-1] == "idle"
        assert record.verdicts[-1].kind == "accept"
        assert record.executed == "idle"

    def test_halt_when_even_fallback_fails(self):
        # Make every action, including the fallback, violate both MATs.
        table = {a: ("disclosed(l)", "intervened") for a in worlds.THERAPY_ACTIONS}
        state = mm_state("therapy_revised.grt")
        env = TherapyEnv(["m2"], label_table=table)
        session = Session(env, state, SequenceDmm(["call_number(friend)"]))
        session.run()
        assert session.halted
        record = session.records[0]
        assert record.executed is None
        with pytest.raises(ContainmentBreach):
            session.run_step()

    def test_finished_session_returns_none(self):
        session = therapy_scenario_2()
        session.run()
        assert session.finished
        assert session.run_step() is None

    def test_scenario2_end_to_end(self):
        session = therapy_scenario_2()
        session.run()
        record = session.records[0]
        assert record.executed == "call_number(emergency)"
        assert session.finished and not session.halted
