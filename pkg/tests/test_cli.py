import json
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from reasonguard import trace, worlds
from reasonguard.cli import EXIT_BREACH, EXIT_CONFIG, EXIT_OK, main

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def base_grt(tmp_path):
    text = resources.files("reasonguard.data").joinpath("therapy_base.grt").read_text()
    path = tmp_path / "base.grt"
    path.write_text(text)
    return str(path)


@pytest.fixture
def revised_grt(tmp_path):
    text = resources.files("reasonguard.data").joinpath("therapy_revised.grt").read_text()
    path = tmp_path / "revised.grt"
    path.write_text(text)
    return str(path)


class TestRun:
    def test_therapy1_exit_ok(self, runner, tmp_path):
        out = tmp_path / "t1.jsonl"
        result = runner.invoke(main, ["run", "--scenario", "therapy1",
                                      "--trace", str(out)])
        assert result.exit_code == EXIT_OK
        assert "step 1: phi=protect(l) executed=idle" in result.output
        assert out.read_text() == (GOLDEN / "therapy1.jsonl").read_text()

    def test_therapy2_trace_matches_golden(self, runner, tmp_path):
        out = tmp_path / "t2.jsonl"
        result = runner.invoke(main, ["run", "--scenario", "therapy2",
                                      "--trace", str(out)])
        assert result.exit_code == EXIT_OK
        assert out.read_text() == (GOLDEN / "therapy2.jsonl").read_text()

    def test_grid_trace_matches_golden(self, runner, tmp_path):
        out = tmp_path / "g.jsonl"
        result = runner.invoke(main, ["run", "--scenario", "grid", "--seed", "42",
                                      "--trace", str(out)])
        assert result.exit_code == EXIT_OK
        assert out.read_text() == (GOLDEN / "grid_seed42.jsonl").read_text()

    def test_trace_deterministic_across_runs(self, runner, tmp_path):
        outs = []
        for i in range(2):
            out = tmp_path / ("run%d.jsonl" % i)
            runner.invoke(main, ["run", "--scenario", "grid", "--seed", "7",
                                 "--trace", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_theory_file(self, runner):
        result = runner.invoke(main, ["run", "--scenario", "therapy1",
                                      "--theory", "/nonexistent/x.grt"])
        assert result.exit_code == EXIT_CONFIG

    def test_bad_theory_file(self, runner, tmp_path):
        bad = tmp_path / "bad.grt"
        bad.write_text("rule oops\n")
        result = runner.invoke(main, ["run", "--scenario", "therapy1",
                                      "--theory", str(bad)])
        assert result.exit_code == EXIT_CONFIG

    def test_unknown_scenario(self, runner):
        result = runner.invoke(main, ["run", "--scenario", "marswalk"])
        assert result.exit_code == EXIT_CONFIG

    def test_config_file(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario": "therapy2"}))
        result = runner.invoke(main, ["run", "--config", str(cfg)])
        assert result.exit_code == EXIT_OK
        assert "executed=call_number(emergency)" in result.output

    def test_containment_breach_exit_code(self, runner, tmp_path, revised_grt):
        # A label table where every action violates both monitors.
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario": "therapy2"}))
        # Force breach through the API instead: patch via scenario is not
        # expressible in config, so exercise exit code with a direct session.
        import reasonguard.worlds as w
        from reasonguard.governor import Session
        from reasonguard.worlds import SequenceDmm, TherapyEnv

        table = {a: ("disclosed(l)", "intervened") for a in w.THERAPY_ACTIONS}
        doc = w.dsl.parse_theory(Path(revised_grt).read_text())
        state = w._mm_state_from_doc(doc, w.therapy_interpreter())
        session = Session(TherapyEnv(["m2"], label_table=table), state,
                          SequenceDmm(["call_number(friend)"]))

        def fake_build(*args, **kwargs):
            return session

        import reasonguard.cli as cli_mod
        original = cli_mod._build_session
        cli_mod._build_session = fake_build
        try:
            result = runner.invoke(main, ["run", "--scenario", "therapy2"])
        finally:
            cli_mod._build_session = original
        assert result.exit_code == EXIT_BREACH

    def test_print_justification(self, runner):
        result = runner.invoke(main, ["run", "--scenario", "therapy2",
                                      "--print-justification"])
        assert result.exit_code == EXIT_OK
        payload = json.loads(result.output.split("\n", 1)[1])
        assert payload["defeats"] == [[0, 2]]


class TestInfer:
    def test_scenario1_output(self, runner, base_grt):
        result = runner.invoke(main, ["infer", "--theory", base_grt,
                                      "--facts", "D(l)"])
        assert result.exit_code == EXIT_OK
        assert result.output == (
            "grounded: d1[X=l]: D(l) => protect(l)\n"
            "perm: protect(l)\n")

    def test_scenario2_output(self, runner, revised_grt):
        result = runner.invoke(main, ["infer", "--theory", revised_grt,
                                      "--facts", "D(l),W(not_i),F(h)"])
        assert result.exit_code == EXIT_OK
        lines = result.output.splitlines()
        assert lines[0] == "grounded: d1[X=l]: D(l) => protect(l)"
        assert lines[1] == "grounded: d2[X=not_i]: W(not_i) => follow(not_i)"
        assert lines[2] == "grounded: d3[X=h]: F(h) => report(h)"
        assert "conflict: protect(l) <> report(h)" in lines
        assert "conflict: follow(not_i) <> report(h)" in lines
        assert lines[-1] == "perm: follow(not_i), report(h); defeated: d1 by d3"

    def test_empty_facts_unconstrained(self, runner, base_grt):
        result = runner.invoke(main, ["infer", "--theory", base_grt])
        assert result.exit_code == EXIT_OK
        assert result.output == "perm: unconstrained\n"

    def test_bad_fact(self, runner, base_grt):
        result = runner.invoke(main, ["infer", "--theory", base_grt,
                                      "--facts", "D(X)"])
        assert result.exit_code == EXIT_CONFIG


class TestTraceModule:
    def test_round_trip(self, tmp_path):
        session = worlds.therapy_scenario_1()
        session.run()
        path = tmp_path / "t.jsonl"
        trace.write_trace(session.records, str(path))
        loaded = trace.read_trace(str(path))
        assert loaded == [trace.record_payload(r) for r in session.records]

    def test_key_order_is_fixed(self):
        session = worlds.therapy_scenario_2()
        session.run()
        line = trace.record_line(session.records[0])
        keys = list(json.loads(line).keys())
        assert keys == ["schema_version", "step", "observation", "facts",
                        "phi_perm", "justification", "proposals", "verdicts",
                        "executed", "labels", "feedback", "revision"]
        # Serialized text preserves that order verbatim.
        positions = [line.index('"%s":' % k) for k in keys]
        assert positions == sorted(positions)

    def test_no_timestamps(self):
        session = worlds.therapy_scenario_1()
        session.run()
        line = trace.record_line(session.records[0])
        assert "time" not in json.loads(line)
