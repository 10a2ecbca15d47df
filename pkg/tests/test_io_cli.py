import io as _io
import itertools
import json
import subprocess
import sys
from collections import Counter

import numpy as np
import pytest

from rmj import io
from rmj.choice import ChoiceObservation, mixture_log_likelihood, uniform_log_likelihood
from rmj.cli import main
from rmj.mixture import Component, MixtureModel
from rmj.model import RmjModel, pmf_full
from rmj.ranking import DisplaySet, Ranking
from rmj.simulate import DisplayPolicy, generate


def run(argv, capsys):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:  # usage errors leave through argparse
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


class TestChoiceLog:
    def test_round_trip(self, tmp_path):
        records = [ChoiceObservation(DisplaySet((0, 2, 3)), (3, 0)), ChoiceObservation(DisplaySet((1, 4)), (4,))]
        path = tmp_path / "log.jsonl"
        io.write_choice_log(path, 5, records)
        back = io.read_choice_log(path)
        assert back.n == 5 and back.records == records
        again = tmp_path / "again.jsonl"
        io.write_choice_log(again, back.n, back.records)
        assert path.read_bytes() == again.read_bytes()

    def test_empty_log_keeps_header(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        io.write_choice_log(path, 4, [])
        assert path.read_text().splitlines() == ['{"format":"rmj-choice-log","n":4,"version":1}']
        assert io.read_choice_log(path).records == []

    @pytest.mark.parametrize(
        "line,fragment",
        [
            ("not json", "not valid JSON"),
            ('{"display":[0,1]}', "'display' and 'response'"),
            ('{"display":[0,1],"response":[2]}', "not in the display"),
            ('{"display":[0,9],"response":[0]}', "outside the universe"),
            ('{"display":[0,0,1],"response":[0]}', "repeats"),
            ('{"display":[0],"response":[0]}', "at least two"),
            ('{"display":[0,1],"response":[1,1]}', "distinct"),
            ('{"display":[0,1],"response":[]}', "at least one"),
            ('{"display":[0,-1],"response":[0]}', "negative"),
        ],
    )
    def test_malformed_records_report_line_numbers(self, line, fragment):
        text = '{"format":"rmj-choice-log","n":4,"version":1}\n{"display":[0,1],"response":[1]}\n' + line + "\n"
        with pytest.raises(io.FormatError) as info:
            io.read_choice_log(_io.StringIO(text))
        assert "line 3" in str(info.value) and fragment in str(info.value)

    @pytest.mark.parametrize("header", ["", "[]", '{"format":"other","n":3,"version":1}', '{"format":"rmj-choice-log","n":3,"version":7}', '{"format":"rmj-choice-log","n":1,"version":1}'])
    def test_bad_headers(self, header):
        with pytest.raises(io.FormatError):
            io.read_choice_log(_io.StringIO(header + "\n" if header else ""))


class TestModelFile:
    def test_round_trip(self, tmp_path):
        mix = MixtureModel((Component(0.25, Ranking((2, 0, 1)), 0.125), Component(0.75, Ranking((1, 2, 0)), 0.9)))
        path = tmp_path / "m.json"
        io.write_model(path, mix)
        assert io.read_model(path) == mix
        assert json.loads(path.read_text())["components"][0]["center"] == [2, 0, 1]

    @pytest.mark.parametrize(
        "obj",
        [
            {"format": "rmj-model", "version": 1, "n": 3, "components": [{"weight": 0.5, "center": [0, 1, 2], "q": 0.5}]},
            {"format": "rmj-model", "version": 1, "n": 3, "components": [{"weight": 1.0, "center": [0, 1, 1], "q": 0.5}]},
            {"format": "rmj-model", "version": 1, "n": 4, "components": [{"weight": 1.0, "center": [0, 1, 2], "q": 0.5}]},
            {"format": "rmj-model", "version": 1, "n": 3, "components": [{"weight": 1.0, "center": [0, 1, 2], "q": 1.5}]},
            {"format": "rmj-model", "version": 1, "n": 3, "components": []},
            {"format": "nope"},
        ],
    )
    def test_invalid_models(self, obj):
        with pytest.raises(io.FormatError):
            io.model_from_dict(obj)


class TestSushi:
    TEXT = "header line\n0 4 2 0 3 1\n0 4 1 3 0 2\n"

    def test_converts_rankings(self):
        log = io.read_sushi(_io.StringIO(self.TEXT))
        assert log.n == 4
        assert [r.response for r in log.records] == [(2, 0, 3, 1), (1, 3, 0, 2)]
        assert all(r.display == DisplaySet.full(4) for r in log.records)

    def test_top_k(self):
        assert [r.response for r in io.read_sushi(_io.StringIO(self.TEXT), k=2).records] == [(2, 0), (1, 3)]

    def test_rejects_non_permutations(self):
        with pytest.raises(io.FormatError):
            io.read_sushi(_io.StringIO("h\n0 3 0 1 1\n"))
        with pytest.raises(io.FormatError):
            io.read_sushi(_io.StringIO("h\n"))


class TestPolicies:
    def test_kinds(self, tmp_path):
        rng = np.random.default_rng(0)
        assert DisplayPolicy("full", 5).draw(rng) == DisplaySet.full(5)
        assert DisplayPolicy("all-pairs", 5).draw(rng).size == 2
        sizes = Counter(DisplayPolicy("all-subsets-ge:3", 5).draw(rng).size for _ in range(16000))
        # subsets of size 3, 4, 5 number 10, 5, 1
        assert set(sizes) == {3, 4, 5}
        assert sizes[3] / 16000 == pytest.approx(10 / 16, abs=0.02)
        listing = tmp_path / "sets.txt"
        listing.write_text("[0, 3]\n1 2 4\n")
        fixed = DisplayPolicy(f"file:{listing}", 5)
        assert {fixed.draw(rng).items for _ in range(50)} == {(0, 3), (1, 2, 4)}

    def test_bad_policies(self, tmp_path):
        for spec in ("some", "all-subsets-ge:1", "all-subsets-ge:9"):
            with pytest.raises(ValueError):
                DisplayPolicy(spec, 5)
        bad = tmp_path / "bad.txt"
        bad.write_text("0 7\n")
        with pytest.raises(io.FormatError):
            DisplayPolicy(f"file:{bad}", 5)

    def test_k_larger_than_displays(self):
        with pytest.raises(ValueError):
            generate(MixtureModel.single(Ranking.identity(4), 0.5), 3, DisplayPolicy("all-pairs", 4), 3, np.random.default_rng(0))

    def test_full_rankings_match_pmf(self):
        model = RmjModel(Ranking((2, 0, 3, 1)), 0.5)
        draws = 10**6
        records = generate(MixtureModel.single(model.center, model.q), draws, DisplayPolicy("full", 4), 4, np.random.default_rng(1))
        counts = Counter(r.response for r in records)
        tv = 0.5 * sum(abs(counts.get(p, 0) / draws - pmf_full(model, Ranking(p))) for p in itertools.permutations(range(4)))
        assert tv < 0.005


class TestCommands:
    def test_generate_is_byte_identical(self, tmp_path, capsys):
        args = ["generate", "--n", 6, "--q", 0.4, "--center", "3,1,0,5,2,4", "--T", 300, "--policy", "all-subsets-ge:3", "--k", 2, "--seed", 9]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run(args + ["--out", a], capsys)[0] == 0
        assert run(args + ["--out", b], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        code, out, _ = run(args, capsys)
        assert out.encode() == a.read_bytes()
        assert len(out.splitlines()) == 301

    def test_generate_empty(self, capsys):
        code, out, _ = run(["generate", "--n", 3, "--q", 0.5, "--T", 0, "--seed", 1], capsys)
        assert code == 0 and out == '{"format":"rmj-choice-log","n":3,"version":1}\n'

    def test_generate_from_model_file(self, tmp_path, capsys):
        path = tmp_path / "m.json"
        io.write_model(path, MixtureModel((Component(0.5, Ranking.identity(4), 0.2), Component(0.5, Ranking.reversal(4), 0.2))))
        code, out, _ = run(["generate", "--model", path, "--T", 50, "--seed", 3], capsys)
        assert code == 0 and len(out.splitlines()) == 51

    def test_seed_is_mandatory(self, capsys):
        assert run(["generate", "--n", 3, "--q", 0.5, "--T", 2], capsys)[0] == 1
        assert run(["fit", "x.jsonl"], capsys)[0] == 1

    def test_validation_failures_exit_one(self, tmp_path, capsys):
        assert run(["generate", "--n", 3, "--q", 1.5, "--T", 2, "--seed", 1], capsys)[0] == 1
        assert run(["generate", "--n", 3, "--q", 0.5, "--T", 2, "--k", 3, "--policy", "all-pairs", "--seed", 1], capsys)[0] == 1
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"format":"rmj-choice-log","n":3,"version":1}\n{"display":[0,5],"response":[0]}\n')
        code, _, err = run(["fit", bad, "--seed", 0], capsys)
        assert code == 1 and "line 2" in err
        assert run(["fit", tmp_path / "missing.jsonl", "--seed", 0], capsys)[0] == 1

    def test_fit_then_eval_reproduces_likelihood(self, tmp_path, capsys):
        log = tmp_path / "train.jsonl"
        run(["generate", "--n", 6, "--q", 0.5, "--center", "1,0,3,2,5,4", "--T", 4000, "--policy", "all-subsets-ge:2", "--k", 2, "--seed", 4, "--out", log], capsys)
        model = tmp_path / "model.json"
        code, out, _ = run(["fit", log, "--seed", 0, "--out", model], capsys)
        report = json.loads(out)
        assert code == 0
        assert report["solver_status"] == "exact"
        assert report["model"]["components"][0]["center"] == [1, 0, 3, 2, 5, 4]
        assert report["coverage"]["fully_covered"]
        code, out, _ = run(["eval", "--model", model, log], capsys)
        metrics = json.loads(out)
        assert metrics["log_likelihood"] == report["log_likelihood"]
        assert metrics["records"] == 4000
        assert sum(row["records"] for row in metrics["by_display_size"]) == 4000
        assert sum(row["log_likelihood"] for row in metrics["by_display_size"]) == pytest.approx(metrics["log_likelihood"], rel=1e-12)
        data = io.read_choice_log(log).records
        assert metrics["uniform_log_likelihood"] == pytest.approx(uniform_log_likelihood(data), rel=1e-12)
        assert metrics["log_likelihood"] > metrics["uniform_log_likelihood"]

    def test_train_test_split(self, tmp_path, capsys):
        truth = MixtureModel.single(Ranking((4, 2, 0, 1, 3, 5, 6)), 0.6)
        records = generate(truth, 6000, DisplayPolicy("all-subsets-ge:2", 7), 1, np.random.default_rng(7))
        train, test = tmp_path / "train.jsonl", tmp_path / "test.jsonl"
        io.write_choice_log(train, 7, records[:4000])
        io.write_choice_log(test, 7, records[4000:])
        model = tmp_path / "m.json"
        assert run(["fit", train, "--seed", 1, "--out", model], capsys)[0] == 0
        code, out, _ = run(["eval", "--model", model, test], capsys)
        metrics = json.loads(out)
        assert metrics["mean_log_likelihood"] > metrics["uniform_mean_log_likelihood"]
        assert metrics["log_likelihood"] == pytest.approx(mixture_log_likelihood(io.read_model(model), records[4000:]), rel=1e-12)

    def test_coverage_warning(self, tmp_path, capsys):
        log = tmp_path / "pairs.jsonl"
        io.write_choice_log(log, 4, [ChoiceObservation(DisplaySet((0, 1)), (0,)), ChoiceObservation(DisplaySet((2, 3)), (3,))])
        code, out, err = run(["fit", log, "--seed", 0], capsys)
        assert code == 0 and "not identifiable" in err
        assert json.loads(out)["coverage"]["uncovered_pairs"] == [[0, 2], [0, 3], [1, 2], [1, 3]]

    def test_mixture_fit(self, tmp_path, capsys):
        path = tmp_path / "m.json"
        io.write_model(path, MixtureModel((Component(0.5, Ranking.identity(5), 0.3), Component(0.5, Ranking.reversal(5), 0.3))))
        log = tmp_path / "mix.jsonl"
        run(["generate", "--model", path, "--T", 3000, "--policy", "all-subsets-ge:2", "--seed", 2, "--out", log], capsys)
        code, out, _ = run(["fit", log, "--mixture", 2, "--restarts", 5, "--seed", 3], capsys)
        report = json.loads(out)
        assert code == 0 and len(report["model"]["components"]) == 2
        assert report["em"]["termination"] in ("converged", "max_iter")
        code2, out2, _ = run(["fit", log, "--mixture", 2, "--restarts", 5, "--seed", 3], capsys)
        assert out2 == out

    def test_eval_universe_mismatch(self, tmp_path, capsys):
        model, log = tmp_path / "m.json", tmp_path / "l.jsonl"
        io.write_model(model, MixtureModel.single(Ranking.identity(3), 0.5))
        io.write_choice_log(log, 4, [ChoiceObservation(DisplaySet((0, 3)), (3,))])
        assert run(["eval", "--model", model, log], capsys)[0] == 1

    def test_verify(self, capsys):
        code, out, _ = run(["verify", "--n", 5], capsys)
        assert code == 0 and "all checks passed" in out and "FAIL" not in out
        assert run(["verify", "--n", 9], capsys)[0] == 1

    def test_verify_failure_exits_two(self, capsys, monkeypatch):
        import rmj.choice

        real = rmj.choice.ranked_choice_prob
        monkeypatch.setattr(rmj.choice, "ranked_choice_prob", lambda m, S, p: real(m, S, p) + 1e-6)
        code, out, _ = run(["verify", "--n", 3], capsys)
        assert code == 2 and "FAIL ranked_choice" in out

    def test_demo(self, capsys):
        code, out, _ = run(["demo-inconsistency", "--n", 4, "--q", 0.1], capsys)
        assert code == 0
        assert "recovered ranking (1,2,4,3)" in out and "true ranking      (1,2,3,4)" in out
        assert "inconsistency reproduced" in out

    def test_demo_inconclusive(self, capsys):
        code, out, _ = run(["demo-inconsistency", "--n", 9, "--q", 0.83], capsys)
        assert code == 0 and "construction inconclusive" in out
        assert run(["demo-inconsistency", "--n", 9, "--q", 0.2], capsys)[0] == 1

    def test_convert_sushi(self, tmp_path, capsys):
        src = tmp_path / "sushi.order"
        src.write_text(TestSushi.TEXT)
        out_path = tmp_path / "sushi.jsonl"
        assert run(["convert-sushi", src, "--k", 1, "--out", out_path], capsys)[0] == 0
        log = io.read_choice_log(out_path)
        assert [r.response for r in log.records] == [(2,), (1,)]


def test_console_entry_point(tmp_path):
    cmd = [sys.executable, "-m", "rmj.cli", "generate", "--n", "4", "--q", "0.3", "--T", "20", "--seed", "5"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a.count(b"\n") == 21
