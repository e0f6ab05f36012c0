"""Command-line interface: exit codes, config files and output artifacts."""

import csv
import json

import pytest

from autoloss import simtask, zoo
from autoloss.cli import main, read_config, UsageError
from autoloss.expr import parse
from autoloss.verify import verify

SMALL_REG = "branch = reg\nE = 2\nN = 30\nK = 4\nP = 2\nproxy_steps = 300\n"


@pytest.fixture
def config_file(tmp_path):
    def write(text: str, name: str = "run.cfg"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


class TestParse:
    def test_iou(self, capsys):
        assert main(["parse", "--expr", "Add(1,Neg(Div(I,U)))", "--branch", "reg"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "Add(1,Neg(Div(I,U)))"
        assert out[1] == "nodes=6 depth=4"

    def test_malformed(self, capsys):
        assert main(["parse", "--expr", "Add(1,Neg(Div(I,U))", "--branch", "reg"]) == 2
        err = capsys.readouterr().err
        assert "position 19" in err and "^" in err

    def test_wrong_branch(self, capsys):
        assert main(["parse", "--expr", "Add(I,Y)", "--branch", "reg"]) == 2
        assert "WrongBranchSymbol" in capsys.readouterr().err

    def test_missing_branch(self):
        assert main(["parse", "--expr", "X"]) == 2

    def test_no_command(self):
        assert main([]) == 2


class TestVerify:
    def test_ce(self, capsys):
        assert main(["verify", "--loss", "CE"]) == 0
        assert json.loads(capsys.readouterr().out)["overall"] is True

    def test_identity(self, capsys):
        assert main(["verify", "--expr", "Neg(X)", "--branch", "cls"]) == 1
        assert json.loads(capsys.readouterr().out)["convergence"] is False

    def test_invalid(self, capsys):
        assert main(["verify", "--expr", "Log(Neg(1))", "--branch", "cls"]) == 1
        assert json.loads(capsys.readouterr().out)["validness"] is False

    def test_unknown_loss(self):
        assert main(["verify", "--loss", "Hinge"]) == 2


class TestOtherCommands:
    def test_eval(self, capsys):
        assert main(["eval", "--loss", "GIoU", "--batch", "3"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert len(rec["per_sample"]) == 3

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--loss", "FL"]) == 0
        assert json.loads(capsys.readouterr().out)["pass"] is True

    def test_simulate(self, capsys):
        assert main(["simulate", "--loss", "CE"]) == 0
        assert json.loads(capsys.readouterr().out)["metric"] >= 0.9

    def test_simulate_divergence(self, capsys):
        assert main(["simulate", "--expr", "Exp(Mul(X,X))", "--branch", "cls"]) == 1

    def test_zoo_list(self, capsys):
        assert main(["zoo-list"]) == 0
        names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
        assert names == zoo.names()


class TestConfigFile:
    def test_comments_and_types(self):
        values = read_config("# run\nbranch = cls  # classification\nE = 3\np1 = 0.25\n\n")
        assert values == {"branch": "cls", "E": 3, "p1": 0.25}

    @pytest.mark.parametrize("text", ["foo = 1", "E 3", "E = three", "E = 1\nE = 2"])
    def test_errors(self, text):
        with pytest.raises(UsageError):
            read_config(text)

    def test_missing_branch(self, config_file, tmp_path, capsys):
        path = config_file("E = 1\n")
        assert main(["search", "--config", path, "--out", str(tmp_path / "o")]) == 2
        assert "branch" in capsys.readouterr().err

    def test_unknown_key(self, config_file, tmp_path):
        path = config_file("branch = reg\nmutation_rate = 0.3\n")
        assert main(["search", "--config", path, "--out", str(tmp_path / "o")]) == 2

    def test_invalid_value(self, config_file, tmp_path):
        path = config_file("branch = reg\nP = 9\nK = 3\n")
        assert main(["search", "--config", path, "--out", str(tmp_path / "o")]) == 2


class TestSearch:
    def test_outputs_and_elitism(self, config_file, tmp_path):
        out = tmp_path / "run"
        assert main(["search", "--config", config_file(SMALL_REG), "--out", str(out)]) == 0
        assert {"best.loss", "log.jsonl", "summary.csv", "config.effective"} <= {p.name for p in out.iterdir()}
        dsl, fitness_line = (out / "best.loss").read_text().splitlines()
        assert verify(parse(dsl, "reg")).overall
        fitness = float(fitness_line.split("=")[1])
        assert fitness >= simtask.proxy_fitness(zoo.get("GIoU").expr, steps=300) - 1e-9

    def test_byte_identical_rerun(self, config_file, tmp_path):
        path = config_file(SMALL_REG)
        for name in ("a", "b"):
            assert main(["search", "--config", path, "--out", str(tmp_path / name), "--workers", "1"]) == 0
        assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()

    def test_seed_flag_overrides(self, config_file, tmp_path):
        path = config_file(SMALL_REG + "seed = 3\n")
        out = tmp_path / "s"
        assert main(["search", "--config", path, "--out", str(out), "--seed", "7"]) == 0
        assert "seed = 7" in (out / "config.effective").read_text().splitlines()

    def test_workers_from_environment(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("AUTOLOSS_WORKERS", "2")
        out = tmp_path / "w"
        assert main(["search", "--config", config_file(SMALL_REG), "--out", str(out)]) == 0
        assert "workers = 2" in (out / "config.effective").read_text().splitlines()

    def test_baseline_algorithm(self, config_file, tmp_path):
        out = tmp_path / "v"
        assert main(["search", "--config", config_file(SMALL_REG), "--out", str(out), "--algo", "vanilla"]) == 0
        assert (out / "vanilla_summary.csv").exists()


class TestBench:
    def test_columns_and_order(self, config_file, tmp_path):
        path = config_file("branch = cls\nE = 2\nN = 50\nK = 5\nproxy_steps = 200\n")
        out = tmp_path / "bench"
        assert main(["bench", "--algos", "cse,vanilla", "--config", path, "--out", str(out)]) == 0
        with open(out / "bench.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["algo", "evaluated_loss_count", "wall_seconds", "best_fitness"]
        counts = {r["algo"]: int(r["evaluated_loss_count"]) for r in rows}
        assert counts["cse"] < counts["vanilla"]

    def test_empty_algos(self, config_file, tmp_path):
        path = config_file("branch = cls\n")
        assert main(["bench", "--algos", "", "--config", path, "--out", str(tmp_path)]) == 2

    def test_unknown_algo(self, config_file, tmp_path):
        path = config_file("branch = cls\n")
        assert main(["bench", "--algos", "cse,grid", "--config", path, "--out", str(tmp_path)]) == 2
