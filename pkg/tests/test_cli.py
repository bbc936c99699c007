"""End-to-end subcommand runs through main(), on small synthetic inputs."""

import json
import re

import numpy as np
import pytest

from fairspectral.cli import main
from fairspectral.eigen import load_basis


def run(*argv):
    return main(list(argv))


def gen_graph(tmp_path, name="data", n=60, extra=()):
    out = tmp_path / name
    code = run("gen", "--n", str(n), "--p-in", "0.2", "--p-out", "0.05",
               "--seed", "1", "--out", str(out), *extra)
    assert code == 0
    return out


class TestParserBasics:
    def test_version_flag_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run("--version")
        assert excinfo.value.code == 0
        assert re.match(r"\d+\.\d+\.\d+", capsys.readouterr().out.strip())

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            run()
        assert excinfo.value.code == 2


class TestGen:
    def test_writes_three_files(self, tmp_path, capsys):
        out = gen_graph(tmp_path)
        assert (out / "edges.txt").is_file()
        assert (out / "nodes.csv").is_file()
        assert (out / "splits.json").is_file()
        assert "wrote 60 nodes" in capsys.readouterr().out

    def test_node_table_layout(self, tmp_path):
        out = gen_graph(tmp_path)
        lines = (out / "nodes.csv").read_text().splitlines()
        assert lines[0] == "sensitive," + ",".join(f"x{i}" for i in range(1, 8)) + ",label"
        assert len(lines) == 61
        first = lines[1].split(",")
        assert first[0] in ("0", "1")
        assert first[-1] in ("0", "1")

    def test_edges_are_upper_triangular_pairs(self, tmp_path):
        out = gen_graph(tmp_path)
        for line in (out / "edges.txt").read_text().splitlines():
            u, v = map(int, line.split())
            assert 0 <= u < v < 60

    def test_split_index_lists_are_disjoint(self, tmp_path):
        out = gen_graph(tmp_path)
        doc = json.loads((out / "splits.json").read_text())
        assert doc["n"] == 60
        train, val, test = set(doc["train"]), set(doc["val"]), set(doc["test"])
        assert len(train | val | test) == len(train) + len(val) + len(test)
        assert (train | val | test) <= set(range(60))

    def test_deterministic_given_seed(self, tmp_path):
        a = gen_graph(tmp_path, "a")
        b = gen_graph(tmp_path, "b")
        for name in ("edges.txt", "nodes.csv", "splits.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_invalid_probability_is_usage_error(self, tmp_path, capsys):
        code = run("gen", "--n", "20", "--p-in", "1.5",
                   "--out", str(tmp_path / "bad"))
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestEig:
    def test_iterative_route_writes_basis_and_sidecar(self, tmp_path):
        data = gen_graph(tmp_path)
        out = tmp_path / "basis.bin"
        assert run("eig", "--graph", str(data), "--k", "4",
                   "--out", str(out)) == 0
        basis = load_basis(out)
        assert (basis.n, basis.k) == (60, 4)
        sidecar = json.loads(out.with_suffix(".bin.json").read_text())
        assert sidecar["method"] == "lanczos-topk"
        assert sidecar["mode"] == "sym"
        assert len(sidecar["eigenvalues"]) == 4
        assert sidecar["max_residual"] <= 1e-8
        assert sidecar["seconds"] > 0

    def test_dense_route_truncates_to_k(self, tmp_path):
        data = gen_graph(tmp_path)
        out = tmp_path / "dense.bin"
        assert run("eig", "--graph", str(data), "--k", "5", "--dense",
                   "--out", str(out)) == 0
        sidecar = json.loads(out.with_suffix(".bin.json").read_text())
        assert sidecar["method"] == "dense-topk"
        assert load_basis(out).k == 5

    def test_routes_agree_on_eigenvalues(self, tmp_path):
        data = gen_graph(tmp_path)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        run("eig", "--graph", str(data), "--k", "4", "--out", str(a))
        run("eig", "--graph", str(data), "--k", "4", "--dense", "--out", str(b))
        np.testing.assert_allclose(load_basis(a).eigenvalues,
                                   load_basis(b).eigenvalues, atol=1e-8)

    def test_dense_size_guard_is_numerical_failure(self, tmp_path, capsys):
        data = gen_graph(tmp_path)
        code = run("eig", "--graph", str(data), "--dense",
                   "--dense-limit", "10", "--out", str(tmp_path / "x.bin"))
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_bad_k_is_usage_error(self, tmp_path):
        data = gen_graph(tmp_path)
        assert run("eig", "--graph", str(data), "--k", "0",
                   "--out", str(tmp_path / "x.bin")) == 1

    def test_bad_mode_is_usage_error(self, tmp_path):
        data = gen_graph(tmp_path)
        assert run("eig", "--graph", str(data), "--mode", "rw",
                   "--out", str(tmp_path / "x.bin")) == 1

    def test_missing_graph_dir_is_usage_error(self, tmp_path, capsys):
        assert run("eig", "--graph", str(tmp_path / "nowhere"),
                   "--out", str(tmp_path / "x.bin")) == 1
        assert "missing graph file" in capsys.readouterr().err


class TestAnalyze:
    def test_single_check_passes(self, capsys):
        assert run("analyze", "--check", "principal-limit",
                   "--n", "40", "--l-max", "80") == 0
        assert "principal-limit: pass" in capsys.readouterr().out

    def test_all_checks_write_report(self, tmp_path):
        out = tmp_path / "report.json"
        assert run("analyze", "--check", "all", "--n", "30",
                   "--l-max", "80", "--out", str(out)) == 0
        payload = json.loads(out.read_text())
        assert len(payload["checks"]) == 3
        assert all(c["verdict"] for c in payload["checks"])

    def test_insufficient_depth_fails_verification(self, capsys):
        # Five steps cannot reach the limit, so the check runs cleanly but
        # its verdict is negative: exit 3, not an error code.
        assert run("analyze", "--check", "principal-limit",
                   "--n", "40", "--l-max", "5") == 3
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_check_is_usage_error(self):
        assert run("analyze", "--check", "bogus") == 1


class TestTrain:
    def run_train(self, tmp_path, data, *extra):
        out = tmp_path / "runs"
        code = run("train", "--graph", str(data), "--epochs", "25",
                   "--hidden", "8", "--layers", "1", "--k", "4",
                   "--encode-dim", "4", "--out", str(out), *extra)
        return code, out

    def find_run_dir(self, out):
        dirs = [p for p in out.iterdir() if p.is_dir()]
        assert len(dirs) == 1
        assert re.fullmatch(r"run-[0-9a-f]{12}", dirs[0].name)
        return dirs[0]

    def test_spectral_run_writes_artifacts(self, tmp_path, capsys):
        data = gen_graph(tmp_path)
        code, out = self.run_train(tmp_path, data)
        assert code == 0
        run_dir = self.find_run_dir(out)
        settings = json.loads((run_dir / "settings.json").read_text())
        assert settings["epochs"] == 25
        assert settings["model"] == "spectral"
        history = json.loads((run_dir / "history.json").read_text())
        assert 1 <= history["epochs_run"] <= 25
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert set(metrics) >= {"accuracy", "delta_sp", "delta_eo"}
        assert "test acc" in capsys.readouterr().out

    def test_propagation_model_runs(self, tmp_path):
        data = gen_graph(tmp_path)
        code, out = self.run_train(tmp_path, data, "--model", "propagation",
                                   "--steps", "5")
        assert code == 0
        settings = json.loads((self.find_run_dir(out) / "settings.json").read_text())
        assert settings["model"] == "propagation"

    def test_identical_settings_reuse_run_dir(self, tmp_path):
        data = gen_graph(tmp_path)
        _, out = self.run_train(tmp_path, data)
        first = self.find_run_dir(out)
        history = (first / "history.json").read_bytes()
        code, _ = self.run_train(tmp_path, data)
        assert code == 0
        assert self.find_run_dir(out) == first
        assert (first / "history.json").read_bytes() == history

    def test_config_file_supplies_defaults(self, tmp_path):
        data = gen_graph(tmp_path)
        ini = tmp_path / "run.ini"
        ini.write_text("[train]\nepochs = 5\nhidden = 8\n")
        out = tmp_path / "runs"
        assert run("train", "--graph", str(data), "--config", str(ini),
                   "--k", "4", "--encode-dim", "4", "--layers", "1",
                   "--out", str(out)) == 0
        settings = json.loads(
            (self.find_run_dir(out) / "settings.json").read_text())
        assert settings["epochs"] == 5

    def test_explicit_flag_beats_config_file(self, tmp_path):
        data = gen_graph(tmp_path)
        ini = tmp_path / "run.ini"
        ini.write_text("[train]\nepochs = 5\n")
        out = tmp_path / "runs"
        assert run("train", "--graph", str(data), "--config", str(ini),
                   "--epochs", "7", "--hidden", "8", "--k", "4",
                   "--encode-dim", "4", "--layers", "1",
                   "--out", str(out)) == 0
        settings = json.loads(
            (self.find_run_dir(out) / "settings.json").read_text())
        assert settings["epochs"] == 7

    def test_unknown_model_is_usage_error(self, tmp_path):
        data = gen_graph(tmp_path)
        code, _ = self.run_train(tmp_path, data, "--model", "transducer")
        assert code == 1

    def test_missing_splits_is_usage_error(self, tmp_path, capsys):
        data = gen_graph(tmp_path)
        (data / "splits.json").unlink()
        code, _ = self.run_train(tmp_path, data)
        assert code == 1
        assert "missing split file" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_numerical_failure(self, tmp_path, capsys):
        data = gen_graph(tmp_path)
        code, _ = self.run_train(tmp_path, data, "--model", "propagation",
                                 "--lr", "1e308")
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err


class TestBench:
    def test_runtime_suite(self, tmp_path, capsys):
        out = tmp_path / "runtime.json"
        assert run("bench", "--suite", "runtime", "--n", "40", "--k", "3",
                   "--seeds", "0", "--out", str(out)) == 0
        payload = json.loads(out.read_text())
        assert payload["suite"] == "runtime"
        assert payload["full_mean_seconds"] > 0
        assert len(payload["runs"]) == 1
        assert "topk" in capsys.readouterr().out

    def test_ksweep_suite(self, tmp_path):
        out = tmp_path / "ksweep.json"
        assert run("bench", "--suite", "ksweep", "--n", "40",
                   "--k-values", "1,2", "--seeds", "0", "--epochs", "5",
                   "--out", str(out)) == 0
        payload = json.loads(out.read_text())
        assert [r["k"] for r in payload["results"]] == [1, 2]
        for row in payload["results"]:
            assert 0.0 <= row["accuracy_mean"] <= 1.0

    def test_unknown_suite_is_usage_error(self):
        assert run("bench", "--suite", "marathon") == 1

    @pytest.mark.parametrize("bad", ["", "a,b"])
    def test_malformed_k_values(self, bad):
        assert run("bench", "--suite", "ksweep", "--k-values", bad,
                   "--seeds", "0") == 1
