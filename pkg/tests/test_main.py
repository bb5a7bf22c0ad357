"""End-to-end tests of the command-line entry point."""

import json
import logging

import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from conftest import SEVEN_REJECTIONS, SEVEN_STATS, SEVEN_TREE
from main import EXIT_INPUT, EXIT_OK, main


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Run from tmp_path and restore the root logger afterwards."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("DART2_CONFIG", raising=False)
    monkeypatch.delenv("DART2_LOG_DIR", raising=False)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)


def run(tmp_path, *args):
    return main(["--log-dir", str(tmp_path / "logs"), *args])


@pytest.fixture
def seven_files(tmp_path):
    stats = tmp_path / "stats.csv"
    pd.DataFrame({"hypothesis_id": range(1, 8), "value": SEVEN_STATS}).to_csv(stats, index=False)
    tree = tmp_path / "tree.json"
    tree.write_text(json.dumps(SEVEN_TREE))
    return stats, tree


class TestTreeCommand:
    def test_ordering_picks_seven_layers(self, tmp_path, rng):
        ordering = tmp_path / "ranks.csv"
        pd.DataFrame({"hypothesis_id": range(1, 1001), "rank": rng.permutation(1000) + 1}).to_csv(ordering, index=False)
        out = tmp_path / "out" / "tree.json"
        assert run(tmp_path, "tree", "--ordering", str(ordering), "--max-children", "2", "--cm", "5",
                   "-o", str(out)) == EXIT_OK
        doc = json.loads(out.read_text())
        assert (doc["m"], doc["M"], doc["L"]) == (1000, 2, 7)
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_distances_single_layer(self, tmp_path):
        points = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]])
        d = np.linalg.norm(points[:, None] - points[None], axis=-1)
        matrix = tmp_path / "d.csv"
        pd.DataFrame(d, columns=["1", "2", "3"]).to_csv(matrix, index=False)
        out = tmp_path / "tree.json"
        assert run(tmp_path, "tree", "--distances", str(matrix), "--layers", "1", "-o", str(out)) == EXIT_OK
        assert json.loads(out.read_text())["layers"] == []

    def test_malformed_csv(self, tmp_path):
        ordering = tmp_path / "ranks.csv"
        ordering.write_text("hypothesis_id,rank\n1,2\n2,abc\n")
        assert run(tmp_path, "tree", "--ordering", str(ordering), "--layers", "1") == EXIT_INPUT

    def test_missing_file(self, tmp_path):
        assert run(tmp_path, "tree", "--ordering", str(tmp_path / "nope.csv"), "--layers", "1") == EXIT_INPUT

    def test_thresholds_need_distances(self, tmp_path):
        ordering = tmp_path / "ranks.csv"
        ordering.write_text("hypothesis_id,rank\n1,2\n2,1\n")
        out = tmp_path / "tree.json"
        code = run(tmp_path, "tree", "--ordering", str(ordering), "--layers", "2", "--thresholds", "published",
                   "-o", str(out))
        assert code == EXIT_INPUT
        assert not out.exists()


class TestTestCommand:
    def test_seven_rejections(self, tmp_path, seven_files):
        stats, tree = seven_files
        out = tmp_path / "res"
        assert run(tmp_path, "test", "--stats", str(stats), "--tree", str(tree), "--alpha", "0.4",
                   "--baseline", "bh", "--output-dir", str(out)) == EXIT_OK
        rejections = pd.read_csv(out / "rejections.csv")
        assert set(rejections["hypothesis_id"]) == SEVEN_REJECTIONS
        assert list(rejections.columns) == ["hypothesis_id", "rejected_at_layer", "node_id", "threshold"]
        assert (out / "layers.csv").exists() and (out / "bh_rejections.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "test"
        assert manifest["config"]["alpha"] == 0.4

    def test_pvalue_input(self, tmp_path, seven_files):
        _, tree = seven_files
        pvalues = tmp_path / "p.csv"
        pd.DataFrame({"hypothesis_id": range(1, 8), "value": norm.sf(SEVEN_STATS)}).to_csv(pvalues, index=False)
        out = tmp_path / "res"
        assert run(tmp_path, "test", "--pvalues", str(pvalues), "--tree", str(tree), "--alpha", "0.4",
                   "--output-dir", str(out)) == EXIT_OK
        assert set(pd.read_csv(out / "rejections.csv")["hypothesis_id"]) == SEVEN_REJECTIONS

    def test_benchmark_table(self, tmp_path, seven_files):
        stats, tree = seven_files
        benchmark = tmp_path / "bench.csv"
        benchmark.write_text("hypothesis_id\n1\n5\n7\n")
        out = tmp_path / "res"
        assert run(tmp_path, "test", "--stats", str(stats), "--tree", str(tree), "--alpha", "0.4",
                   "--benchmark", str(benchmark), "--output-dir", str(out)) == EXIT_OK
        table = pd.read_csv(out / "benchmark.csv")
        row = table[table["procedure"] == "dart2"].iloc[0]
        assert row["precision"] == pytest.approx(0.5)
        assert row["sensitivity"] == pytest.approx(2 / 3)

    @pytest.mark.parametrize("alpha", ["1.0", "0", "-0.2"])
    def test_alpha_out_of_range(self, tmp_path, seven_files, alpha):
        stats, tree = seven_files
        assert run(tmp_path, "test", "--stats", str(stats), "--tree", str(tree), "--alpha", alpha,
                   "--output-dir", str(tmp_path / "res")) == EXIT_INPUT

    def test_mismatched_hypothesis_count(self, tmp_path, seven_files):
        _, tree = seven_files
        stats = tmp_path / "stats8.csv"
        pd.DataFrame({"hypothesis_id": range(1, 9), "value": SEVEN_STATS + [0.1]}).to_csv(stats, index=False)
        assert run(tmp_path, "test", "--stats", str(stats), "--tree", str(tree),
                   "--output-dir", str(tmp_path / "res")) == EXIT_INPUT

    def test_broken_tree_document(self, tmp_path, seven_files):
        stats, _ = seven_files
        tree = tmp_path / "bad.json"
        tree.write_text(json.dumps({**SEVEN_TREE, "layers": [[[1, 2], [2, 3], [5, 6], [7]], [[1, 2], [3, 4]]]}))
        assert run(tmp_path, "test", "--stats", str(stats), "--tree", str(tree),
                   "--output-dir", str(tmp_path / "res")) == EXIT_INPUT

    def test_argparse_rejects_unknown_mode(self, tmp_path, seven_files):
        stats, tree = seven_files
        with pytest.raises(SystemExit) as exc:
            run(tmp_path, "test", "--stats", str(stats), "--tree", str(tree), "--mode", "greedy")
        assert exc.value.code == 2


class TestSimulateCommand:
    def simulate(self, tmp_path, name, *extra):
        out = tmp_path / name
        code = run(tmp_path, "simulate", "--reps", "1", "--seed", "7", "--tau", "0,1", "--layers", "1,7",
                   "--output-dir", str(out), *extra)
        return code, out

    def test_reproducible(self, tmp_path):
        code_a, a = self.simulate(tmp_path, "a")
        code_b, b = self.simulate(tmp_path, "b")
        assert code_a == code_b == EXIT_OK
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
        assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()

        results = pd.read_csv(a / "results.csv")
        assert len(results) == 2 * 3
        assert set(results["procedure"]) == {"dart2_L1_robust", "dart2_L7_robust", "bh"}
        manifest = json.loads((a / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["config"]["alternatives"] == 216

    def test_threads_do_not_change_output(self, tmp_path):
        _, serial = self.simulate(tmp_path, "serial", "--threads", "1", "--reps", "3")
        _, parallel = self.simulate(tmp_path, "parallel", "--threads", "8", "--reps", "3")
        assert (serial / "results.csv").read_bytes() == (parallel / "results.csv").read_bytes()

    def test_saves_locations(self, tmp_path):
        target = tmp_path / "loc.csv"
        code, _ = self.simulate(tmp_path, "loc", "--save-locations", str(target), "--no-bh")
        assert code == EXIT_OK
        assert list(pd.read_csv(target).columns) == ["hypothesis_id", "x", "y"]

    def test_reads_saved_locations(self, tmp_path):
        target = tmp_path / "loc.csv"
        code_a, a = self.simulate(tmp_path, "a", "--save-locations", str(target))
        code_b, b = self.simulate(tmp_path, "b", "--locations", str(target))
        assert code_a == code_b == EXIT_OK
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
        manifest = json.loads((b / "manifest.json").read_text())
        assert manifest["inputs"] == {"locations": str(target)}
        assert manifest["config"]["location_seed"] is None
        assert manifest["config"]["alternatives"] == 216

    def test_too_few_locations(self, tmp_path):
        target = tmp_path / "loc.csv"
        target.write_text("hypothesis_id,x,y\n1,0.5,0.5\n2,1.0,1.0\n")
        code, _ = self.simulate(tmp_path, "few", "--locations", str(target))
        assert code == EXIT_INPUT

    def test_tau_out_of_range(self, tmp_path):
        assert run(tmp_path, "simulate", "--tau", "1.5", "--reps", "1",
                   "--output-dir", str(tmp_path / "x")) == EXIT_INPUT

    def test_bad_list(self, tmp_path):
        assert run(tmp_path, "simulate", "--layers", "seven", "--reps", "1",
                   "--output-dir", str(tmp_path / "x")) == EXIT_INPUT


class TestConfigCommand:
    def test_show_and_write(self, tmp_path, capsys):
        target = tmp_path / "conf.json"
        assert run(tmp_path, "config", "--write", str(target)) == EXIT_OK
        assert json.loads(target.read_text())["alpha"] == 0.05
        assert '"mode": "robust"' in capsys.readouterr().out

    def test_config_file_feeds_defaults(self, tmp_path, seven_files):
        stats, tree = seven_files
        conf = tmp_path / "conf.json"
        conf.write_text(json.dumps({"alpha": 0.4, "output_directory": str(tmp_path / "from_config")}))
        assert main(["--config", str(conf), "--log-dir", str(tmp_path / "logs"),
                     "test", "--stats", str(stats), "--tree", str(tree)]) == EXIT_OK
        rejections = pd.read_csv(tmp_path / "from_config" / "rejections.csv")
        assert set(rejections["hypothesis_id"]) == SEVEN_REJECTIONS
