import json

import numpy as np
import pytest

from conga import io as cio
from conga.benchmark import BenchmarkPreset, run_benchmark, write_table
from conga.cli import main
from conga.errors import ParseError
from conga.posterior import PosteriorSamples, edge_decision
from conga.sampler import SamplerConfig


def run_cli(*args):
    with pytest.raises(SystemExit) as info:
        main(list(args))
    return info.value.code


class TestCountsCSV:
    def test_headerless(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4\n")
        data, header = cio.read_counts(p)
        assert header is None
        assert data.tolist() == [[1, 2], [3, 4]]

    def test_header_detected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n0,5\n")
        data, header = cio.read_counts(p)
        assert header == ["a", "b"]
        assert data.shape == (1, 2)

    @pytest.mark.parametrize("text,row,col", [
        ("1,2\n3,x\n", 2, 2),
        ("1,2\n3\n", 2, None),
        ("1,2\n-1,0\n", 2, 1),
        ("a,b\n1,2.5\n", 2, 2),
    ])
    def test_errors_carry_location(self, tmp_path, text, row, col):
        p = tmp_path / "d.csv"
        p.write_text(text)
        with pytest.raises(ParseError) as info:
            cio.read_counts(p)
        assert info.value.row == row
        assert info.value.column == col

    def test_empty(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(ParseError):
            cio.read_counts(p)

    def test_round_trip(self, tmp_path):
        data = np.arange(12).reshape(4, 3)
        cio.write_counts(tmp_path / "d.csv", data, ["x", "y", "z"])
        back, header = cio.read_counts(tmp_path / "d.csv")
        assert np.array_equal(back, data) and header == ["x", "y", "z"]


def test_samples_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    s = PosteriorSamples(rng.normal(size=(7, 6)), 4)
    cio.write_samples(tmp_path / "s.csv", s)
    back = cio.read_samples(tmp_path / "s.csv")
    assert back.P == 4
    assert np.array_equal(back.beta, s.beta)
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("beta_0_1,beta_0_2")


def test_graph_json_fields():
    beta = np.column_stack([np.ones(10), np.tile([1.0, -1.0], 5), -np.ones(10)])
    d = cio.graph_to_dict(edge_decision(PosteriorSamples(beta, 3)))
    assert d["schema_version"] == 1
    assert d["nodes"] == ["0", "1", "2"]
    assert [(e["j"], e["l"]) for e in d["edges"]] == [(0, 1), (1, 2)]
    assert set(d["edges"][0]) == {"j", "l", "s", "ci_lower", "ci_upper"}


class TestCLI:
    def test_simulate_shape_and_truth(self, tmp_path):
        assert run_cli("simulate", "--out", str(tmp_path / "a"), "--P", "10", "--n", "100",
                       "--seed", "3") == 0
        data, _ = cio.read_counts(tmp_path / "a" / "data.csv")
        assert data.shape == (100, 10)
        assert run_cli("simulate", "--out", str(tmp_path / "b"), "--P", "4", "--identity") == 0
        assert json.loads((tmp_path / "b" / "truth.json").read_text())["edges"] == []

    def test_simulate_seeds_vary_data_not_truth(self, tmp_path):
        for s in ("1", "2"):
            run_cli("simulate", "--out", str(tmp_path / s), "--P", "6", "--seed", s,
                    "--precision-seed", "9")
        t1 = json.loads((tmp_path / "1" / "truth.json").read_text())["edges"]
        t2 = json.loads((tmp_path / "2" / "truth.json").read_text())["edges"]
        assert t1 == t2
        assert (tmp_path / "1" / "data.csv").read_text() != (tmp_path / "2" / "data.csv").read_text()

    def test_fit_rerun_from_manifest_is_byte_identical(self, tmp_path):
        run_cli("simulate", "--out", str(tmp_path / "s"), "--P", "4", "--n", "30")
        data = str(tmp_path / "s" / "data.csv")
        assert run_cli("fit", "--data", data, "--out", str(tmp_path / "f1"),
                       "--burn", "20", "--keep", "20", "--seed", "5") == 0
        assert run_cli("fit", "--manifest", str(tmp_path / "f1" / "manifest.json"),
                       "--out", str(tmp_path / "f2")) == 0
        for name in ("samples.csv", "graph.json", "edges.csv"):
            assert (tmp_path / "f1" / name).read_bytes() == (tmp_path / "f2" / name).read_bytes()
        man = json.loads((tmp_path / "f1" / "manifest.json").read_text())
        assert man["seed"] == 5 and len(man["config_hash"]) == 64
        assert "beta_accept_rate" in man["acceptance"] and "wall_time_s" in man

    def test_exit_codes(self, tmp_path):
        empty = tmp_path / "e.csv"
        empty.write_text("")
        assert run_cli("fit", "--data", str(empty), "--out", str(tmp_path / "o")) == 2
        big = tmp_path / "b.csv"
        big.write_text("1,2\n3,500\n")
        assert run_cli("fit", "--data", str(big), "--out", str(tmp_path / "o")) == 3
        assert run_cli("fit", "--data", str(tmp_path / "missing.csv"), "--out", "x") == 2
        assert run_cli("benchmark", "--preset", "p99", "--out", "x") == 2
        assert run_cli("fit", "--data", str(big), "--out", "x", "--level", "1.5") == 2

    def test_theta_curve_rows(self, tmp_path):
        run_cli("simulate", "--out", str(tmp_path / "s"), "--P", "5")
        assert run_cli("theta", "--data", str(tmp_path / "s" / "data.csv"), "--out",
                       str(tmp_path / "t"), "--grid-points", "57") == 0
        lines = (tmp_path / "t" / "theta_curve.csv").read_text().splitlines()
        assert len(lines) == 1 + 57
        report = json.loads((tmp_path / "t" / "theta.json").read_text())
        assert 0.05 <= report["theta"] <= 8.0

    def test_theta_constant_data_degenerate(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("2,2\n2,2\n2,2\n")
        assert run_cli("theta", "--data", str(p), "--out", str(tmp_path / "t")) == 0
        report = json.loads((tmp_path / "t" / "theta.json").read_text())
        assert report["degenerate"] and report["theta"] == 0.05

    def test_compare(self, tmp_path):
        rng = np.random.default_rng(0)
        a = PosteriorSamples(rng.normal(0, 0.01, (200, 3)), 3)
        b = PosteriorSamples(a.beta.copy(), 3)
        b.beta[:, 1] += 5.0
        cio.write_samples(tmp_path / "a.csv", a)
        cio.write_samples(tmp_path / "b.csv", b)
        assert run_cli("compare", str(tmp_path / "a.csv"), str(tmp_path / "a.csv"),
                       "--out", str(tmp_path / "same.json")) == 0
        assert json.loads((tmp_path / "same.json").read_text())["similarity"] == 100.0
        run_cli("compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--out",
                str(tmp_path / "d.json"))
        flagged = json.loads((tmp_path / "d.json").read_text())["flagged"]
        assert [(f["j"], f["l"]) for f in flagged] == [(0, 2)]


class TestBenchmark:
    preset = BenchmarkPreset(P=4, n=30)
    cfg = SamplerConfig(n_burn=10, n_keep=10)

    def test_single_replication_row(self):
        res = run_benchmark(self.preset, 1, base_seed=3, config=self.cfg)
        assert len(res.rows) == 1
        assert res.rows[0].seed == 3 and res.rows[0].status == "ok"

    def test_table_reproducible(self, tmp_path):
        for name in ("a", "b"):
            write_table(tmp_path / name, run_benchmark(self.preset, 2, base_seed=1, config=self.cfg))
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_failures_recorded_not_fatal(self):
        # B=1 makes nearly every replication hit the truncation check
        res = run_benchmark(self.preset, 2, config=SamplerConfig(n_burn=2, n_keep=2, B=1))
        assert res.n_failed == 2
        assert "TruncationError" in res.rows[0].error
        assert np.isnan(res.mean_p1)
