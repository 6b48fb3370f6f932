import csv
import json
import logging

import numpy as np
import pytest

from spfff.cli import (BENCHMARK_COLUMNS, EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_USAGE,
                       BenchmarkGrid, main, read_config, run_benchmark)
from spfff.core import Design, write_design


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestGenerate:
    ARGS = ["generate", "--type", "spfff", "-n", "30", "-d", "4", "--dwp", "2", "--nwp", "8",
            "--seed", "1"]

    def test_happy_path(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        assert main(self.ARGS + ["-o", str(out)]) == EXIT_OK
        assert out.exists() and (tmp_path / "d.json").exists()
        assert "n=30 d=4 n_wp=8 seed=1" in capsys.readouterr().out
        r = rows(out)
        assert len(r) == 30 and len({x["wp_id"] for x in r}) == 8

    def test_bad_spec(self, tmp_path, capsys):
        args = ["generate", "-n", "30", "-d", "4", "--dwp", "2", "--nwp", "40", "-o", str(tmp_path / "x.csv")]
        assert main(args) == EXIT_INVALID
        assert "n_overall >= n_wp" in capsys.readouterr().err

    def test_byte_identical(self, tmp_path):
        main(self.ARGS + ["-o", str(tmp_path / "a.csv")])
        main(self.ARGS + ["-o", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_scaled_and_history(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(self.ARGS + ["--scaled", "--history", str(tmp_path / "h.csv"), "-o", str(out)]) == 0
        meta = json.loads((tmp_path / "s.json").read_text())
        assert meta["scaled"] is True
        pts = np.array([[float(v) for k, v in r.items() if k.startswith("x")] for r in rows(out)])
        assert pts.min(axis=0).tolist() == [-1.0] * 4 and pts.max(axis=0).tolist() == [1.0] * 4
        assert len(rows(tmp_path / "h.csv")) == 1500 - 30 + 30 - 8

    @pytest.mark.parametrize("kind", ["fff", "maximin_lhs", "random_lhs", "random"])
    def test_other_types(self, tmp_path, kind):
        out = tmp_path / f"{kind}.csv"
        assert main(["generate", "--type", kind, "-n", "12", "-d", "2", "-o", str(out)]) == 0
        assert len(rows(out)) == 12

    def test_global_seed_before_subcommand(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["--seed", "5", "generate", "-n", "10", "-d", "2", "--nwp", "4", "-o", str(a)])
        main(["generate", "-n", "10", "-d", "2", "--nwp", "4", "--seed", "5", "-o", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_arguments(self):
        assert main(["generate", "-n", "ten"]) == EXIT_USAGE

    def test_io_failure(self, tmp_path):
        assert main(self.ARGS + ["-o", str(tmp_path / "missing" / "d.csv")]) == EXIT_IO


class TestEvaluate:
    def test_diagonal_design(self, tmp_path, capsys):
        d = Design(points=[[-1, -1], [1, 1]], wp_id=[1, 2], d_wp=1)
        write_design(d, tmp_path / "two.csv")
        assert main(["evaluate", str(tmp_path / "two.csv"), "--mc-samples", "1000",
                     "-o", str(tmp_path / "r.csv")]) == 0
        (r,) = rows(tmp_path / "r.csv")
        assert float(r["maximin"]) == pytest.approx(2.828427, abs=1e-6)
        assert r["i_opt_iid"] == "" and r["i_opt_sp"] == ""
        assert r["phi_2"] == "0.125" and r["mc_samples"] == "1000"

    def test_two_designs_in_order(self, tmp_path, rng):
        for name in ("zeta", "alpha"):
            write_design(Design(points=rng.uniform(-1, 1, (10, 2)), wp_id=np.arange(1, 11), d_wp=0),
                         tmp_path / f"{name}.csv")
        main(["evaluate", str(tmp_path / "zeta.csv"), str(tmp_path / "alpha.csv"),
              "--mc-samples", "500", "-o", str(tmp_path / "r.csv")])
        r = rows(tmp_path / "r.csv")
        assert [x["design_id"] for x in r] == ["zeta", "alpha"]
        assert all(x["i_opt_iid"] for x in r)

    def test_invalid_file(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("run,wp_id,x1\n1,1,3.0\n")
        (tmp_path / "bad.json").write_text('{"d_wp": 0}')
        assert main(["evaluate", str(tmp_path / "bad.csv")]) == EXIT_INVALID
        assert "bad.csv" in capsys.readouterr().err


SMALL = dict(dims=[(2, 1)], run_counts=[20, 25], wp_counts=[8, 16], seeds=[1, 2],
             design_types=["spfff", "spfff_scaled", "fff", "random"], mc_samples=2000)


class TestBenchmark:
    def test_counting_and_exclusion(self, caplog):
        grid = BenchmarkGrid(**SMALL)
        with caplog.at_level(logging.WARNING, logger="spfff"):
            out = run_benchmark(grid)
        assert "n=20, n_wp=16" in caplog.text
        assert len(out) == grid.expected_rows() == 3 * 4 * 2
        assert not any(r["n"] == 20 and r["grid_n_wp"] == 16 for r in out)
        ids = [r["design_id"] for r in out]
        assert len(ids) == len(set(ids))

    def test_default_grid_count(self):
        assert len(BenchmarkGrid().cells()) == 2 * 7 * 3 - 2

    def test_rows_match_standalone_generation(self):
        from spfff.core import DesignSpec
        from spfff.criteria import maximin
        from spfff.ward import spfff_design
        out = run_benchmark(BenchmarkGrid(**dict(SMALL, design_types=["spfff"])))
        r = next(x for x in out if x["n"] == 25 and x["grid_n_wp"] == 16 and x["seed"] == 2)
        d = spfff_design(DesignSpec.make(25, 16, 2, 1, seed=2))
        assert r["maximin"] == maximin(d)

    def test_cli_deterministic_with_config(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("# small grid\ndims = 2:1\nrun_counts = 20,25\nwp_counts = 8,16\n"
                       "seeds = 1-2\ndesign_types = spfff,maximin_lhs\nmc_samples = 2000\n")
        for name in ("a.csv", "b.csv"):
            assert main(["benchmark", "--config", str(cfg), "-o", str(tmp_path / name)]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        r = rows(tmp_path / "a.csv")
        assert list(r[0]) == BENCHMARK_COLUMNS and len(r) == 3 * 2 * 2
        meta = json.loads((tmp_path / "a.json").read_text())
        assert meta["replications"] == 2

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("dims = 2:1\nrun_counts = 20\nwp_counts = 8\nseeds = 1-3\n"
                       "design_types = random\nmc_samples = 100\n")
        main(["benchmark", "--config", str(cfg), "--seeds", "1", "-o", str(tmp_path / "o.csv")])
        assert len(rows(tmp_path / "o.csv")) == 1

    def test_workers_same_output(self):
        grid = BenchmarkGrid(**dict(SMALL, design_types=["spfff", "random"]))
        assert run_benchmark(grid, workers=2) == run_benchmark(grid, workers=1)

    def test_external_designs(self, tmp_path):
        pts = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]] * 2, dtype=float)
        write_design(Design(points=pts, wp_id=[1, 1, 2, 2, 3, 3, 4, 4], d_wp=0), tmp_path / "iopt.csv")
        grid = BenchmarkGrid(**dict(SMALL, design_types=["random", "external"],
                                    external=[str(tmp_path / "iopt.csv")]))
        out = run_benchmark(grid)
        assert len(out) == grid.expected_rows()
        ext = out[-1]
        assert ext["design_type"] == "external" and ext["maximin"] == 0.0

    def test_unknown_config_key(self, tmp_path):
        (tmp_path / "c.cfg").write_text("colour = red\n")
        assert main(["benchmark", "--config", str(tmp_path / "c.cfg")]) == EXIT_USAGE

    def test_read_config(self, tmp_path):
        (tmp_path / "c.cfg").write_text("dims = 2:1, 4:2\nseeds = 1-3,7\nworkers = 2\n")
        assert read_config(tmp_path / "c.cfg") == {"dims": [(2, 1), (4, 2)], "seeds": [1, 2, 3, 7],
                                                   "workers": 2}

    def test_config_accepts_flag_spellings(self, tmp_path):
        (tmp_path / "c.cfg").write_text("runs = 20,25\nwps = 8\ntypes = spfff,random\n")
        assert read_config(tmp_path / "c.cfg") == {"run_counts": [20, 25], "wp_counts": [8],
                                                   "design_types": ["spfff", "random"]}


class TestPredictStudy:
    def test_rows(self, tmp_path):
        out = tmp_path / "m.csv"
        args = ["predict-study", "--types", "spfff", "--runs", "20,50", "--seeds", "1",
                "--validation-m", "20000", "-o", str(out)]
        assert main(args) == 0
        r = rows(out)
        assert len(r) == 4
        for x in r:
            if x["model_kind"] == "least-squares":
                assert np.isfinite(float(x["rmse"]))
            else:
                assert 0 <= float(x["accuracy"]) <= 1
        main(args[:-1] + [str(tmp_path / "m2.csv")])
        assert out.read_bytes() == (tmp_path / "m2.csv").read_bytes()

    def test_rank_failure_recorded(self, tmp_path):
        out = tmp_path / "m.csv"
        main(["predict-study", "--types", "spfff", "--runs", "12", "--nwp", "4", "--seeds", "1",
              "--validation-m", "1000", "-o", str(out)])
        r = rows(out)
        assert len(r) == 2
        assert all(x["convergence"].startswith("failed") for x in r)
