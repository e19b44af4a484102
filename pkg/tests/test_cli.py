import json

import numpy as np
import pytest

from hsag.core import ConfigError, DataError
from hsag import cli, solver


def synthetic_args(out_dir, extra=()):
    return ["--problem", "synthetic", "--algo", "v2", "--iters", "300",
            "--seed", "1", "--seed", "2", "--seed", "3",
            "--out", str(out_dir), *extra]


@pytest.fixture
def small_synthetic_config(tmp_path):
    cfg = {"synthetic_p": 5, "synthetic_m": 8, "reference_iters": 300}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestParseConfig:
    def test_repeatable_flags(self):
        spec = cli.parse_config(["--problem", "synthetic", "--algo", "v2",
                                 "--iters", "100000", "--seed", "1", "--seed", "2"])
        assert spec.seeds == [1, 2] and spec.algos == ["v2"]
        assert spec.iters == 100000

    def test_missing_data_for_matrix_completion(self):
        with pytest.raises(ConfigError, match="MissingData"):
            cli.parse_config(["--problem", "mc-box", "--algo", "v1"])

    def test_paper_default_beta0(self):
        spec = cli.parse_config(["--problem", "mc-box", "--algo", "v1",
                                 "--data", "whatever"])
        assert spec.resolved_beta0() == 10.0
        spec = cli.parse_config(["--problem", "kmeans", "--algo", "v2",
                                 "--data", "pts", "--tau", "3"])
        assert spec.resolved_beta0() == 7.0
        spec = cli.parse_config(["--problem", "sparsest-cut", "--algo", "v2",
                                 "--data", "g"])
        assert spec.resolved_beta0() == 100.0

    def test_unknown_flag_rejected(self):
        with pytest.raises(ConfigError):
            cli.parse_config(["--problem", "synthetic", "--frobnicate"])

    def test_config_file_with_flag_override(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"problem": "synthetic", "iters": 50,
                                    "synthetic_p": 4}))
        spec = cli.parse_config(["--config", str(path), "--iters", "75"])
        assert spec.problem == "synthetic" and spec.iters == 75
        assert spec.synthetic_p == 4

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"no_such_field": 1}))
        with pytest.raises(ConfigError):
            cli.parse_config(["--config", str(path)])

    def test_mode_conflict_named(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"problem": "mc-box", "mc_mode": "prox",
                                    "algos": ["v2"], "data": "x"}))
        with pytest.raises(ConfigError, match="v2"):
            cli.parse_config(["--config", str(path)])

    def test_log_every_values(self):
        spec = cli.parse_config(["--problem", "synthetic", "--log-every", "50"])
        assert spec.log_every == 50
        spec = cli.parse_config(["--problem", "synthetic", "--log-every", "geometric"])
        assert spec.log_every == "geometric"
        with pytest.raises(ConfigError):
            cli.parse_config(["--problem", "synthetic", "--log-every", "soon"])


class TestRunBenchmark:
    def test_synthetic_sweep_outputs(self, tmp_path, small_synthetic_config):
        out = tmp_path / "out"
        rc = cli.main(["--config", str(small_synthetic_config),
                       *synthetic_args(out)])
        assert rc == 0
        files = sorted(p.name for p in out.iterdir())
        assert files == ["summary.json", "synthetic_v2_seed1.csv",
                         "synthetic_v2_seed2.csv", "synthetic_v2_seed3.csv"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["schema_version"] == 1
        assert len(summary["runs"]) == 3
        assert "infeas_loglog" in summary["per_algo"]["v2"]["slopes"]
        assert summary["theory"] is not None

    def test_csv_contract_header(self, tmp_path, small_synthetic_config):
        out = tmp_path / "out"
        assert cli.main(["--config", str(small_synthetic_config),
                         *synthetic_args(out)]) == 0
        first = (out / "synthetic_v2_seed1.csv").read_text().splitlines()[0]
        assert first == ("k,wall_ms,f_value,F_value,rel_subopt,infeas_dist,"
                         "beta_k,eta_k,f_samples,g_samples,l1_err_f,l1_err_g")

    def test_empty_cells_for_absent_diagnostics(self, tmp_path, small_synthetic_config):
        out = tmp_path / "out"
        cli.main(["--config", str(small_synthetic_config), *synthetic_args(out)])
        rows = (out / "synthetic_v2_seed1.csv").read_text().splitlines()[1:]
        for row in rows:
            assert row.endswith(",,")  # diagnostics not requested, left empty

    def test_rerun_reproduces_bodies_modulo_wall_time(self, tmp_path, small_synthetic_config):
        def strip_wall(text):
            rows = [line.split(",") for line in text.splitlines()]
            return [",".join(cells[:1] + cells[2:]) for cells in rows]

        out1, out2 = tmp_path / "a", tmp_path / "b"
        cli.main(["--config", str(small_synthetic_config), *synthetic_args(out1)])
        cli.main(["--config", str(small_synthetic_config), *synthetic_args(out2)])
        for name in ("synthetic_v2_seed1.csv", "synthetic_v2_seed2.csv"):
            assert strip_wall((out1 / name).read_text()) == strip_wall((out2 / name).read_text())

    def test_jsonl_format(self, tmp_path, small_synthetic_config):
        out = tmp_path / "out"
        rc = cli.main(["--config", str(small_synthetic_config),
                       *synthetic_args(out, extra=["--format", "jsonl", "--seed", "5"])])
        assert rc == 0
        lines = (out / "synthetic_v2_seed5.jsonl").read_text().splitlines()
        row = json.loads(lines[0])
        assert row["k"] == 0 and "beta_k" in row

    def test_diagnostics_columns_populated(self, tmp_path, small_synthetic_config):
        out = tmp_path / "out"
        cli.main(["--config", str(small_synthetic_config),
                  *synthetic_args(out, extra=["--diagnostics"])])
        lines = (out / "synthetic_v2_seed1.csv").read_text().splitlines()
        last = lines[-1].split(",")
        assert last[-1] != "" and last[-2] != ""

    def test_sparsest_cut_constraint_bookkeeping(self, tmp_path):
        rng = np.random.default_rng(8)
        p = 25
        pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
        chosen = [pairs[i] for i in rng.choice(len(pairs), size=181, replace=False)]
        graph = tmp_path / "g.mtx"
        graph.write_text("\n".join(
            ["%%MatrixMarket matrix coordinate pattern symmetric", f"{p} {p} 181"]
            + [f"{i + 1} {j + 1}" for i, j in chosen]) + "\n")
        out = tmp_path / "out"
        rc = cli.main(["--problem", "sparsest-cut", "--data", str(graph),
                       "--algo", "v2", "--iters", "200", "--seed", "0",
                       "--out", str(out)])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["problem"]["m"] == 13801
        assert summary["problem"]["beta0"] == 100.0
        g_samples = summary["per_algo"]["v2"]["g_samples"]
        ks = summary["per_algo"]["v2"]["k"]
        # one sample per iteration: constraint epochs are g_samples / m
        assert g_samples[-1] == ks[-1]
        assert g_samples[-1] / summary["problem"]["m"] == pytest.approx(200 / 13801)


class TestExitCodes:
    def test_config_error(self):
        assert cli.main(["--problem", "mc-box", "--algo", "v1"]) == 2

    def test_data_error(self, tmp_path):
        rc = cli.main(["--problem", "mc-box", "--algo", "v1",
                       "--data", str(tmp_path / "missing.data"),
                       "--out", str(tmp_path / "out")])
        assert rc == 3

    def test_numeric_failure(self, tmp_path, small_synthetic_config, monkeypatch):
        real_run = solver.run

        def doomed_run(inst, cfg):
            trace = solver.IterateTrace()
            raise solver.NumericError("synthetic blow-up", trace)

        monkeypatch.setattr(cli.sol, "run", doomed_run)
        rc = cli.main(["--config", str(small_synthetic_config),
                       *synthetic_args(tmp_path / "out")])
        assert rc == 4


class TestParallelSweep:
    def test_thread_cap_env(self, tmp_path, small_synthetic_config, monkeypatch):
        monkeypatch.setenv("HSAG_THREADS", "2")
        out = tmp_path / "out"
        rc = cli.main(["--config", str(small_synthetic_config), *synthetic_args(out)])
        assert rc == 0
        assert len(list(out.glob("*.csv"))) == 3
