import csv
import json
import os
import textwrap

import numpy as np
import pytest

from stormc.exceptions import ConfigError
from stormc.harness import cli, metrics
from stormc.harness.config import parse_config

QUAD = """\
problem:
  kind: quadtoy
  seed: 1
  params: {d: 3, m: 6, n: 5}
algorithms: [storm-c, scgd]
plan:
  mode: explicit
  params: {eta: 0.1, eps: 0.1, a_g: 0.1, a_dg: 0.1, a_phi: 0.1, B_g: 4, B_dg: 4, B_f: 4,
           S_g: 8, S_dg: 8, S_f: 8, T: %d}
diagnostics: {cadence: 5}
seeds: [0, 1]
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


class TestConfig:
    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config(QUAD % 10 + "colour: blue\n")
        assert "line 12" in str(info.value) and "colour" in str(info.value)

    def test_nested_unknown_key(self):
        text = (QUAD % 10).replace("d: 3,", "d: 3, depth: 2,")
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert "line 4" in str(info.value) and "depth" in str(info.value)

    def test_empty_algorithms(self):
        with pytest.raises(ConfigError):
            parse_config((QUAD % 10).replace("[storm-c, scgd]", "[]"))

    def test_explicit_plan_missing_field(self):
        with pytest.raises(ConfigError):
            parse_config((QUAD % 10).replace(" T: 10", ""))

    def test_shipped_configs_parse(self):
        root = os.path.join(os.path.dirname(__file__), "..", "configs")
        for name in sorted(os.listdir(root)):
            conf = parse_config(open(os.path.join(root, name)).read())
            assert conf.algorithms


class TestRun:
    def test_unknown_key_exit_code(self, tmp_path, capsys):
        path = write(tmp_path, QUAD % 10 + "bogus: 1\n")
        assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_zero_iterations_writes_init_row(self, tmp_path):
        path = write(tmp_path, QUAD % 0)
        assert cli.main(["run", "--config", path, "--out", str(tmp_path), "--seed", "0"]) == 0
        csv_path = tmp_path / "storm-c_quadtoy_seed0.csv"
        assert csv_path.read_text().splitlines()[0] == ",".join(metrics.CSV_HEADER)
        rows = metrics.read_metrics(csv_path)
        assert len(rows) == 1 and rows[0]["iter"] == 0 and rows[0]["ifo"] == 24

    def test_byte_identical_reruns(self, tmp_path):
        path = write(tmp_path, QUAD % 30)
        for sub in ("a", "b"):
            assert cli.main(["run", "--config", path, "--out", str(tmp_path / sub)]) == 0
        files = sorted(os.listdir(tmp_path / "a"))
        assert len(files) == 4
        for name in files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_env_out(self, tmp_path, monkeypatch):
        path = write(tmp_path, QUAD % 5)
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
        assert cli.main(["run", "--config", path, "--seed", "1"]) == 0
        assert (tmp_path / "env" / "scgd_quadtoy_seed1.csv").exists()

    def test_ifo_column_is_formula(self, tmp_path):
        path = write(tmp_path, QUAD % 20)
        cli.main(["run", "--config", path, "--out", str(tmp_path), "--seed", "0"])
        rows = metrics.read_metrics(tmp_path / "storm-c_quadtoy_seed0.csv")
        assert [r["iter"] for r in rows] == list(range(21))
        for row in rows:
            assert row["ifo"] == 24 + 12 * row["iter"]

    def test_numerical_failure_exit_and_partial_csv(self, tmp_path):
        text = (QUAD % 50).replace("eta: 0.1", "eta: 1.0e+300").replace("eps: 0.1", "eps: 1.0e+300")
        path = write(tmp_path, text.replace("[storm-c, scgd]", "[storm-c]"))
        code = cli.main(["run", "--config", path, "--out", str(tmp_path), "--seed", "0"])
        assert code == cli.EXIT_NUMERICAL
        rows = metrics.read_metrics(tmp_path / "storm-c_quadtoy_seed0.csv")
        assert 1 <= len(rows) < 51


class TestBench:
    def test_single_seed_aggregate_equals_run(self, tmp_path):
        path = write(tmp_path, (QUAD % 20).replace("[storm-c, scgd]", "[storm-c]"))
        assert cli.main(["bench", "--config", path, "--out", str(tmp_path), "--seed", "0"]) == 0
        raw = [r for r in metrics.read_metrics(tmp_path / "storm-c_quadtoy_seed0.csv")
               if not np.isnan(r["grad_norm"])]
        with open(tmp_path / "bench_quadtoy.csv", newline="") as fh:
            agg = list(csv.DictReader(fh))
        assert tuple(agg[0]) == metrics.AGGREGATE_HEADER
        assert len(agg) == len(raw) == 5
        for a, r in zip(agg, raw):
            assert int(a["ifo"]) == r["ifo"] and a["n_runs"] == "1"
            for q in ("q25", "median", "q75"):
                assert float(a[f"obj_gap_{q}"]) == r["obj_gap"]
                assert float(a[f"grad_norm_{q}"]) == r["grad_norm"]


class TestPlan:
    UNIT = "Delta=1,L_f=1,L_g=1,M_f=1,M_g=1,H1=1,H2=1,H3=1,L_Phi=1"

    def test_json_unit_example(self, capsys):
        assert cli.main(["plan", "--eps", "0.1", "--constants", self.UNIT, "--json"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["hyper"]["eta"] == pytest.approx(1.0)
        assert out["ifo"] > 0 and "condition_lhs" in out

    def test_eps_outside_window(self, capsys):
        assert cli.main(["plan", "--eps", "100", "--constants", self.UNIT]) == cli.EXIT_CONFIG

    def test_unknown_constant(self):
        assert cli.main(["plan", "--eps", "0.1", "--constants", self.UNIT + ",Q=1"]) == 1


def test_gradcheck_cli(capsys):
    assert cli.main(["gradcheck", "--problem", "quadtoy", "--points", "3"]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert reports[0]["passed"] and len(reports[0]["errors"]) == 3


def test_verify_invariants_cli(capsys):
    assert cli.main(["verify", "--suite", "invariants"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_metrics_cells_roundtrip(tmp_path):
    from stormc.optimizer import run_storm_c
    from stormc.harness.verify import small_hyper
    from stormc.problems import QuadToyProblem

    problem = QuadToyProblem.random(seed=0)
    rec = run_storm_c(problem, small_hyper(T=10), 0, cadence=1)
    path = tmp_path / "m.csv"
    metrics.write_record(rec, path)
    rows = metrics.read_metrics(path)
    np.testing.assert_array_equal([r["grad_norm"] for r in rows], rec.column("grad_norm"))
