"""CLI commands: determinism, schemas, exit codes, config precedence, plots."""

import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from i2o import cli, serialize, theory
from i2o.cli import (
    AVGCASE_HEADER,
    SWEEP_HEADER,
    ConfigError,
    CsvFormatError,
    main,
    parse_seeds,
    read_csv,
)
from i2o.inner import AffineInnerProblem
from i2o.linops import SeededSource, gaussian_matrix
from i2o.metalin import LinearTask


def run_main(args):
    return main([str(a) for a in args])


class TestConfigParsing:
    def test_seed_ranges_and_lists(self):
        assert parse_seeds("0..3") == [0, 1, 2, 3]
        assert parse_seeds("4,7,9") == [4, 7, 9]
        with pytest.raises(ConfigError):
            parse_seeds("1,1")
        with pytest.raises(ConfigError):
            parse_seeds("x..y")

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("# sweep settings\nn = 10\nseeds = 0..1\ndelta_min = -5\ndelta_max = 5\n")
        out = tmp_path / "a"
        assert run_main(["sweep", "--config", cfg, "--out", out, "--n", "12"]) == 0
        rows = read_csv(out / "sweep.csv", SWEEP_HEADER)
        assert {int(r["n"]) for r in rows} == {12}  # flag wins over file
        assert {int(r["seed"]) for r in rows} == {0, 1}  # file value used

    def test_bad_config_line_is_exit_one(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("this is not a key value pair\n")
        assert run_main(["sweep", "--config", cfg, "--out", tmp_path]) == 1

    def test_missing_config_file_is_exit_one(self, tmp_path):
        assert run_main(["sweep", "--config", tmp_path / "nope.txt",
                         "--out", tmp_path]) == 1

    def test_empty_delta_grid_rejected(self, tmp_path):
        assert run_main(["sweep", "--out", tmp_path, "--seeds", "0",
                         "--delta-min", "5", "--delta-max", "1"]) == 1


class TestSweepCommand:
    def test_csv_schema_and_reread(self, tmp_path):
        assert run_main(["sweep", "--out", tmp_path, "--seeds", "0..2",
                         "--delta-min", "-10", "--delta-max", "30"]) == 0
        csv_path = tmp_path / "sweep.csv"
        assert csv_path.read_text().splitlines()[0] == SWEEP_HEADER
        rows = read_csv(csv_path, SWEEP_HEADER)
        assert len(rows) == 3 * 41
        for r in rows:
            assert r["d_gap"] == r["loss_n_dn"] - r["loss_n"] or \
                abs(r["d_gap"] - (r["loss_n_dn"] - r["loss_n"])) < 1e-12

    def test_default_dims_put_minimum_loss_at_zero_delta(self, tmp_path):
        # overparametrized defaults: the smallest loss row sits at delta_n = 0
        assert run_main(["sweep", "--out", tmp_path, "--seeds", "0..4",
                         "--delta-min", "-19", "--delta-max", "200"]) == 0
        rows = read_csv(tmp_path / "sweep.csv", SWEEP_HEADER)
        for seed in range(5):
            mine = [r for r in rows if r["seed"] == seed]
            best = min(mine, key=lambda r: r["loss_n_dn"])
            at_zero = next(r for r in mine if r["delta_n"] == 0)
            assert at_zero["loss_n_dn"] <= best["loss_n_dn"] + 1e-7

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run_main(["sweep", "--out", out, "--seeds", "0..4"]) == 0
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_threads_do_not_change_bytes(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_main(["sweep", "--out", a, "--seeds", "0..5"]) == 0
        monkeypatch.setenv("I2O_THREADS", "4")
        assert run_main(["sweep", "--out", b, "--seeds", "0..5"]) == 0
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_fixture_inputs(self, tmp_path):
        p, l, z0 = theory.surjective_instance(SeededSource(0))
        with open(tmp_path / "p.txt", "w") as f:
            serialize.save_problem(f, p)
        with open(tmp_path / "l.txt", "w") as f:
            serialize.save_outer_loss(f, l)
        assert run_main(["sweep", "--out", tmp_path, "--problem", tmp_path / "p.txt",
                         "--outer", tmp_path / "l.txt", "--n", "15",
                         "--delta-min", "-4", "--delta-max", "4"]) == 0
        rows = read_csv(tmp_path / "sweep.csv", SWEEP_HEADER)
        assert len(rows) == 9

    def test_report_violation_exits_two(self, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise theory.BoundViolationError("synthetic violation")
        monkeypatch.setattr(theory, "sweep", boom)
        assert run_main(["sweep", "--out", tmp_path, "--seeds", "0"]) == 2


class TestValidateCommand:
    def test_valid_fixture_passes(self, tmp_path, capsys):
        p, _, _ = theory.surjective_instance(SeededSource(1))
        with open(tmp_path / "p.txt", "w") as f:
            serialize.save_problem(f, p)
        assert run_main(["validate", "--problem", tmp_path / "p.txt"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_invalid_fixture_exits_two(self, tmp_path, capsys):
        bad = AffineInnerProblem(k_in=np.eye(2), b=-np.eye(2), u=np.eye(2),
                                 c=np.zeros(2))
        with open(tmp_path / "p.txt", "w") as f:
            serialize.save_problem(f, bad)
        assert run_main(["validate", "--problem", tmp_path / "p.txt"]) == 2
        out = capsys.readouterr().out
        assert "FAIL" in out and "nonpositive real part" in out

    def test_missing_problem_flag_exits_one(self):
        assert run_main(["validate"]) == 1


class TestAvgcaseCommand:
    def test_schema_and_trend(self, tmp_path):
        assert run_main(["avgcase", "--out", tmp_path, "--seeds", "0..7",
                         "--d-z", "12", "--d-theta-grid", "2,6,12",
                         "--n-grid", "10,50"]) == 0
        rows = read_csv(tmp_path / "avgcase.csv", AVGCASE_HEADER)
        assert len(rows) == 8 * 3 * 2
        means = {}
        for dt in (2, 6, 12):
            vals = [r["neg_lower_bound"] for r in rows if r["d_theta"] == dt]
            means[dt] = np.mean(vals)
        assert means[2] >= means[6] >= means[12]

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run_main(["avgcase", "--out", out, "--seeds", "0..5",
                             "--d-z", "8", "--d-theta-grid", "2,8",
                             "--n-grid", "10"]) == 0
        assert (a / "avgcase.csv").read_bytes() == (b / "avgcase.csv").read_bytes()


class TestOtherCommands:
    def test_lowerbound_scan(self, tmp_path):
        assert run_main(["lowerbound-scan", "--out", tmp_path,
                         "--instances", "5"]) == 0
        rows = read_csv(tmp_path / "lowerbound-scan.csv", SWEEP_HEADER)
        assert {int(r["seed"]) for r in rows} == {0, 1, 2, 3, 4}
        for r in rows:
            assert r["d_gap"] >= r["lower_bound"] - 1e-7 * (1 + abs(r["lower_bound"]))

    def test_nonconvex_scan(self, tmp_path):
        assert run_main(["nonconvex-scan", "--out", tmp_path, "--seeds", "0..3",
                         "--d-theta-grid", "2,5,10"]) == 0
        rows = read_csv(tmp_path / "nonconvex-scan.csv", AVGCASE_HEADER)
        full = [r for r in rows if r["d_theta"] == 10]
        assert full and all(r["neg_lower_bound"] <= 1e-9 for r in full)
        assert all(math.isnan(r["rhs_neg_bound"]) for r in rows)

    def test_ift_vs_unroll(self, tmp_path):
        assert run_main(["ift-vs-unroll", "--out", tmp_path, "--seeds", "0..2"]) == 0
        rows = read_csv(tmp_path / "ift-vs-unroll.csv", cli.IFT_HEADER)
        for r in rows:
            assert abs(r["loss_ift"] - r["loss_unrolled"]) <= 1e-7 * (1 + r["loss_unrolled"])
            assert max(r["res_unrolled"], r["res_ift"]) <= 1e-6

    def test_imaml_demo_conflicting_pairs(self, tmp_path):
        assert run_main(["imaml-demo", "--out", tmp_path, "--n-tasks", "2",
                         "--conflicting", "--delta-min", "-40",
                         "--delta-max", "100"]) == 0
        rows = read_csv(tmp_path / "imaml-demo.csv", SWEEP_HEADER)
        assert all(r["lower_bound"] < -1e-6 for r in rows)

    def test_imaml_demo_task_fixture(self, tmp_path):
        src = SeededSource(0)
        x = gaussian_matrix(src.child(0), 4, 2)
        task = LinearTask(x_train=x, y_train=x @ [1.0, -1.0],
                          x_val=x, y_val=x @ [1.0, -1.0])
        with open(tmp_path / "tasks.txt", "w") as f:
            serialize.save_tasks(f, [task])
        assert run_main(["imaml-demo", "--out", tmp_path, "--tasks",
                         tmp_path / "tasks.txt", "--n", "30",
                         "--delta-min", "-10", "--delta-max", "10"]) == 0


class TestPlot:
    def _sweep_csv(self, tmp_path):
        assert run_main(["sweep", "--out", tmp_path, "--seeds", "0..2",
                         "--delta-min", "-10", "--delta-max", "20"]) == 0
        return tmp_path / "sweep.csv"

    def test_sweep_plot_structure(self, tmp_path):
        csv_path = self._sweep_csv(tmp_path)
        svg_path = cli.plot(csv_path, "sweep", tmp_path / "sweep.svg")
        root = ET.parse(svg_path).getroot()
        assert root.tag.endswith("svg")
        ns = {"s": "http://www.w3.org/2000/svg"}
        polylines = root.findall("s:polyline", ns)
        assert len(polylines) == 3  # one series per seed
        dashed = [e for e in root.findall("s:line", ns)
                  if e.get("stroke-dasharray")]
        assert len(dashed) == 1  # reference line at delta_n = 0

    def test_avgcase_plot_one_series_per_n(self, tmp_path):
        assert run_main(["avgcase", "--out", tmp_path, "--seeds", "0..3",
                         "--d-z", "8", "--d-theta-grid", "2,4,8",
                         "--n-grid", "10,30,90"]) == 0
        svg_path = cli.plot(tmp_path / "avgcase.csv", "avgcase",
                            tmp_path / "avgcase.svg")
        root = ET.parse(svg_path).getroot()
        ns = {"s": "http://www.w3.org/2000/svg"}
        assert len(root.findall("s:polyline", ns)) == 3

    def test_header_only_csv_errors_without_writing(self, tmp_path):
        csv_path = tmp_path / "empty.csv"
        csv_path.write_text(SWEEP_HEADER + "\n")
        target = tmp_path / "empty.svg"
        with pytest.raises(CsvFormatError):
            cli.plot(csv_path, "sweep", target)
        assert not target.exists()

    def test_malformed_line_number_reported(self, tmp_path):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text(SWEEP_HEADER + "\n0,20,0,1.0,1.0,0.0,0.0\n0,20,oops\n")
        with pytest.raises(CsvFormatError, match="line 3"):
            cli.plot(csv_path, "sweep", tmp_path / "bad.svg")

    def test_plot_subcommand(self, tmp_path):
        csv_path = self._sweep_csv(tmp_path)
        assert run_main(["plot", "--csv", csv_path, "--kind", "sweep",
                         "--out", tmp_path]) == 0
        assert (tmp_path / "sweep.svg").exists()

    def test_csv_round_trip_is_lossless(self, tmp_path):
        csv_path = self._sweep_csv(tmp_path)
        rows = read_csv(csv_path, SWEEP_HEADER)
        rebuilt = [SWEEP_HEADER]
        for r in rows:
            rebuilt.append(",".join([
                str(int(r["seed"])), str(int(r["n"])),
                "inf" if math.isinf(r["delta_n"]) else str(int(r["delta_n"])),
                cli.fmt(r["loss_n"]), cli.fmt(r["loss_n_dn"]),
                cli.fmt(r["d_gap"]), cli.fmt(r["lower_bound"]),
            ]))
        assert "\n".join(rebuilt) + "\n" == csv_path.read_text()
