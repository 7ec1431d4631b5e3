from safesdre_plots.cli import EX_DATAERR, EX_OK, EX_USAGE, main

from conftest import TAG, fabricate_csv


def run_cli(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


class TestCli:
    def test_phase_end_to_end(self, csv_pair, scenario_yaml, tmp_path, capsys):
        out = tmp_path / "fig.png"
        code = run_cli(
            ["--kind", "phase", "--csv", *map(str, csv_pair),
             "--scenario", str(scenario_yaml), "--out", str(out)]
        )
        assert code == EX_OK
        assert out.exists()
        assert str(out) in capsys.readouterr().out

    def test_schema_mismatch_exits_nonzero(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,x1,status\n0,1,ok\n", encoding="utf-8")
        code = run_cli(["--kind", "phase", "--csv", str(bad),
                        "--out", str(tmp_path / "f.png")])
        assert code == EX_DATAERR

    def test_missing_columns_exits_nonzero(self, tmp_path):
        no_z = fabricate_csv(tmp_path / "nz.csv", q=0)
        code = run_cli(["--kind", "timeseries", "--csv", str(no_z),
                        "--out", str(tmp_path / "f.png")])
        assert code == EX_DATAERR

    def test_missing_input_is_usage_error(self, tmp_path):
        code = run_cli(["--kind", "phase", "--csv", str(tmp_path / "ghost.csv"),
                        "--out", str(tmp_path / "f.png")])
        assert code == EX_USAGE

    def test_unknown_kind_is_usage_error(self, csv_pair, tmp_path):
        code = run_cli(["--kind", "sculpture", "--csv", str(csv_pair[0]),
                        "--out", str(tmp_path / "f.png")])
        assert code == EX_USAGE

    def test_missing_scenario_is_usage_error(self, csv_pair, tmp_path):
        code = run_cli(
            ["--kind", "phase", "--csv", str(csv_pair[0]),
             "--scenario", str(tmp_path / "ghost.yaml"),
             "--out", str(tmp_path / "f.png")]
        )
        assert code == EX_USAGE

    def test_wrong_version_tag_rejected(self, tmp_path):
        bad = tmp_path / "v2.csv"
        bad.write_text(
            TAG.replace("v1", "v2")
            + "\nt,x1,x2,u1,h_min,z_consistency,status\n0,1,2,3,4,5,ok\n",
            encoding="utf-8",
        )
        code = run_cli(["--kind", "phase", "--csv", str(bad),
                        "--out", str(tmp_path / "f.png")])
        assert code == EX_DATAERR
