import json

import numpy as np
import pytest

from conetorsion.cli import (
    ConfigError,
    build_config,
    main,
    parse_config_text,
)

QUARTER_CFG = """\
# rigidity verification on the quarter disk
command = verify
opening = 1.5707963267948966
base_radius = 1.0
target_h = 0.08
plots = false
"""


class TestConfigParsing:
    def test_flat_key_value(self):
        kv = parse_config_text(QUARTER_CFG)
        assert kv["command"] == "verify"
        assert kv["plots"] == "false"

    def test_bad_line_reports_number(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("command = solve\nnot a kv line\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("commnad = solve\n")

    def test_malformed_epsilons(self):
        with pytest.raises(ConfigError, match="bad epsilon"):
            build_config({"command": "sweep", "epsilons": "0.01,oops"})

    def test_unsorted_epsilons(self):
        with pytest.raises(ConfigError, match="sorted"):
            build_config({"command": "sweep", "epsilons": "0.05,0.01"})

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="unknown command"):
            build_config({"command": "explode"})

    def test_bad_coefficients(self):
        with pytest.raises(ConfigError, match="coefficient"):
            build_config({"command": "solve", "coefficients": "2x1.0"})

    def test_invalid_domain(self):
        with pytest.raises(ConfigError, match="invalid domain"):
            build_config({"command": "solve", "opening": "7.0"})


class TestMainStatuses:
    def test_malformed_epsilon_list_is_status_2(self, tmp_path, capsys):
        status = main(["--command", "sweep", "--epsilons", "0.01,x",
                       "--out", str(tmp_path)])
        assert status == 2
        assert "configuration error" in capsys.readouterr().err

    def test_unknown_flag_is_status_2(self, tmp_path, capsys):
        status = main(["--comand", "solve", "--out", str(tmp_path)])
        assert status == 2

    def test_missing_config_file_is_status_2(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.cfg")]) == 2

    def test_verify_rigidity_exits_zero(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(QUARTER_CFG)
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        rows = (out / "identities.csv").read_text().splitlines()
        assert rows[0].startswith("name,")
        names = [r.split(",")[0] for r in rows[1:]]
        assert names == ["serrin", "sbt", "sbt_v2", "hk"]
        assert all(r.rsplit(",", 1)[1] == "true" for r in rows[1:])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["passed"] is True
        assert manifest["command"] == "verify"

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(QUARTER_CFG)
        out = tmp_path / "out"
        # override the command to a plain solve
        assert main(["--config", str(cfg), "--command", "solve",
                     "--out", str(out)]) == 0
        assert (out / "solution.csv").exists()
        assert not (out / "identities.csv").exists()

    def test_deterministic_csv_bodies(self, tmp_path):
        args = ["--command", "verify", "--target_h", "0.1", "--plots", "false"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        for name in ("identities.csv", "identity_terms.csv", "solution.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_constants_command(self, tmp_path):
        out = tmp_path / "out"
        assert main(["--command", "constants", "--target_h", "0.1",
                     "--plots", "false", "--out", str(out)]) == 0
        header, row = (out / "constants.csv").read_text().splitlines()
        assert "lambda2" in header and "Lambda2k" in header
        assert len(row.split(",")) == len(header.split(","))

    def test_convergence_command_with_figure(self, tmp_path):
        out = tmp_path / "out"
        assert main(["--command", "convergence", "--levels", "2",
                     "--out", str(out)]) == 0
        assert (out / "convergence.csv").exists()
        assert (out / "convergence.png").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["rates"]["l2"] >= 2.5

    def test_sweep_command_artifacts(self, tmp_path):
        out = tmp_path / "out"
        # small-epsilon grid: well inside the asymptotic scaling regime
        assert main(["--command", "sweep", "--epsilons",
                     "0.01,0.0145,0.021,0.0305",
                     "--target_h", "0.04", "--eigen_target_h", "0.1",
                     "--coefficients", "2:1.0", "--out", str(out)]) == 0
        body = (out / "sweep.csv").read_text().splitlines()
        assert len(body) == 5  # header + one row per epsilon
        fits = json.loads((out / "fits.json").read_text())
        assert {"sbt", "hk", "rho_gap_sbt", "rho_gap_hk"} <= set(fits)
        assert (out / "sweep.png").exists()

    def test_env_var_default_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONETORSION_OUT", str(tmp_path / "envout"))
        assert main(["--command", "solve", "--target_h", "0.1",
                     "--plots", "false"]) == 0
        assert (tmp_path / "envout" / "solution.csv").exists()
