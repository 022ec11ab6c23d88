import math

import pytest

from qenigma import __version__
from qenigma.cli import (
    EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, ConfigError, RunSpec, main, parse_config, run, summary_path, sweep,
)


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


class TestParseConfig:
    def test_resend_defaults(self):
        spec = parse_config("experiment=resend\nn_modes=16\ntau=0.5\nseed=7")
        assert spec.experiment == "resend" and spec.seed == 7
        assert spec.parameters["trials"] == 10000 and spec.parameters["max_rounds"] == 64
        assert spec.parameters["n_modes"] == 16 and spec.parameters["tau"] == 0.5

    def test_bound_defaults(self):
        spec = parse_config("experiment=bound\nn_bits=2\nm_bits=1")
        assert spec.parameters["restarts"] == 32 and spec.parameters["method"] == "auto"

    def test_comments_and_blank_lines(self):
        spec = parse_config("# header\n\nexperiment=key_plan  # trailing\nrule=block\nepsilon=0.5\n")
        assert spec.parameters["rule"] == "block"

    def test_unknown_experiment_names_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("# c\nexperiment=warp")
        assert info.value.line == 2 and "warp" in str(info.value)

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment=bound\nn_bits=2\nm_bits=1\ncolour=blue")
        assert info.value.line == 4

    def test_type_mismatch_names_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment=resend\nn_modes=sixteen\ntau=0.5")
        assert info.value.line == 2

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="tau"):
            parse_config("experiment=resend\nn_modes=16")

    def test_missing_experiment(self):
        with pytest.raises(ConfigError):
            parse_config("n_bits=1")

    def test_malformed_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment=bound\nn_bits 2")
        assert info.value.line == 2

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_config("experiment=bound\nn_bits=2\nn_bits=3\nm_bits=1")

    def test_choice_keys(self):
        with pytest.raises(ConfigError):
            parse_config("experiment=key_plan\nrule=cubic\nepsilon=0.1")


class TestRun:
    def test_mub_demo(self, tmp_path, capsys):
        out = tmp_path / "mub.csv"
        assert run(RunSpec("mub_demo", parse_config("experiment=mub_demo").parameters, 0, str(out))) == EXIT_OK
        row = read_rows(out)[0]
        assert abs(float(row["ic_bound"]) - 0.5) <= 1e-3
        summary = summary_path(out).read_text()
        assert "ic_bound=0.5" in summary and __version__ in summary
        assert "ic_bound" in capsys.readouterr().out

    def test_resend_lossless(self, tmp_path):
        out = tmp_path / "r.csv"
        spec = parse_config(f"experiment=resend\nn_modes=8\ntau=1\ntrials=300\noutput_path={out}")
        assert run(spec) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 300
        assert all(r["delivered"] == "true" and r["rounds"] == "1" for r in rows)

    def test_output_embeds_configuration(self, tmp_path):
        out = tmp_path / "d.csv"
        spec = parse_config(f"experiment=depolarize_block\nn_bits=1\neta=0.6\ntrials=50\noutput_path={out}")
        run(spec)
        text = out.read_text()
        for key in ("experiment=depolarize_block", "eta=0.6", "repetition=3", "m_bits=2", "seed=0"):
            assert f"# {key}" in text
        assert f"# qenigma {__version__}" in text
        summary = summary_path(out).read_text()
        assert "workers=1" in summary and f"output_path={out}" in summary

    def test_runtime_error_exit(self, tmp_path):
        spec = parse_config(f"experiment=resend\nn_modes=8\ntau=2\noutput_path={tmp_path / 'x.csv'}")
        assert run(spec) == EXIT_RUNTIME

    def test_all_numbers_finite(self, tmp_path):
        out = tmp_path / "k.csv"
        run(parse_config(f"experiment=key_distribution\nn_modes=4\ntau=0.2\ntrials=200\noutput_path={out}"))
        for row in read_rows(out):
            for value in row.values():
                try:
                    assert math.isfinite(float(value))
                except ValueError:
                    assert value in ("true", "false")


class TestSweep:
    def test_bound_over_m(self, tmp_path):
        spec = parse_config(f"experiment=bound\nn_bits=4\nm_bits=0\nrestarts=2\noutput_path={tmp_path / 'b.csv'}")
        sweep(spec, "m_bits", ["0", "1", "2", "3", "4"])
        rows = read_rows(tmp_path / "b.csv")
        assert [r["m_bits"] for r in rows] == ["0", "1", "2", "3", "4"]
        assert all("ic_bound" in r for r in rows)

    def test_resend_over_tau(self, tmp_path):
        spec = parse_config(f"experiment=resend\nn_modes=8\ntau=0.5\ntrials=2000\nmax_rounds=2\n"
                            f"output_path={tmp_path / 's.csv'}")
        taus = [f"0.{i}" for i in range(1, 10)]
        sweep(spec, "tau", taus)
        rates = [float(r["delivery_rate"]) for r in read_rows(tmp_path / "s.csv")]
        for a, b in zip(rates, rates[1:]):
            assert b >= a - 3 * math.sqrt(0.25 / 2000)

    def test_key_plan_over_epsilon(self, tmp_path):
        spec = parse_config(f"experiment=key_plan\nrule=haar_epsilon\nepsilon=0.5\noutput_path={tmp_path / 'k.csv'}")
        sweep(spec, "epsilon", ["0.001", "0.01", "0.1", "0.5", "1"])
        m = [int(r["m_recommended"]) for r in read_rows(tmp_path / "k.csv")]
        assert m == sorted(m, reverse=True)

    def test_non_numeric_axis(self, tmp_path):
        spec = parse_config(f"experiment=key_plan\nrule=block\nepsilon=0.5\noutput_path={tmp_path / 'k.csv'}")
        with pytest.raises(ConfigError):
            sweep(spec, "rule", ["block", "unary"])
        with pytest.raises(ConfigError):
            sweep(spec, "epsilon", ["tiny"])


class TestMain:
    def test_flags_and_exit_codes(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["key_plan", "--rule", "block", "--b", "4", "--epsilon", "0.00390625", "--out", str(out)]) == EXIT_OK
        assert read_rows(out)[0]["m_recommended"] == "40"

    def test_config_file_then_flag_override(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("experiment=resend\nn_modes=8\ntau=0.1\ntrials=20\n")
        out = tmp_path / "r.csv"
        assert main(["resend", "--config", str(cfg), "--tau", "1", "--out", str(out)]) == EXIT_OK
        assert "# tau=1.0" in out.read_text()

    def test_config_for_other_experiment(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("experiment=bound\nn_bits=1\nm_bits=1\n")
        assert main(["resend", "--config", str(cfg)]) == EXIT_CONFIG

    def test_config_errors(self, tmp_path):
        assert main(["resend", "--n-modes", "8"]) == EXIT_CONFIG
        assert main(["warp"]) == EXIT_CONFIG
        assert main(["resend", "--config", str(tmp_path / "missing.txt")]) == EXIT_CONFIG
        assert main(["key_plan", "--rule", "block", "--epsilon", "0.5", "--sweep", "rule=1,2"]) == EXIT_CONFIG

    def test_runtime_error(self, tmp_path):
        assert main(["key_plan", "--rule", "block", "--epsilon", "2", "--out", str(tmp_path / "x.csv")]) == EXIT_RUNTIME

    def test_sweep_flag(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["depolarize_block", "--n_bits", "1", "--eta", "0.6", "--trials", "100",
                     "--sweep", "repetition=1,3", "--out", str(out)]) == EXIT_OK
        assert [r["repetition"] for r in read_rows(out)] == ["1", "3"]
        assert "# sweep_axis=repetition" in out.read_text()
