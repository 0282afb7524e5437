import numpy as np
import pandas as pd
import pytest

from spincast.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from spincast.core.fitting import synthetic_data
from spincast.utils.results import MAGIC, ResultFile, read_fit_json, read_result, write_result

SMALL_SPLIT = "field_split.fields=[0, 10, 20]"


@pytest.fixture(autouse=True)
def no_config_dir(monkeypatch):
    monkeypatch.delenv("SPINCAST_CONFIG_DIR", raising=False)


@pytest.fixture
def decay_file(tmp_path):
    t = np.linspace(0.0, 8.0, 81)
    y = synthetic_data("monoexp", t, [0.8, 2.1, 0.05], noise=0.005, seed=3)
    data = pd.DataFrame({"free_time": t, "contrast": y})
    result = ResultFile({"recipe": "coherence"}, data, {"free_time": "us", "contrast": "fraction"})
    return write_result(result, tmp_path / "decay.csv")


class TestRecipes:
    """Running recipes from the command line"""

    def test_writes_output(self, tmp_path):
        out = tmp_path / "split.csv"
        assert main(["field-split", "--set", SMALL_SPLIT, "--out", str(out), "-q"]) == EXIT_OK
        assert read_result(out).column("field").tolist() == [0.0, 10.0, 20.0]

    def test_stdout_without_out(self, capsys):
        assert main(["field-split", "--set", SMALL_SPLIT, "-q"]) == EXIT_OK
        assert capsys.readouterr().out.startswith(MAGIC)

    def test_config_file(self, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text("field_split:\n  fields: [0, 5]\n")
        out = tmp_path / "split.csv"
        assert main(["field-split", "--config", str(config), "--out", str(out), "-q"]) == EXIT_OK
        assert len(read_result(out).data) == 2

    def test_unknown_recipe(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["nmr"])
        assert excinfo.value.code == 2


class TestConfigErrors:
    """Configuration problems exit with a usage status"""

    def test_unknown_key(self):
        assert main(["field-split", "--set", "zfs.F=1", "-q"]) == EXIT_USAGE

    def test_no_anticrossing(self):
        assert main(["lac-sweep", "--set", "zfs.E=1300", "-q"]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(["odmr", "--config", str(tmp_path / "absent.yaml"), "-q"]) == EXIT_USAGE

    def test_yaml_syntax_error(self, tmp_path):
        config = tmp_path / "broken.yaml"
        config.write_text("zfs:\n  D: -1210\n   E: 520\n")
        assert main(["odmr", "--config", str(config), "-q"]) == EXIT_USAGE

    def test_fit_without_input(self):
        assert main(["fit", "-q"]) == EXIT_USAGE


class TestInitConfig:
    """Template generation"""

    def test_writes_template(self, tmp_path):
        out = tmp_path / "spincast.yaml"
        assert main(["init-config", "--out", str(out), "-q"]) == EXIT_OK
        assert "zfs:" in out.read_text()

    def test_refuses_overwrite(self, tmp_path):
        out = tmp_path / "spincast.yaml"
        out.write_text("keep me\n")
        assert main(["init-config", "--out", str(out), "-q"]) == EXIT_USAGE
        assert out.read_text() == "keep me\n"

    def test_template_is_loadable(self, tmp_path):
        template = tmp_path / "spincast.yaml"
        main(["init-config", "--out", str(template), "-q"])
        out = tmp_path / "split.csv"
        args = ["field-split", "--config", str(template), "--set", SMALL_SPLIT, "--out", str(out), "-q"]
        assert main(args) == EXIT_OK


class TestCompare:
    """--compare against a stored result"""

    def test_matches_itself(self, tmp_path):
        golden = tmp_path / "golden.csv"
        main(["field-split", "--set", SMALL_SPLIT, "--out", str(golden), "-q"])
        fresh = tmp_path / "fresh.csv"
        args = ["field-split", "--set", SMALL_SPLIT, "--out", str(fresh), "--compare", str(golden), "-q"]
        assert main(args) == EXIT_OK

    def test_detects_deviation(self, tmp_path):
        golden = tmp_path / "golden.csv"
        main(["field-split", "--set", SMALL_SPLIT, "--out", str(golden), "-q"])
        stored = read_result(golden)
        stored.data["line"] = stored.data["line"] + 1.0
        write_result(stored, golden)
        fresh = tmp_path / "fresh.csv"
        args = ["field-split", "--set", SMALL_SPLIT, "--out", str(fresh), "--compare", str(golden), "-q"]
        assert main(args) == EXIT_NUMERICAL

    def test_corrupt_golden(self, tmp_path):
        golden = tmp_path / "golden.csv"
        golden.write_text("field [mT]\n0\n")
        fresh = tmp_path / "fresh.csv"
        args = ["field-split", "--set", SMALL_SPLIT, "--out", str(fresh), "--compare", str(golden), "-q"]
        assert main(args) == EXIT_NUMERICAL


class TestFit:
    """The fit recipe over an existing result file"""

    def test_monoexp(self, decay_file, tmp_path):
        out = tmp_path / "fit.csv"
        args = ["fit", "--set", f"fit.input={decay_file}", "--set", "fit.model=monoexp", "--out", str(out), "-q"]
        assert main(args + ["--fit-json"]) == EXIT_OK
        fitted = read_fit_json(out.with_suffix(".monoexp.json"))
        assert fitted.value("tau") == pytest.approx(2.1, rel=0.05)
        assert "model" in read_result(out).columns

    def test_missing_column(self, decay_file):
        args = ["fit", "--set", f"fit.input={decay_file}", "--set", "fit.y_column=signal", "-q"]
        assert main(args) == EXIT_USAGE

    def test_wrong_init_length(self, decay_file):
        args = ["fit", "--set", f"fit.input={decay_file}", "--set", "fit.model=monoexp", "--set", "fit.init=[1, 2]"]
        assert main(args + ["-q"]) == EXIT_USAGE
