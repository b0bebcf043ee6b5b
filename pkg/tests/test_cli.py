import json
import math

import numpy as np
import pytest

from hjb_verify.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, VerifyShell, main
from hjb_verify.utils import to_jsonable


def _exit_code(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


def _write_config(path, **document):
    path.write_text(json.dumps(document))
    return str(path)


class TestMain:
    def test_presets(self):
        assert _exit_code(["presets"]) == EXIT_OK

    def test_run_empty_suites(self, tmp_path, output_dir):
        config = _write_config(tmp_path / "c.json", preset="power_model", suites=[])
        assert _exit_code(["run", "--config", config, "--output-dir", str(output_dir)]) == EXIT_OK
        assert (output_dir / "summary.json").exists()

    def test_invalid_config_is_usage_error(self, tmp_path, output_dir):
        path = tmp_path / "c.json"
        path.write_text("{")
        assert _exit_code(["run", "--config", str(path)]) == EXIT_USAGE
        config = _write_config(tmp_path / "d.json", preset="power_model", params={"p": 0.5})
        assert _exit_code(["run", "--config", config]) == EXIT_USAGE

    def test_plot_without_artifact(self, tmp_path, output_dir):
        config = _write_config(tmp_path / "c.json", preset="power_model", suites=[])
        _exit_code(["run", "--config", config, "--output-dir", str(output_dir)])
        code = _exit_code(["plot", "--record", str(output_dir / "summary.json"), "--what", "convergence"])
        assert code == EXIT_FAILED

    def test_plot_rejects_unknown_kind(self, output_dir):
        # argparse choices
        assert _exit_code(["plot", "--record", str(output_dir), "--what", "heatmap"]) == 2


class TestShell:
    def test_commands(self):
        shell = VerifyShell()
        assert shell.onecmd("presets") is False
        assert shell.onecmd("last") is False
        assert shell.onecmd("plot only-one-arg") is False
        assert shell.onecmd("quit") is True

    def test_run_records_last(self, tmp_path, output_dir):
        config = _write_config(tmp_path / "c.json", preset="briand_hu", suites=[])
        shell = VerifyShell()
        shell.onecmd(f"run {config} {output_dir}")
        assert shell.last_record is not None
        assert shell.last_record.passed


class TestJson:
    def test_non_finite_and_numpy(self):
        payload = to_jsonable({"a": math.inf, "b": -math.inf, "c": math.nan, "d": np.float64(1.5),
                               "e": np.arange(3)})
        assert payload == {"a": "inf", "b": "-inf", "c": None, "d": 1.5, "e": [0, 1, 2]}
