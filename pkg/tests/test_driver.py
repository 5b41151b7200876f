import argparse
from unittest import mock

import pytest
from loguru import logger

from frac_rbm import driver
from frac_rbm.core.config import RunConfig
from frac_rbm.core.errors import (
    ConfigError,
    ConvergenceError,
    EIMExhaustedError,
    FracRBMError,
    IndefiniteOperatorError,
    ModelFormatError,
    ModelIOError,
    NumericalError,
)


@pytest.fixture(autouse=True)
def reset_logger():
    yield
    logger.remove()


def _run_args(tmp_path):
    return ["--log-dir", str(tmp_path / "logs"), "--output-dir", str(tmp_path / "out"), "--log-level", "ERROR"]


@pytest.mark.parametrize(
    "error, code",
    [
        (ConfigError("x"), 2),
        (ValueError("x"), 2),
        (NumericalError("x"), 3),
        (ConvergenceError("x", iterations=10, residual=1.0), 3),
        (IndefiniteOperatorError("x", value=-1.0), 3),
        (EIMExhaustedError("x"), 3),
        (ModelIOError("x"), 4),
        (ModelFormatError("x"), 4),
        (FracRBMError("x"), 1),
        (RuntimeError("x"), 1),
    ],
)
def test_exit_code_for(error, code):
    assert driver.exit_code_for(error) == code


def test_discover_commands():
    """Every cmd_* provider method becomes a dashed command name."""
    commands = driver.discover_commands(RunConfig())
    assert set(commands) == {"build-eim", "train", "eval", "certify", "bench", "validate-oracle"}
    assert commands["build-eim"].__name__ == "cmd_build_eim"


def test_call_with_args_uses_given_values():
    def command(model, s=0.5, nu=None):
        return model, s, nu

    args = argparse.Namespace(model="m.frbm", s=None, nu=0.25, unrelated=1)
    assert driver._call_with_args(command, args) == ("m.frbm", 0.5, 0.25)


def test_call_with_args_missing_required():
    def command(model):
        return model

    with pytest.raises(ConfigError, match="Missing argument 'model'"):
        driver._call_with_args(command, argparse.Namespace(model=None))


@pytest.mark.parametrize("argv", [["version"], ["help", "--version"]])
def test_main_version(argv, capsys):
    assert driver.main(argv) == 0
    assert capsys.readouterr().out.startswith("frac-rbm ")


def test_main_config_error(tmp_path):
    assert driver.main(["train", "--n", "1"] + _run_args(tmp_path)) == 2


def test_main_missing_model(tmp_path):
    argv = ["eval", "--model", str(tmp_path / "missing.frbm"), "--s", "0.3"] + _run_args(tmp_path)
    assert driver.main(argv) == 4


@pytest.mark.parametrize(
    "error, code",
    [
        (KeyboardInterrupt(), 130),
        (ValueError("bad"), 2),
        (ConvergenceError("stalled"), 3),
        (RuntimeError("boom"), 1),
    ],
)
def test_main_maps_command_failures(tmp_path, mocker, error, code):
    def failing():
        raise error

    mocker.patch.object(driver, "discover_commands", return_value={"bench": failing})
    assert driver.main(["bench"] + _run_args(tmp_path)) == code


def test_main_success(tmp_path):
    with mock.patch.object(driver, "discover_commands", return_value={"bench": lambda: {"ok": True}}):
        assert driver.main(["bench"] + _run_args(tmp_path)) == 0
