import argparse

import pytest

from frac_rbm.core.config import PRESETS, RunConfig
from frac_rbm.core.errors import ConfigError


def _write(tmp_path, text: str) -> str:
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_are_desk_preset():
    """A bare config carries the desk preset and the documented defaults."""
    config = RunConfig()
    assert config.preset == "desk"
    assert (config.n, config.M) == (16, 40)
    assert config.gamma_d1 == 6.0
    assert config.gamma_d2 == 2.0
    assert config.y_plus == pytest.approx(2.233)
    assert config.greedy_mode == "residual_free"
    assert config.rhs == "example1"
    assert config.command is None


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_presets_apply(preset):
    config = RunConfig.from_values(preset=preset)
    assert config.preset == preset
    for key, value in PRESETS[preset].items():
        assert getattr(config, key) == value


def test_file_then_args(tmp_path):
    """Preset, then file values (tables flattened), then command-line overrides."""
    path = _write(
        tmp_path,
        'preset = "full"\n'
        "\n"
        "[mesh]\n"
        "n = 8\n"
        "gamma_d1 = 5.0\n"
        "\n"
        "[rb]\n"
        "n_max = 7\n"
        'greedy_mode = "residual_based"\n',
    )
    args = argparse.Namespace(command="train", config=path, preset=None, n=12, M=None, log_dir=str(tmp_path))
    config = RunConfig(args=args)

    assert config.command == "train"
    assert config.preset == "full"
    assert config.M == PRESETS["full"]["M"]
    assert config.n == 12
    assert config.gamma_d1 == 5.0
    assert config.n_max == 7
    assert config.greedy_mode == "residual_based"


def test_command_line_preset_wins_over_file(tmp_path):
    path = _write(tmp_path, 'preset = "full"\n')
    config = RunConfig(args=argparse.Namespace(command="train", config=path, preset="desk"))
    assert config.preset == "desk"
    assert config.n == PRESETS["desk"]["n"]


def test_unknown_file_key(tmp_path):
    path = _write(tmp_path, "bogus = 1\n")
    with pytest.raises(ConfigError, match="Unknown config key 'bogus'"):
        RunConfig(args=argparse.Namespace(command="train", config=path))


def test_duplicate_key_across_tables(tmp_path):
    path = _write(tmp_path, "n = 8\n\n[mesh]\nn = 9\n")
    with pytest.raises(ConfigError, match="Duplicate config key 'n'"):
        RunConfig(args=argparse.Namespace(command="train", config=path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        RunConfig(args=argparse.Namespace(command="train", config=str(tmp_path / "absent.toml")))


def test_malformed_config_file(tmp_path):
    path = _write(tmp_path, "n = = 3\n")
    with pytest.raises(ConfigError, match="Could not read"):
        RunConfig(args=argparse.Namespace(command="train", config=path))


def test_from_values_rejects_unknown_and_reserved_keys():
    with pytest.raises(ConfigError, match="Unknown config key"):
        RunConfig.from_values(mesh_size=3)
    with pytest.raises(ConfigError, match="Unknown config key"):
        RunConfig.from_values(version="9.9")


@pytest.mark.parametrize(
    "values, message",
    [
        ({"n": 1}, "at least 2"),
        ({"M": 0}, "positive integer"),
        ({"n_max": 2.5}, "positive integer"),
        ({"threads": True}, "positive integer"),
        ({"gamma_d1": -1.0}, "positive finite"),
        ({"cg_tol": float("inf")}, "positive finite"),
        ({"eim_s_points": 1}, "at least 2 points"),
        ({"s_min": 0.6}, "s_min"),
        ({"s_max": 1.0}, "s_max"),
        ({"greedy_mode": "fastest"}, "greedy_mode"),
        ({"first_snapshot": "last"}, "first_snapshot"),
        ({"rhs": "example3"}, "Invalid rhs"),
        ({"rhs": "modal"}, "modal_coefficients"),
        ({"rhs": "modal", "modal_coefficients": [[0, 1, 1.0]]}, "modal coefficient"),
        ({"errors_n_d1": [0]}, "errors_n_d1"),
        ({"seed": -1}, "seed"),
        ({"log_level": "LOUD"}, "log level"),
        ({"preset": "huge"}, "Invalid preset"),
    ],
)
def test_validation_errors(values, message):
    with pytest.raises(ConfigError, match=message):
        RunConfig.from_values(**values)


def test_config_error_is_value_error():
    with pytest.raises(ValueError):
        RunConfig.from_values(n=0)


def test_modal_rhs_accepted():
    config = RunConfig.from_values(rhs="modal", modal_coefficients=[[1, 1, 1.0], [2, 3, -0.5]])
    assert config.rhs == "modal"


def test_config_hash_is_stable():
    a = RunConfig.from_values(n=8)
    b = RunConfig.from_values(n=8)
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    int(a.config_hash(), 16)


def test_config_hash_ignores_runtime_keys(tmp_path):
    base = RunConfig.from_values(n=8, threads=1)
    other = RunConfig.from_values(
        n=8, threads=7, output_dir=str(tmp_path / "x"), log_dir=str(tmp_path / "y"), log_level="DEBUG"
    )
    assert base.config_hash() == other.config_hash()


@pytest.mark.parametrize("key, value", [("n", 9), ("gamma_d1", 5.5), ("rhs", "example2"), ("seed", 3)])
def test_config_hash_tracks_numerical_keys(key, value):
    assert RunConfig.from_values(**{key: value}).config_hash() != RunConfig.from_values().config_hash()


def test_as_metadata_drops_runtime_keys():
    metadata = RunConfig.from_values().as_metadata()
    for key in RunConfig.RUNTIME_KEYS:
        assert key not in metadata
    assert "command" not in metadata
    assert metadata["preset"] == "desk"
    assert "version" in metadata
    assert metadata["n"] == 16


def test_helpers():
    config = RunConfig.from_values(gamma_d1=5.0, gamma_d2=1.5, errors_n_d1=[2, 7], errors_n_d2=[1], cg_max_factor=20.0)
    assert config.gamma_for("D1") == 5.0
    assert config.gamma_for("D2") == 1.5
    assert config.errors_n_for("D1") == [2, 7]
    assert config.errors_n_for("D2") == [1]
    assert config.cg_max_iter(100) == 200
    assert config.cg_max_iter(1) == 20
    assert RunConfig.from_values(cg_max_factor=1.0).cg_max_iter(4) == 10


def test_refined_doubles_mesh_sizes():
    config = RunConfig.from_values(n=8, M=10, seed=5)
    finer = config.refined(2)
    assert (finer.n, finer.M) == (32, 40)
    assert finer.seed == 5
    assert (config.n, config.M) == (8, 10)
    assert config.refined(0).config_hash() == config.config_hash()
    with pytest.raises(ConfigError, match="non-negative"):
        config.refined(-1)
