"""Configuration handling for the solver suite."""

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from typing import Any, Dict, List, Optional

from .. import __version__
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {
        "n": 16,
        "M": 40,
        "eim_s_points": 257,
        "train_s_points": 257,
        "tensor_s_points": 33,
        "train_nu_points": 33,
        "test_s_points": 64,
        "test_tensor_points": 8,
        "oracle_modes": 20,
    },
    "full": {
        "n": 50,
        "M": 158,
        "eim_s_points": 1025,
        "train_s_points": 1025,
        "tensor_s_points": 257,
        "train_nu_points": 257,
        "test_s_points": 312,
        "test_tensor_points": 30,
        "oracle_modes": 40,
    },
}


class RunConfig:
    """
    Run configuration: preset values, then an optional TOML file, then command-line overrides.

    Attributes:
        version (str): Package version string.
        command (str): Sub-command being run.
        preset (str): Name of the preset the defaults came from ("desk" or "full").
        n (int): Cells per side of the structured triangulation of the unit square.
        M (int): Number of subintervals of the graded partition of [0, y_plus].
        gamma_d1 (float): Grading exponent used for s <= 1/2.
        gamma_d2 (float): Grading exponent used for s > 1/2.
        y_plus (float): Truncation height of the cylinder.
        eim_refinement (int): The EIM y-grid has eim_refinement * M subintervals.
        eim_s_points (int): Size of the EIM training grid in s, per subdomain.
        eim_tol (float): EIM greedy stopping tolerance on the sup error.
        eim_q_max (int): Maximum number of EIM terms per subdomain.
        train_s_points (int): Size of the one-parameter RB training grid per subdomain.
        tensor_s_points (int): s-axis size of the two-parameter tensor training grid per subdomain.
        train_nu_points (int): nu-axis size of the two-parameter tensor training grid.
        n_max (int): Maximum reduced dimension.
        greedy_mode (str): "residual_free" or "residual_based".
        rb_tol (float): Greedy stopping tolerance.
        first_snapshot (str): "midpoint" or "random".
        test_s_points (int): Interior test points per subdomain (one-parameter problem).
        test_tensor_points (int): Points per axis of the two-parameter test grid.
        rhs (str): "example1", "example2" or "modal".
        modal_coefficients (List[List[float]]): [j, k, coefficient] triples for the modal right-hand side.
        n_constraints (int): SCM constraint points per subdomain.
        validation_points (int): Points per subdomain of the certification grid.
        oracle_modes (int): Modes per axis used by the sine oracle.
        cg_tol (float): Relative residual tolerance of the truth CG solver.
        cg_max_factor (float): CG iteration cap is cg_max_factor * sqrt(free dofs).
        s_min (float): Lower end of the experiment range of s.
        s_max (float): Upper end of the experiment range of s.
        errors_n_d1 (List[int]): Reduced dimensions for the per-parameter error curves on D1.
        errors_n_d2 (List[int]): Reduced dimensions for the per-parameter error curves on D2.
        bench_queries (int): Query count used by the cumulative timing table.
        output_dir (str): Directory for models and CSV files.
        log_dir (str): Directory for log files.
        log_level (str): Logging level string.
        seed (int): Seed for every random choice.
        threads (int): Worker threads for parameter sweeps.
    """

    VALID_PRESETS = list(PRESETS)
    VALID_GREEDY_MODES = ["residual_free", "residual_based"]
    VALID_RHS = ["example1", "example2", "modal"]
    VALID_FIRST_SNAPSHOT = ["midpoint", "random"]
    VALID_LOG_LEVELS = ["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"]

    # Keys that do not change numerical results and stay out of the config hash.
    RUNTIME_KEYS = ("output_dir", "log_dir", "log_level", "threads")

    def __init__(self, args: Optional[argparse.Namespace] = None):
        """
        Initialize configuration from command-line arguments or defaults.

        Args:
            args: Parsed command-line arguments. If None, only the desk preset is set and no validation is performed.
        """

        self.command = None
        self.version = __version__.__version__
        self.preset = "desk"
        self.n = 16
        self.M = 40
        self.gamma_d1 = 6.0
        self.gamma_d2 = 2.0
        self.y_plus = 2.233
        self.eim_refinement = 16
        self.eim_s_points = 257
        self.eim_tol = 1e-12
        self.eim_q_max = 25
        self.train_s_points = 257
        self.tensor_s_points = 33
        self.train_nu_points = 33
        self.n_max = 15
        self.greedy_mode = "residual_free"
        self.rb_tol = 1e-12
        self.first_snapshot = "midpoint"
        self.test_s_points = 64
        self.test_tensor_points = 8
        self.rhs = "example1"
        self.modal_coefficients: List[List[float]] = []
        self.n_constraints = 12
        self.validation_points = 64
        self.oracle_modes = 20
        self.cg_tol = 1e-10
        self.cg_max_factor = 20.0
        self.s_min = 0.03
        self.s_max = 0.97
        self.errors_n_d1 = [2, 7]
        self.errors_n_d2 = [1, 3]
        self.bench_queries = 312
        self.output_dir = os.path.abspath("frac-rbm-out")
        self.log_dir = os.path.expanduser("~/.frac-rbm")
        self.log_level = "INFO"
        self.seed = 0
        self.threads = os.cpu_count() or 1

        if args:
            if hasattr(args, "command"):
                self.command = args.command

            file_values = self._read_file(getattr(args, "config", None))
            preset = getattr(args, "preset", None) or file_values.get("preset") or self.preset
            self._apply_preset(preset)
            self._apply_values(file_values, source="config file")
            self._apply_args(args)
            self._validate()

    @classmethod
    def from_values(cls, **values: Any) -> "RunConfig":
        """
        Build a validated configuration from keyword values (preset first, then the values).

        Args:
            **values: Configuration keys; `preset` selects the starting preset.

        Returns:
            A validated RunConfig.
        """
        config = cls()
        config._apply_preset(values.pop("preset", "desk"))
        config._apply_values(values, source="keyword arguments")
        config._validate()
        return config

    def _read_file(self, path: Optional[str]) -> Dict[str, Any]:
        """
        Read a TOML configuration file, flattening its tables.

        Args:
            path: Path to the file, or None.

        Returns:
            Flat mapping of configuration keys to values.

        Raises:
            ConfigError: If the file cannot be read or parsed, or a key appears twice.
        """
        if not path:
            return {}

        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Could not read config file {path}: {e}") from e

        flat: Dict[str, Any] = {}
        for key, value in raw.items():
            items = value.items() if isinstance(value, dict) else [(key, value)]
            for sub_key, sub_value in items:
                if sub_key in flat:
                    raise ConfigError(f"Duplicate config key '{sub_key}' in {path}")
                flat[sub_key] = sub_value
        return flat

    def _apply_preset(self, preset: str):
        """
        Apply the values of a named preset.

        Args:
            preset: Preset name.

        Raises:
            ConfigError: If the preset is unknown.
        """
        if preset not in PRESETS:
            raise ConfigError(f"Invalid preset: {preset}. Must be one of {', '.join(self.VALID_PRESETS)}")
        self.preset = preset
        for key, value in PRESETS[preset].items():
            setattr(self, key, value)

    def _apply_values(self, values: Dict[str, Any], source: str):
        """
        Apply a flat mapping of configuration keys.

        Args:
            values: Key/value pairs.
            source: Human-readable origin used in error messages.

        Raises:
            ConfigError: If a key is not a known configuration key.
        """
        known = self.as_dict()
        for key, value in values.items():
            if key == "preset":
                continue
            if key not in known or key in ("version", "command"):
                raise ConfigError(f"Unknown config key '{key}' in {source}")
            setattr(self, key, value)

    def _apply_args(self, args: argparse.Namespace):
        """
        Apply parsed command-line arguments to the configuration.

        Only arguments that were given (not None) override earlier values.

        Args:
            args: Parsed command-line arguments.
        """

        for key in self.as_dict():
            if key in ("version", "command", "preset"):
                continue
            if hasattr(args, key) and getattr(args, key) is not None:
                setattr(self, key, getattr(args, key))

        if self.log_dir:
            self.log_dir = os.path.expanduser(self.log_dir)
        if self.output_dir:
            self.output_dir = os.path.abspath(os.path.expanduser(self.output_dir))

    def _validate(self):
        """
        Validate configuration values.

        Raises:
            ConfigError: If any configuration values are invalid.
        """

        for key in ("n", "M", "eim_refinement", "eim_s_points", "eim_q_max", "train_s_points", "tensor_s_points",
                    "train_nu_points", "n_max", "test_s_points", "test_tensor_points", "n_constraints",
                    "validation_points", "oracle_modes", "bench_queries", "threads"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{key} must be a positive integer, got {value!r}")

        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")

        if self.eim_s_points < 2 or self.train_s_points < 2:
            raise ConfigError("EIM and training grids need at least 2 points in s")

        for key in ("gamma_d1", "gamma_d2", "y_plus", "eim_tol", "rb_tol", "cg_tol", "cg_max_factor"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{key} must be a positive finite number, got {value!r}")

        if not 0.0 < self.s_min < 0.5 < self.s_max < 1.0:
            raise ConfigError(f"Need 0 < s_min < 1/2 < s_max < 1, got s_min={self.s_min}, s_max={self.s_max}")

        if self.greedy_mode not in self.VALID_GREEDY_MODES:
            raise ConfigError(
                f"Invalid greedy_mode: {self.greedy_mode}. Must be one of {', '.join(self.VALID_GREEDY_MODES)}"
            )

        if self.first_snapshot not in self.VALID_FIRST_SNAPSHOT:
            raise ConfigError(
                f"Invalid first_snapshot: {self.first_snapshot}. "
                f"Must be one of {', '.join(self.VALID_FIRST_SNAPSHOT)}"
            )

        if self.rhs not in self.VALID_RHS:
            raise ConfigError(f"Invalid rhs: {self.rhs}. Must be one of {', '.join(self.VALID_RHS)}")

        if self.rhs == "modal":
            if not self.modal_coefficients:
                raise ConfigError("rhs = 'modal' requires modal_coefficients as [j, k, coefficient] triples")
            for triple in self.modal_coefficients:
                if len(triple) != 3 or int(triple[0]) < 1 or int(triple[1]) < 1:
                    raise ConfigError(f"Invalid modal coefficient entry {triple!r}; expected [j >= 1, k >= 1, c]")

        for key in ("errors_n_d1", "errors_n_d2"):
            if any(int(v) < 1 for v in getattr(self, key)):
                raise ConfigError(f"{key} entries must be positive integers")

        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

        if str(self.log_level).upper() not in self.VALID_LOG_LEVELS:
            raise ConfigError(f"Invalid log level: {self.log_level}")

    def as_dict(self) -> Dict[str, Any]:
        """Return every configuration key and value."""
        return {key: value for key, value in vars(self).items() if not key.startswith("_")}

    def as_metadata(self) -> Dict[str, Any]:
        """
        Flat metadata stored in model containers.

        Returns:
            All numerical keys plus version and preset; runtime-only keys are dropped.
        """
        return {
            key: value
            for key, value in self.as_dict().items()
            if key not in self.RUNTIME_KEYS and key != "command"
        }

    def config_hash(self) -> str:
        """
        Short digest of the canonical resolved configuration.

        Returns:
            16 hex characters of a blake2b digest over the sorted metadata.
        """
        canonical = json.dumps(self.as_metadata(), sort_keys=True, default=str)
        return hashlib.blake2b(canonical.encode("utf-8"), digest_size=8).hexdigest()

    def refined(self, level: int) -> "RunConfig":
        """Copy with n and M multiplied by 2**level."""
        if level < 0:
            raise ConfigError(f"Refinement level must be non-negative, got {level}")
        config = copy.copy(self)
        config.n, config.M = self.n * 2**level, self.M * 2**level
        return config

    def gamma_for(self, subdomain: str) -> float:
        """Grading exponent used on a subdomain ("D1" or "D2")."""
        return self.gamma_d1 if subdomain == "D1" else self.gamma_d2

    def errors_n_for(self, subdomain: str) -> List[int]:
        """Reduced dimensions used for the per-parameter error curves on a subdomain."""
        return [int(v) for v in (self.errors_n_d1 if subdomain == "D1" else self.errors_n_d2)]

    def cg_max_iter(self, n_free: int) -> int:
        """CG iteration cap for a system with n_free unknowns."""
        return max(int(math.ceil(self.cg_max_factor * math.sqrt(n_free))), 10)
