import os
from typing import Any, Dict

from loguru import logger

from ..core.config import RunConfig
from ..core.errors import FracRBMError
from ..core.logging import stage
from ..core.model_io import ModelBundle, save
from ..methods.eim import eim_envelope, eim_positivity
from .command_utils import write_csv
from .pipeline import SUBDOMAINS, build_eim, model_path


class EIMCommands:
    """Builds and stores the EIM models of both subdomains."""

    def __init__(self, config: RunConfig):
        self.config = config
        logger.debug("EIMCommands initialized.")

    def cmd_build_eim(self) -> Dict[str, Any]:
        """Builds the EIM models and writes their decay, magic-point and envelope tables.

        Returns:
            Per subdomain: number of terms, final sup error, positivity flag and model path.
        """
        logger.debug(f"[Command: build_eim] Called. Args: output_dir={self.config.output_dir}")
        config = self.config
        digest = config.config_hash()
        summary: Dict[str, Any] = {}
        try:
            for subdomain in SUBDOMAINS:
                name = subdomain.value
                with stage(f"eim {name}") as timing:
                    eim = build_eim(config, subdomain)
                positivity = eim_positivity(eim)

                path = model_path(config, "eim", subdomain)
                save(ModelBundle(subdomain, eim, config=config.as_metadata(), timings={"eim": timing["elapsed"]}), path)

                out = config.output_dir
                write_csv(
                    os.path.join(out, f"eim_decay_{name}.csv"),
                    digest,
                    ["q", "sup_error"],
                    [(q + 1, err) for q, err in enumerate(eim.error_history)],
                )
                write_csv(
                    os.path.join(out, f"eim_magic_{name}.csv"),
                    digest,
                    ["q", "s", "y"],
                    [(q + 1, s, y) for q, (s, y) in enumerate(zip(eim.s_snapshots, eim.magic_points))],
                )
                envelope = eim_envelope(eim)
                columns = list(envelope)
                write_csv(
                    os.path.join(out, f"eim_envelope_{name}.csv"),
                    digest,
                    columns,
                    zip(*(envelope[c] for c in columns)),
                )
                summary[name] = {
                    "Q": eim.Q,
                    "sup_error": float(eim.error_history[-1]),
                    "positive": positivity.positive,
                    "path": path,
                }

            logger.info(
                "[Command: build_eim] SUCCESS - "
                + ", ".join(f"{k}: Q={v['Q']} error={v['sup_error']:.2e}" for k, v in summary.items()),
            )
            return summary

        except FracRBMError as e:
            logger.error(f"[Command: build_eim] FAILED - {e}")
            raise
        except Exception as e:
            logger.exception(f"[Command: build_eim] FAILED - Unexpected error: {e}")
            raise RuntimeError(f"An unexpected error occurred while building the EIM models: {e}") from e
