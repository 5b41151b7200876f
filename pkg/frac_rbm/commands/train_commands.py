import os
from typing import Any, Dict

import numpy as np
from loguru import logger

from ..core.config import RunConfig
from ..core.errors import FracRBMError
from ..core.logging import stage
from ..core.model_io import ModelBundle, save
from ..methods.certify import scm_build
from ..methods.rbm import error_ensembles, greedy_offline
from .command_utils import make_mapper, write_csv
from .pipeline import SUBDOMAINS, build_truth, model_path, obtain_eim, test_parameters, training_parameters


class TrainCommands:
    """Offline training: SCM, greedy reduced basis and convergence tables."""

    def __init__(self, config: RunConfig):
        self.config = config
        logger.debug("TrainCommands initialized.")

    def cmd_train(self) -> Dict[str, Any]:
        """Trains one reduced model per subdomain and writes the convergence tables.

        For each subdomain the EIM model is reused or built, the SCM model and
        the greedy reduced basis are computed on the training grid, and the
        trace errors against both truths are evaluated on the disjoint test grid.

        Returns:
            Per subdomain: reduced dimension, median/max error at the final N and model path.
        """
        config = self.config
        logger.debug(
            f"[Command: train] Called. Args: rhs={config.rhs}, greedy={config.greedy_mode}, n_max={config.n_max}"
        )
        digest = config.config_hash()
        mapper = make_mapper(config.threads)
        summary: Dict[str, Any] = {}
        try:
            for subdomain in SUBDOMAINS:
                name = subdomain.value
                timings: Dict[str, float] = {}
                with stage(f"eim {name}") as timing:
                    eim = obtain_eim(config, subdomain)
                timings["eim"] = timing["elapsed"]
                truth = build_truth(config, eim)
                training = training_parameters(config, subdomain)
                logger.info(f"{name}: {truth.n_free} truth dofs, {len(training)} training points, Q={eim.Q}")

                with stage(f"scm {name}") as timing:
                    scm = scm_build(truth.operator, training, config.n_constraints)
                timings["scm"] = timing["elapsed"]

                with stage(f"offline {name}") as timing:
                    model = greedy_offline(
                        truth,
                        training,
                        n_max=config.n_max,
                        tol=config.rb_tol,
                        mode=config.greedy_mode,
                        scm=scm,
                        first=config.first_snapshot,
                        seed=config.seed,
                        mapper=mapper,
                    )
                timings["offline"] = timing["elapsed"]

                path = model_path(config, "rb", subdomain)
                save(ModelBundle(subdomain, eim, model, scm, config.as_metadata(), timings), path)

                tests = test_parameters(config, subdomain, training)
                with stage(f"errors {name}"):
                    ensembles = error_ensembles(model, truth, tests, training_set=training, mapper=mapper)

                out = config.output_dir
                rows = ensembles.summary()
                write_csv(
                    os.path.join(out, f"convergence_{name}.csv"),
                    digest,
                    ["N", "median_E", "max_E", "min_E", "median_F", "max_F", "min_F"],
                    rows,
                )

                curve_n = [n for n in config.errors_n_for(name) if n <= model.N]
                columns = ["s", "nu"] + [f"E_{n}" for n in curve_n] + [f"F_{n}" for n in curve_n] + ["truth_gap"]
                curve_rows = []
                for i, mu in enumerate(ensembles.test_set):
                    row = list(mu.as_row())
                    row += [ensembles.eim_errors[n - 1, i] for n in curve_n]
                    row += [ensembles.exact_errors[n - 1, i] for n in curve_n]
                    row.append(ensembles.truth_gap[i])
                    curve_rows.append(row)
                write_csv(os.path.join(out, f"errors_vs_s_{name}.csv"), digest, columns, curve_rows)

                write_csv(
                    os.path.join(out, f"greedy_{name}.csv"),
                    digest,
                    ["n", "s", "nu", "max_objective", "stop_quantity"],
                    [(step.n, *step.mu.as_row(), step.objective, step.change) for step in model.history],
                )

                final = rows[-1]
                summary[name] = {
                    "N": model.N,
                    "median_E": final[1],
                    "max_E": final[2],
                    "median_F": final[4],
                    "truth_gap_median": float(np.median(ensembles.truth_gap)),
                    "path": path,
                }

            logger.info(
                "[Command: train] SUCCESS - "
                + ", ".join(f"{k}: N={v['N']} median E={v['median_E']:.2e}" for k, v in summary.items()),
            )
            return summary

        except FracRBMError as e:
            logger.error(f"[Command: train] FAILED - {e}")
            raise
        except Exception as e:
            logger.exception(f"[Command: train] FAILED - Unexpected error: {e}")
            raise RuntimeError(f"An unexpected error occurred while training: {e}") from e
