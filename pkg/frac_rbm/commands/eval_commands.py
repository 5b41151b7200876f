import math
import os
from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger

from ..core.config import RunConfig
from ..core.errors import FracRBMError, IndefiniteOperatorError, ModelIOError
from ..core.logging import stage
from ..methods.certify import (
    CERTIFICATE_COLUMNS,
    ErrorCertificate,
    error_bound,
    smallest_eigenpair,
    trace_inequality_check,
)
from ..methods.fem_truth import l2_norm_omega, reference_operator, trace_bottom
from ..methods.mesh import build_unit_square_triangulation
from ..methods.oracle import hs_norm, spectral_solve
from ..methods.problems import Parameter, rhs_from_config
from ..methods.rbm import online_trace
from .command_utils import make_mapper, write_csv
from .pipeline import (
    SUBDOMAINS,
    config_from_metadata,
    load_trained,
    model_path,
    truth_for_bundle,
    validation_parameters,
)

# Random truth solutions checked against the trace inequality per subdomain.
TRACE_CHECKS = 30


class EvalCommands:
    """Online evaluation and certification of trained models."""

    def __init__(self, config: RunConfig):
        self.config = config
        logger.debug("EvalCommands initialized.")

    def cmd_eval(self, model: str, s: float, nu: Optional[float] = None, dump: Optional[str] = None) -> Dict[str, Any]:
        """Evaluates a trained model at one parameter.

        Args:
            model: Path to a model file written by 'train'.
            s: Fractional order.
            nu: Load parameter of the two-parameter problem.
            dump: Optional CSV path for the trace field (x1, x2, u_N).

        Returns:
            Summary with the reduced coefficients, the L2 norm of u_N and, for modal
            right-hand sides, the L2 distance to the analytic solution.
        """
        logger.debug(f"[Command: eval] Called. Args: model={model}, s={s}, nu={nu}, dump={dump}")
        try:
            bundle = load_trained(model)
            reduced = bundle.reduced
            mu = Parameter(float(s), None if nu is None else float(nu))
            solution = reduced.solve(mu)
            trace = online_trace(reduced, solution)

            stored = config_from_metadata(bundle.config) if bundle.config else self.config
            tri = build_unit_square_triangulation(stored.n)
            if trace.shape != (tri.n_vertices,):
                raise ModelIOError(f"{model}: trace snapshots do not match an n={stored.n} triangulation")

            result: Dict[str, Any] = {
                "subdomain": bundle.subdomain.value,
                "s": mu.s,
                "nu": mu.nu,
                "N": reduced.N,
                "coefficients": solution.c.tolist(),
                "l2_norm": l2_norm_omega(trace, tri),
                "max_abs": float(np.max(np.abs(trace))),
            }

            modal = rhs_from_config(stored.rhs, stored.modal_coefficients).modal()
            if modal is not None:
                exact = spectral_solve(modal, mu.s)
                exact_nodal = exact.evaluate(tri.vertices[:, 0], tri.vertices[:, 1])
                result["oracle_l2_error"] = l2_norm_omega(trace - exact_nodal, tri)

            if dump:
                write_csv(
                    dump,
                    stored.config_hash(),
                    ["x1", "x2", "u_N"],
                    zip(tri.vertices[:, 0], tri.vertices[:, 1], trace),
                )
                result["dump"] = dump

            logger.info(
                f"[Command: eval] SUCCESS - {bundle.subdomain.value} N={reduced.N} s={mu.s:g}: "
                f"||u_N||_L2={result['l2_norm']:.6e}"
                + (f", oracle error {result['oracle_l2_error']:.3e}" if "oracle_l2_error" in result else "")
            )
            return result

        except (FracRBMError, ValueError) as e:
            logger.error(f"[Command: eval] FAILED - {e}")
            raise
        except Exception as e:
            logger.exception(f"[Command: eval] FAILED - Unexpected error: {e}")
            raise RuntimeError(f"An unexpected error occurred while evaluating the model: {e}") from e

    def cmd_certify(self, model: Optional[str] = None) -> Dict[str, Any]:
        """Checks the certified bound over the validation grid.

        For every validation parameter the bound Delta_N is compared with the
        H^s trace error of the reduced solution against the truth, and the SCM
        lower bound with the exact smallest eigenvalue. The trace inequality is
        checked on a seeded random sample of the truth solutions; its left side
        uses the first J x J modes, and J is written with every row.

        Args:
            model: Model file to certify; defaults to the trained models of both subdomains.

        Returns:
            Per subdomain: violation counts and the effectivity range.
        """
        logger.debug(f"[Command: certify] Called. Args: model={model}")
        config = self.config
        paths = [model] if model else [model_path(config, "rb", d) for d in SUBDOMAINS]
        mapper = make_mapper(config.threads)
        summary: Dict[str, Any] = {}
        try:
            for path in paths:
                bundle = load_trained(path)
                if bundle.scm is None:
                    raise ModelIOError(f"{path} holds no SCM model; run 'train' first")
                name = bundle.subdomain.value
                stored = config_from_metadata(bundle.config) if bundle.config else config
                truth = truth_for_bundle(bundle, config)
                tri = truth.mesh.tri
                G = reference_operator(truth.mesh)
                J = stored.oracle_modes

                def certify_one(mu: Parameter):
                    sol = bundle.reduced.solve(mu)
                    try:
                        cert = error_bound(bundle.reduced, bundle.scm, mu, solution=sol)
                    except IndefiniteOperatorError as e:
                        logger.error(f"{name}: {e}")
                        cert = ErrorCertificate(mu, math.nan, e.value, math.nan, math.nan)
                    true_solution = truth.solve(mu)
                    difference = trace_bottom(true_solution) - online_trace(bundle.reduced, sol)
                    cert.true_error = hs_norm(difference, mu.s, tri, J) if np.any(difference) else 0.0
                    beta_exact, _ = smallest_eigenpair(truth.operator.at(mu), G)
                    return cert, beta_exact, true_solution

                grid = validation_parameters(stored, bundle.subdomain)
                with stage(f"certify {name}"):
                    results = list(mapper(certify_one, grid))

                rows: List[List[float]] = []
                bound_violations = beta_violations = uncertified = 0
                effectivities = []
                for cert, beta_exact, _ in results:
                    if math.isnan(cert.delta_N):
                        uncertified += 1
                    elif cert.delta_N < cert.true_error:
                        bound_violations += 1
                    if cert.beta_lb > beta_exact:
                        beta_violations += 1
                    if cert.effectivity is not None and not math.isnan(cert.effectivity):
                        effectivities.append(cert.effectivity)
                    rows.append(cert.as_row() + [beta_exact])

                trace_violations = 0
                trace_rows = []
                rng = np.random.default_rng(stored.seed)
                picks = np.sort(rng.choice(len(results), size=min(TRACE_CHECKS, len(results)), replace=False))
                for i in picks:
                    true_solution = results[i][2]
                    lhs, rhs = trace_inequality_check(true_solution, true_solution.mu.s, J=J)
                    trace_violations += int(lhs > rhs)
                    trace_rows.append((*true_solution.mu.as_row(), J, lhs, rhs))

                digest = stored.config_hash()
                write_csv(
                    os.path.join(config.output_dir, f"certify_{name}.csv"),
                    digest,
                    CERTIFICATE_COLUMNS + ["beta_exact"],
                    rows,
                )
                write_csv(
                    os.path.join(config.output_dir, f"trace_inequality_{name}.csv"),
                    digest,
                    ["s", "nu", "modes_J", "trace_hs_norm_J", "scaled_xh_norm"],
                    trace_rows,
                )
                summary[name] = {
                    "points": len(rows),
                    "bound_violations": bound_violations,
                    "uncertified": uncertified,
                    "beta_violations": beta_violations,
                    "trace_violations": trace_violations,
                    "trace_checks": len(trace_rows),
                    "trace_modes": J,
                    "effectivity_min": float(min(effectivities)) if effectivities else float("nan"),
                    "effectivity_max": float(max(effectivities)) if effectivities else float("nan"),
                }
                if bound_violations or beta_violations or trace_violations or uncertified:
                    logger.warning(f"{name}: certification violations {summary[name]}")

            logger.info(
                "[Command: certify] SUCCESS - "
                + ", ".join(
                    f"{k}: {v['bound_violations']} violations, effectivity "
                    f"[{v['effectivity_min']:.2f}, {v['effectivity_max']:.2f}]"
                    for k, v in summary.items()
                ),
            )
            return summary

        except FracRBMError as e:
            logger.error(f"[Command: certify] FAILED - {e}")
            raise
        except Exception as e:
            logger.exception(f"[Command: certify] FAILED - Unexpected error: {e}")
            raise RuntimeError(f"An unexpected error occurred while certifying: {e}") from e
