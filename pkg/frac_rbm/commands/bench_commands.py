import math
import os
from typing import Any, Dict, List, Tuple

from loguru import logger

from ..core.config import RunConfig
from ..core.errors import FracRBMError
from ..core.logging import stage
from ..methods.fem_truth import TruthProblem, assemble_load, l2_norm_omega, solve_truth_exact_weight, trace_bottom
from ..methods.mesh import build_cylinder_mesh, build_graded_partition, build_unit_square_triangulation
from ..methods.oracle import hs_norm, project_to_modes, spectral_solve
from ..methods.problems import Parameter, Subdomain, example1_rhs
from ..methods.rbm import ReducedModel, greedy_offline, online_trace
from .command_utils import Timer, make_mapper, median_time, write_csv
from .pipeline import (
    SUBDOMAINS,
    build_truth,
    load_trained,
    model_path,
    obtain_eim,
    test_parameters,
    training_parameters,
    truth_for_bundle,
)

# Values of s used by the refinement study.
ORACLE_S_VALUES = (0.2, 0.5, 0.8)
TRUTH_REPEATS = 3
ONLINE_REPEATS = 200
SCALING_COLUMNS = ["level", "n", "M", "n_free", "N", "truth_seconds", "online_seconds", "offline_seconds", "speedup"]


class BenchCommands:
    """Timing comparison of truth and reduced solves, and the analytic convergence study."""

    def __init__(self, config: RunConfig):
        self.config = config
        logger.debug("BenchCommands initialized.")

    def cmd_bench(self, levels: int = 1) -> Dict[str, Any]:
        """Times truth and online solves and writes the cumulative cost table.

        The offline time is the one recorded when the model was trained. The
        cumulative cost of q queries is q * t_truth for the truth solver and
        t_offline + q * t_online for the reduced model.

        With levels > 1 the timing is repeated on meshes refined by doubling n
        and M per level (about 8x the truth dofs). Those reduced models are
        trained in memory with the residual-free greedy and are not saved.

        Args:
            levels: Number of resolutions in the scaling table; 1 times the trained models only.

        Returns:
            Per subdomain: marginal times, speedup, the crossover query count
            and the per-level ``scaling`` rows.
        """
        config = self.config
        logger.debug(f"[Command: bench] Called. Args: queries={config.bench_queries}, levels={levels}")
        if levels < 1:
            raise ValueError(f"levels must be positive, got {levels}")
        summary: Dict[str, Any] = {}
        try:
            for subdomain in SUBDOMAINS:
                name = subdomain.value
                bundle = load_trained(model_path(config, "rb", subdomain))
                reduced = bundle.reduced
                truth = truth_for_bundle(bundle, config)
                training = training_parameters(config, subdomain)
                queries = test_parameters(config, subdomain, training)
                mu = queries[len(queries) // 2]

                with stage(f"bench {name}"):
                    t_truth, t_online = _marginal_times(truth, reduced, mu)
                offline = float(sum(bundle.timings.get(k, 0.0) for k in ("eim", "scm", "offline")))

                speedup = t_truth / t_online if t_online > 0 else math.inf
                saving = t_truth - t_online
                crossover = int(math.ceil(offline / saving)) if saving > 0 else -1

                rows = [(q, q * t_truth, offline + q * t_online) for q in range(1, config.bench_queries + 1)]
                write_csv(
                    os.path.join(config.output_dir, f"bench_{name}.csv"),
                    config.config_hash(),
                    ["queries", "truth_cumulative", "rbm_cumulative"],
                    rows,
                )

                scaling = [_scaling_row(0, config, truth.n_free, reduced.N, t_truth, t_online, offline)]
                for level in range(1, levels):
                    scaling.append(self._bench_refined(level, subdomain, mu))
                if levels > 1:
                    write_csv(
                        os.path.join(config.output_dir, f"bench_scaling_{name}.csv"),
                        config.config_hash(),
                        SCALING_COLUMNS,
                        [[row[key] for key in SCALING_COLUMNS] for row in scaling],
                    )

                summary[name] = {
                    "n_free": truth.n_free,
                    "N": reduced.N,
                    "truth_seconds": t_truth,
                    "online_seconds": t_online,
                    "offline_seconds": offline,
                    "speedup": speedup,
                    "crossover_queries": crossover,
                    "scaling": scaling,
                }

            logger.info(
                "[Command: bench] SUCCESS - "
                + ", ".join(
                    f"{k}: speedup {v['speedup']:.0f}x, crossover at {v['crossover_queries']} queries"
                    for k, v in summary.items()
                ),
            )
            return summary

        except FracRBMError as e:
            logger.error(f"[Command: bench] FAILED - {e}")
            raise
        except Exception as e:
            logger.exception(f"[Command: bench] FAILED - Unexpected error: {e}")
            raise RuntimeError(f"An unexpected error occurred while benchmarking: {e}") from e

    def _bench_refined(self, level: int, subdomain: Subdomain, mu: Parameter) -> Dict[str, Any]:
        """Builds and times a reduced model on the mesh refined ``level`` times."""
        config = self.config.refined(level)
        name = subdomain.value
        with stage(f"bench {name} level {level}") as timing:
            eim = obtain_eim(config, subdomain)
            truth = build_truth(config, eim)
            reduced = greedy_offline(
                truth,
                training_parameters(config, subdomain),
                n_max=config.n_max,
                tol=config.rb_tol,
                first=config.first_snapshot,
                seed=config.seed,
                mapper=make_mapper(config.threads),
            )
        offline = timing["elapsed"]
        t_truth, t_online = _marginal_times(truth, reduced, mu)
        logger.info(
            f"{name} level {level}: {truth.n_free} dofs, N={reduced.N}, "
            f"truth {t_truth:.3e} s, online {t_online:.3e} s"
        )
        return _scaling_row(level, config, truth.n_free, reduced.N, t_truth, t_online, offline)

    def cmd_validate_oracle(self, levels: int = 2) -> Dict[str, Any]:
        """Refinement study of the exact-weight truth trace against the analytic solution.

        The load is sin(2 pi x1) sin(2 pi x2), an eigenfunction, so the exact
        solution is (8 pi^2)^-s times the load. Each level doubles n and M.

        Args:
            levels: Number of meshes in the study.

        Returns:
            Rows (s, n, M, dofs, relative L2 error, H^s error, observed rate).
        """
        config = self.config
        logger.debug(f"[Command: validate_oracle] Called. Args: levels={levels}")
        if levels < 1:
            raise ValueError(f"levels must be positive, got {levels}")
        rhs = example1_rhs()
        rows: List[List[float]] = []
        try:
            for s in ORACLE_S_VALUES:
                exact = spectral_solve(rhs.modal(), s)
                gamma = config.gamma_for(Subdomain.for_s(s).value)
                previous = None
                for level in range(levels):
                    n, M = config.n * 2**level, config.M * 2**level
                    tri = build_unit_square_triangulation(n)
                    mesh = build_cylinder_mesh(tri, build_graded_partition(M, gamma, config.y_plus))
                    with Timer() as timer:
                        solution = solve_truth_exact_weight(
                            mesh, s, assemble_load(mesh, rhs), config.cg_tol, config.cg_max_iter(mesh.n_free)
                        )
                    trace = trace_bottom(solution)
                    exact_nodal = exact.evaluate(tri.vertices[:, 0], tri.vertices[:, 1])
                    l2_error = l2_norm_omega(trace - exact_nodal, tri) / exact.l2_norm()
                    modal_error = project_to_modes(trace, tri, config.oracle_modes) - exact.padded(config.oracle_modes)
                    hs_error = hs_norm(modal_error, s)
                    rate = math.log2(previous / l2_error) if previous and l2_error > 0 else float("nan")
                    previous = l2_error
                    rows.append([s, n, M, mesh.n_free, l2_error, hs_error, rate])
                    logger.debug(
                        f"s={s} n={n} M={M}: L2 error {l2_error:.3e}, H^s error {hs_error:.3e} "
                        f"({timer.elapsed:.2f} s, {solution.iterations} CG iterations)"
                    )

            write_csv(
                os.path.join(config.output_dir, "oracle_validation.csv"),
                config.config_hash(),
                ["s", "n", "M", "dofs", "l2_relative_error", "hs_error", "rate"],
                rows,
            )
            worst = max(row[4] for row in rows if row[1] == config.n)
            logger.info(f"[Command: validate_oracle] SUCCESS - worst coarse-level relative L2 error {worst:.3e}")
            return {"rows": rows}

        except FracRBMError as e:
            logger.error(f"[Command: validate_oracle] FAILED - {e}")
            raise
        except Exception as e:
            logger.exception(f"[Command: validate_oracle] FAILED - Unexpected error: {e}")
            raise RuntimeError(f"An unexpected error occurred while validating against the oracle: {e}") from e


def _marginal_times(truth: TruthProblem, reduced: ReducedModel, mu: Parameter) -> Tuple[float, float]:
    t_truth = median_time(lambda: truth.solve(mu), TRUTH_REPEATS)
    t_online = median_time(lambda: online_trace(reduced, mu), ONLINE_REPEATS)
    return t_truth, t_online


def _scaling_row(
    level: int, config: RunConfig, n_free: int, N: int, t_truth: float, t_online: float, offline: float
) -> Dict[str, Any]:
    return {
        "level": level,
        "n": config.n,
        "M": config.M,
        "n_free": n_free,
        "N": N,
        "truth_seconds": t_truth,
        "online_seconds": t_online,
        "offline_seconds": offline,
        "speedup": t_truth / t_online if t_online > 0 else math.inf,
    }
