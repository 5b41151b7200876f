"""
Builders shared by the command providers: meshes, EIM models, truth problems and parameter sets from a RunConfig.
"""

import os
from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger

from ..core.config import RunConfig
from ..core.errors import ConfigError, ModelIOError
from ..core.model_io import MODEL_SUFFIX, ModelBundle, load
from ..methods.eim import EIMModel, eim_build, eim_y_grid
from ..methods.fem_truth import TruthProblem, assemble_affine_components, assemble_load
from ..methods.mesh import CylinderMesh, build_cylinder_mesh, build_graded_partition, build_unit_square_triangulation
from ..methods.problems import (
    Parameter,
    Subdomain,
    remove_overlap,
    rhs_from_config,
    subdomain_range,
    tensor_test_set,
    test_set,
    training_set,
)

SUBDOMAINS = (Subdomain.D1, Subdomain.D2)


def build_mesh(config: RunConfig, subdomain: Subdomain) -> CylinderMesh:
    tri = build_unit_square_triangulation(config.n)
    interval = build_graded_partition(config.M, config.gamma_for(subdomain.value), config.y_plus)
    return build_cylinder_mesh(tri, interval)


def eim_s_grid(config: RunConfig, subdomain: Subdomain) -> np.ndarray:
    lo, hi = subdomain_range(subdomain, config.s_min, config.s_max)
    return np.linspace(lo, hi, config.eim_s_points)


def build_eim(config: RunConfig, subdomain: Subdomain) -> EIMModel:
    y_grid = eim_y_grid(subdomain, config.M, config.gamma_for(subdomain.value), config.y_plus, config.eim_refinement)
    return eim_build(subdomain, y_grid, eim_s_grid(config, subdomain), config.eim_q_max, config.eim_tol)


def model_path(config: RunConfig, kind: str, subdomain: Subdomain) -> str:
    """Path of a model file, e.g. ``<output_dir>/eim_D1.frbm``."""
    return os.path.join(config.output_dir, f"{kind}_{subdomain.value}{MODEL_SUFFIX}")


def obtain_eim(config: RunConfig, subdomain: Subdomain) -> EIMModel:
    """Reuse a saved EIM model built with the same configuration, otherwise build one."""
    path = model_path(config, "eim", subdomain)
    if os.path.isfile(path):
        try:
            bundle = load(path)
        except ModelIOError as e:
            logger.warning(f"Ignoring unreadable EIM model {path}: {e}")
        else:
            if bundle.config == config.as_metadata():
                logger.debug(f"Reusing EIM model {path}")
                return bundle.eim
            logger.debug(f"EIM model {path} was built with another configuration; rebuilding")
    return build_eim(config, subdomain)


def build_truth(config: RunConfig, eim: EIMModel, mesh: Optional[CylinderMesh] = None) -> TruthProblem:
    mesh = mesh or build_mesh(config, eim.subdomain)
    operator = assemble_affine_components(mesh, eim)
    loads = assemble_load(mesh, rhs_from_config(config.rhs, config.modal_coefficients))
    return TruthProblem(operator, loads, config.cg_tol, config.cg_max_iter(mesh.n_free))


def is_two_parameter(config: RunConfig) -> bool:
    return rhs_from_config(config.rhs, config.modal_coefficients).n_components > 1


def training_parameters(config: RunConfig, subdomain: Subdomain) -> List[Parameter]:
    if is_two_parameter(config):
        return training_set(subdomain, config.tensor_s_points, config.s_min, config.s_max, config.train_nu_points)
    return training_set(subdomain, config.train_s_points, config.s_min, config.s_max)


def test_parameters(config: RunConfig, subdomain: Subdomain, training: List[Parameter]) -> List[Parameter]:
    """Test ensemble with every training point removed."""
    if is_two_parameter(config):
        candidates = tensor_test_set(subdomain, config.test_tensor_points, config.s_min, config.s_max)
    else:
        candidates = test_set(subdomain, config.test_s_points, config.s_min, config.s_max)
    kept = remove_overlap(candidates, training)
    if len(kept) < len(candidates):
        logger.debug(f"Dropped {len(candidates) - len(kept)} test points shared with the training set")
    return kept


def validation_parameters(config: RunConfig, subdomain: Subdomain) -> List[Parameter]:
    """Certification grid: interior s points; nu drawn from the seeded generator for the two-parameter problem."""
    s_values = [p.s for p in test_set(subdomain, config.validation_points, config.s_min, config.s_max)]
    if not is_two_parameter(config):
        return [Parameter(s) for s in s_values]
    rng = np.random.default_rng(config.seed)
    return [Parameter(s, float(nu)) for s, nu in zip(s_values, rng.uniform(0.0, 1.0, len(s_values)))]


def config_from_metadata(metadata: Dict[str, Any]) -> RunConfig:
    """Rebuild the configuration stored in a model file."""
    values = {key: value for key, value in metadata.items() if key != "version"}
    try:
        return RunConfig.from_values(**values)
    except ConfigError as e:
        raise ModelIOError(f"Model file carries an unusable configuration: {e}") from e


def load_trained(path: str) -> ModelBundle:
    """
    Load a bundle that carries a reduced model.

    Raises:
        ModelIOError: If the file is missing, unreadable or holds no reduced model.
    """
    bundle = load(path)
    if bundle.reduced is None:
        raise ModelIOError(f"{path} holds no reduced model; run 'train' first")
    return bundle


def truth_for_bundle(bundle: ModelBundle, config: Optional[RunConfig] = None) -> TruthProblem:
    """Truth problem matching the mesh and right-hand side the bundle was trained with."""
    stored = config_from_metadata(bundle.config) if bundle.config else config
    if stored is None:
        raise ModelIOError("Model file carries no configuration")
    return build_truth(stored, bundle.eim)
