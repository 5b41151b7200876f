"""
Single-file container for trained models.

Layout (all integers little-endian):

    b"FRBM"                      magic
    u4                           format version
    u8 + bytes                   metadata, UTF-8 JSON with sorted keys
    u4                           number of sections
    per section:
        u2 + bytes               section name, UTF-8
        u1                       number of dimensions
        u8 * ndim                shape
        f8 * prod(shape)         payload, C order
    8 bytes                      blake2b-64 digest of everything above

Writes go to a temporary file in the target directory followed by an atomic rename.
"""

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger

from ..methods.certify import SCMModel
from ..methods.eim import EIMModel
from ..methods.problems import Parameter, Subdomain, params_from_array, params_to_array
from ..methods.rbm import GreedyStep, ReducedModel
from .errors import ModelFormatError, ModelIOError

MAGIC = b"FRBM"
FORMAT_VERSION = 1
CHECKSUM_SIZE = 8
MODEL_SUFFIX = ".frbm"


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=CHECKSUM_SIZE).digest()


def encode_container(metadata: Dict[str, Any], sections: Dict[str, np.ndarray]) -> bytes:
    """Serialize metadata and named float arrays into the container byte layout."""
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(meta)), meta,
             struct.pack("<I", len(sections))]
    for name, array in sections.items():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(array, dtype="<f8")
        if data.ndim > 255:
            raise ValueError(f"Section '{name}' has too many dimensions")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        parts.append(data.tobytes(order="C"))
    body = b"".join(parts)
    return body + _checksum(body)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise ModelFormatError(
                f"Truncated {what}: needed {size} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_container(data: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Parse container bytes.

    Raises:
        ModelFormatError: On a bad magic, unknown version, truncated section (named) or checksum mismatch.
    """
    reader = _Reader(data)
    magic = reader.take(len(MAGIC), "header")
    if magic != MAGIC:
        raise ModelFormatError(f"Not a model file (magic {magic!r})")
    (version,) = reader.unpack("<I", "header")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"Unsupported format version {version} (this build reads version {FORMAT_VERSION})")
    (meta_size,) = reader.unpack("<Q", "metadata")
    try:
        metadata = json.loads(reader.take(meta_size, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"Corrupt metadata: {e}") from e

    (count,) = reader.unpack("<I", "section table")
    sections: Dict[str, np.ndarray] = {}
    for k in range(count):
        (name_size,) = reader.unpack("<H", f"section #{k + 1} name")
        name = reader.take(name_size, f"section #{k + 1} name").decode("utf-8", errors="replace")
        (ndim,) = reader.unpack("<B", f"section '{name}'")
        shape = reader.unpack(f"<{ndim}Q", f"section '{name}'")
        payload = reader.take(8 * int(np.prod(shape, dtype=np.int64)), f"section '{name}'")
        sections[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)

    body_end = reader.pos
    stored = reader.take(CHECKSUM_SIZE, "checksum")
    if reader.pos != len(data):
        raise ModelFormatError(f"{len(data) - reader.pos} trailing bytes after the checksum")
    if stored != _checksum(data[:body_end]):
        raise ModelFormatError("Checksum mismatch: the file is corrupt")
    return metadata, sections


def write_container(path: str, metadata: Dict[str, Any], sections: Dict[str, np.ndarray]) -> None:
    """Atomically write a container to path."""
    data = encode_container(metadata, sections)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", suffix=MODEL_SUFFIX, dir=directory)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp_path, path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise
    except OSError as e:
        logger.error(f"Error writing model file {path}: {e}")
        raise ModelIOError(f"Failed to write model file '{path}': {e}") from e
    logger.debug(f"Wrote {len(data)} bytes to {path}")


def read_container(path: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    if not os.path.isfile(path):
        raise ModelIOError(f"Model file not found: {path}")
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ModelIOError(f"Failed to read model file '{path}': {e}") from e
    try:
        return decode_container(data)
    except ModelFormatError as e:
        raise ModelFormatError(f"{path}: {e}") from e


# --- Model bundles ---


@dataclass
class ModelBundle:
    """
    What one model file holds for one subdomain.

    Attributes:
        subdomain: D1 or D2.
        eim: EIM model (always present).
        reduced: Trained reduced model, if any.
        scm: SCM model, if any.
        config: Flat run configuration the models were built with.
        timings: Wall times of the offline stages, in seconds.
        created: ISO timestamp of the save.
    """

    subdomain: Subdomain
    eim: EIMModel
    reduced: Optional[ReducedModel] = None
    scm: Optional[SCMModel] = None
    config: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    created: str = ""


def _eim_sections(eim: EIMModel) -> Dict[str, np.ndarray]:
    return {
        "eim/s_snapshots": eim.s_snapshots,
        "eim/magic_indices": eim.magic_indices.astype(float),
        "eim/magic_points": eim.magic_points,
        "eim/interp_matrix": eim.interp_matrix,
        "eim/change_of_basis": eim.change_of_basis,
        "eim/y_grid": eim.y_grid,
        "eim/s_grid": eim.s_grid,
        "eim/error_history": eim.error_history,
    }


def _history_rows(history) -> np.ndarray:
    rows = []
    for step in history:
        next_row = step.next_mu.as_row() if step.next_mu is not None else (np.nan, np.nan)
        rows.append([step.n, *step.mu.as_row(), step.objective, step.change, *next_row])
    return np.array(rows, dtype=float).reshape(len(rows), 7)


def _history_from_rows(rows: np.ndarray) -> Tuple[GreedyStep, ...]:
    steps = []
    for row in rows:
        next_mu = None if np.isnan(row[5]) else Parameter.from_row(row[5:7])
        steps.append(GreedyStep(int(row[0]), Parameter.from_row(row[1:3]), float(row[3]), float(row[4]), next_mu))
    return tuple(steps)


def _reduced_sections(model: ReducedModel) -> Dict[str, np.ndarray]:
    sections = {
        "rb/mu_snapshots": params_to_array(model.mu_snapshots),
        "rb/basis": model.basis,
        "rb/change_of_basis": model.change_of_basis,
        "rb/reduced_ops": model.reduced_ops,
        "rb/reduced_loads": model.reduced_loads,
        "rb/trace_snapshots": model.trace_snapshots,
        "rb/trace_gram": model.trace_gram,
        "rb/history": _history_rows(model.history),
    }
    if model.riesz_factor is not None:
        sections["rb/riesz_factor"] = model.riesz_factor
    return sections


def _scm_sections(scm: SCMModel) -> Dict[str, np.ndarray]:
    return {
        "scm/sigma_lower": scm.sigma_lower,
        "scm/sigma_upper": scm.sigma_upper,
        "scm/constraint_s": scm.constraint_s,
        "scm/constraint_betas": scm.constraint_betas,
        "scm/constraint_rayleigh": scm.constraint_rayleigh,
        "scm/element_weighted": scm.element_weighted,
        "scm/element_reference": scm.element_reference,
    }


def save(bundle: ModelBundle, path: str) -> None:
    """
    Save a bundle; every array round-trips bit-exactly.

    Raises:
        ModelIOError: If the file cannot be written.
    """
    sections = _eim_sections(bundle.eim)
    contents = ["eim"]
    metadata: Dict[str, Any] = {
        "subdomain": bundle.subdomain.value,
        "created": bundle.created or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": bundle.config,
        "timings": bundle.timings,
    }
    if bundle.reduced is not None:
        sections.update(_reduced_sections(bundle.reduced))
        metadata["load_rule"] = bundle.reduced.load_rule
        contents.append("rb")
    if bundle.scm is not None:
        sections.update(_scm_sections(bundle.scm))
        contents.append("scm")
    metadata["contents"] = contents
    write_container(path, metadata, sections)
    logger.info(f"Saved {'+'.join(contents)} model for {bundle.subdomain.value} to {path}")


def _require(sections: Dict[str, np.ndarray], name: str) -> np.ndarray:
    if name not in sections:
        raise ModelFormatError(f"Missing section '{name}'")
    return sections[name]


def load(path: str) -> ModelBundle:
    """
    Load a bundle written by save().

    Raises:
        ModelIOError: If the file is missing or unreadable.
        ModelFormatError: If its content is malformed.
    """
    metadata, sections = read_container(path)
    try:
        subdomain = Subdomain(metadata["subdomain"])
        contents = metadata.get("contents", ["eim"])
    except (KeyError, ValueError) as e:
        raise ModelFormatError(f"{path}: bad metadata: {e}") from e

    eim = EIMModel(
        subdomain,
        _require(sections, "eim/s_snapshots"),
        _require(sections, "eim/magic_indices").astype(np.int64),
        _require(sections, "eim/magic_points"),
        _require(sections, "eim/interp_matrix"),
        _require(sections, "eim/change_of_basis"),
        _require(sections, "eim/y_grid"),
        _require(sections, "eim/s_grid"),
        _require(sections, "eim/error_history"),
    )

    reduced = None
    if "rb" in contents:
        reduced = ReducedModel(
            eim=eim,
            mu_snapshots=tuple(params_from_array(_require(sections, "rb/mu_snapshots"))),
            basis=_require(sections, "rb/basis"),
            change_of_basis=_require(sections, "rb/change_of_basis"),
            reduced_ops=_require(sections, "rb/reduced_ops"),
            reduced_loads=_require(sections, "rb/reduced_loads"),
            load_rule=metadata.get("load_rule", "constant"),
            trace_snapshots=_require(sections, "rb/trace_snapshots"),
            trace_gram=_require(sections, "rb/trace_gram"),
            riesz_factor=sections.get("rb/riesz_factor"),
            history=_history_from_rows(_require(sections, "rb/history")),
        )

    scm = None
    if "scm" in contents:
        scm = SCMModel(
            eim,
            _require(sections, "scm/sigma_lower"),
            _require(sections, "scm/sigma_upper"),
            _require(sections, "scm/constraint_s"),
            _require(sections, "scm/constraint_betas"),
            _require(sections, "scm/constraint_rayleigh"),
            _require(sections, "scm/element_weighted"),
            _require(sections, "scm/element_reference"),
        )

    logger.debug(f"Loaded {'+'.join(contents)} model for {subdomain.value} from {path}")
    return ModelBundle(
        subdomain,
        eim,
        reduced,
        scm,
        metadata.get("config", {}),
        metadata.get("timings", {}),
        metadata.get("created", ""),
    )
