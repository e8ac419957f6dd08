#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Files emitted by the CLI: fitted-model JSON documents and provenance-stamped
CSV tables.

Every file records the tool version, the SHA-256 digest of its input and the
seed; nothing time-dependent is written, so reruns are byte-identical.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
import numpy as np
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
import config
from errors import ValidationError
from estimator.crossval import CriterionRow
from estimator.model_core import ClusterAssignment, ClusteredModel, EmpiricalCdf, RobotRoster

_logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
#  Provenance
# --------------------------------------------------------------------------- #
def file_digest(path: Path) -> str:
    """SHA-256 hex digest of a file's bytes."""
    sha = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()


def provenance(input_digest: str, seed: int) -> Dict[str, Any]:
    return {"tool_version": config.TOOL_VERSION, "input_digest": input_digest, "seed": seed}


def provenance_line(values: Mapping[str, Any]) -> str:
    return "# " + " ".join(f"{key}={values[key]}" for key in ("tool_version", "input_digest", "seed"))


def format_number(value: Any) -> Any:
    """Shortest round-tripping text for floats; other values unchanged."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]], stamp: Mapping[str, Any]) -> Path:
    """CSV with a leading provenance comment line and ``\\n`` line endings."""
    path = Path(path)
    config.ensure_dir(path.parent)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(provenance_line(stamp) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


# --------------------------------------------------------------------------- #
#  Fitted-model document
# --------------------------------------------------------------------------- #
class ModelDocument(BaseModel):
    """JSON form of a selected model."""

    schema_version: int = Field(config.MODEL_SCHEMA_VERSION, description="Version of this document layout")
    tool_version: str = Field(config.TOOL_VERSION)
    input_digest: str = Field("", description="SHA-256 of the match CSV the model was fitted on")
    seed: int = Field(0)
    event_key: str = Field("", description="Event the matches belong to")
    method: str = Field("", description="Candidate chain that produced the model")
    criterion: str = Field("", description="Criterion that selected the model")
    roster: List[str] = Field(description="Robot identifiers in design column order")
    selected_c: int = Field(ge=1)
    g: List[int] = Field(description="1-based cluster of each robot")
    theta: List[float] = Field(description="Cluster strengths, ascending")
    beta: List[float] = Field(description="Robot strengths")
    residuals: List[float] = Field(description="Fitted residuals in match order")
    criteria: List[Dict[str, Any]] = Field(default_factory=list, description="Criterion table of the chain")


def model_document(
    model: ClusteredModel,
    roster: RobotRoster,
    *,
    event_key: str = "",
    method: str = "",
    criterion: str = "",
    table: Sequence[CriterionRow] = (),
    input_digest: str = "",
    seed: int = 0,
) -> ModelDocument:
    rows = []
    for row in table:
        rows.append({key: (_finite_or_none(v) if isinstance(v, float) else v) for key, v in row.as_dict().items()})
    return ModelDocument(
        input_digest=input_digest,
        seed=seed,
        event_key=event_key,
        method=method,
        criterion=criterion,
        roster=list(roster.robots),
        selected_c=model.c,
        g=model.assignment.g.tolist(),
        theta=[float(v) for v in model.theta],
        beta=[float(v) for v in model.beta],
        residuals=[float(v) for v in model.residuals],
        criteria=rows,
    )


def write_model_json(document: ModelDocument, path: Path) -> Path:
    path = Path(path)
    config.ensure_dir(path.parent)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(document.model_dump_json(indent=2))
        handle.write("\n")
    _logger.info(f"Wrote model document {path}")
    return path


def load_model_json(path: Path) -> ModelDocument:
    """
    Read a model document.

    Raises
    ------
    ValidationError
        The file is missing, is not JSON, or has another schema version.
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            document = ModelDocument.model_validate(json.load(handle))
    except FileNotFoundError:
        raise ValidationError(f"model file not found: {path}") from None
    except (json.JSONDecodeError, PydanticValidationError) as exc:
        raise ValidationError(f"{path}: not a model document: {exc}") from exc
    if document.schema_version != config.MODEL_SCHEMA_VERSION:
        raise ValidationError(f"{path}: schema_version {document.schema_version} is not supported")
    return document


def model_from_document(document: ModelDocument) -> ClusteredModel:
    """Rebuild the fitted model (strengths, residual distribution) from a document."""
    assignment = ClusterAssignment.from_g(document.g)
    if assignment.c != document.selected_c or len(document.theta) != assignment.c:
        raise ValidationError("model document is inconsistent: cluster count does not match g and theta")
    if len(document.beta) != len(document.roster) or assignment.k != len(document.roster):
        raise ValidationError("model document is inconsistent: roster, g and beta lengths differ")
    residuals = np.array(document.residuals, dtype=float)
    theta = np.array(document.theta, dtype=float)
    beta = np.array(document.beta, dtype=float)
    for arr in (residuals, theta, beta):
        arr.setflags(write=False)
    return ClusteredModel(
        assignment=assignment,
        theta=theta,
        beta=beta,
        residuals=residuals,
        cdf=EmpiricalCdf.from_values(residuals),
        rss=float(residuals @ residuals),
    )
