#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Match CSV ingestion: canonical read/write and import of replication-file layouts.

Canonical layout (one header row, UTF-8, ``\\n`` line endings):

    match_id,red1,red2,red3,blue1,blue2,blue3,red_score,blue_score

Matches are ordered by the numeric part of ``match_id`` and the roster lists
every robot that appears, in natural team-number order.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import csv
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
import config
from errors import IngestionError
from estimator.model_core import DesignMatrix, MatchRecord, RobotRoster, build_design

_logger = logging.getLogger(__name__)

CSV_HEADER: Tuple[str, ...] = (
    "match_id", "red1", "red2", "red3", "blue1", "blue2", "blue3", "red_score", "blue_score",
)

# Column names used by published replication files, mapped onto the canonical ones
_ALIASES: Dict[str, str] = {
    "match": "match_id",
    "match_number": "match_id",
    "matchid": "match_id",
    "red1": "red1", "red2": "red2", "red3": "red3",
    "blue1": "blue1", "blue2": "blue2", "blue3": "blue3",
    "redscore": "red_score",
    "red_score": "red_score",
    "bluescore": "blue_score",
    "blue_score": "blue_score",
}

_DIGITS = re.compile(r"(\d+)")


# ---------------------------------------------------------------------- #
#  Ordering helpers
# ---------------------------------------------------------------------- #
def natural_key(identifier: str) -> Tuple:
    """Sort key comparing digit runs numerically ('frc254' < 'frc1114')."""
    return tuple(int(part) if part.isdigit() else part for part in _DIGITS.split(identifier))


def match_number(match_id: str) -> int:
    digits = _DIGITS.findall(match_id)
    if not digits:
        raise IngestionError(f"match id {match_id!r} has no numeric part")
    return int(digits[-1])


# ---------------------------------------------------------------------- #
#  Dataset
# ---------------------------------------------------------------------- #
class EventDataset(BaseModel):
    """Qualification matches of one event, ready for fitting."""

    event_key: str = Field(description="Event identifier, e.g. '2019carv'")
    matches: List[MatchRecord] = Field(description="Matches ordered by match number")
    roster: List[str] = Field(description="Robots in natural team-number order")
    exclusions: List[str] = Field(default_factory=list, description="Match ids removed before fitting")
    source: Literal["csv", "api", "cache"] = Field("csv", description="Where the matches came from")

    def robot_roster(self) -> RobotRoster:
        return RobotRoster(tuple(self.roster))

    def design(self) -> DesignMatrix:
        return build_design(self.matches, self.robot_roster())


def build_dataset(
    event_key: str,
    matches: Iterable[MatchRecord],
    exclusions: Sequence[str] = (),
    source: str = "csv",
) -> EventDataset:
    """
    Drop excluded matches, order the rest and derive the roster.

    Raises
    ------
    IngestionError
        Duplicate match ids, or no matches left after exclusions.
    """
    matches = list(matches)
    seen = set()
    for match in matches:
        if match.match_id in seen:
            raise IngestionError(f"match id {match.match_id!r} appears more than once")
        seen.add(match.match_id)

    unknown = [mid for mid in exclusions if mid not in seen]
    if unknown:
        _logger.warning(f"{event_key}: excluded match ids not present: {', '.join(unknown)}")

    kept = [match for match in matches if match.match_id not in set(exclusions)]
    if not kept:
        raise IngestionError(f"{event_key}: no matches left after exclusions")
    kept.sort(key=lambda match: (match_number(match.match_id), match.match_id))

    robots = {robot for match in kept for robot in (*match.red, *match.blue)}
    roster = sorted(robots, key=natural_key)
    _logger.info(f"{event_key}: {len(kept)} matches, {len(roster)} robots ({len(matches) - len(kept)} excluded)")
    return EventDataset(
        event_key=event_key,
        matches=kept,
        roster=roster,
        exclusions=list(exclusions),
        source=source,
    )


# ---------------------------------------------------------------------- #
#  CSV reading and writing
# ---------------------------------------------------------------------- #
def _record_from_row(row: Dict[str, str], line: int, path: Path) -> MatchRecord:
    try:
        return MatchRecord(
            match_id=row["match_id"].strip(),
            red=tuple(row[f"red{i}"].strip() for i in (1, 2, 3)),
            blue=tuple(row[f"blue{i}"].strip() for i in (1, 2, 3)),
            red_score=int(row["red_score"]),
            blue_score=int(row["blue_score"]),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise IngestionError(f"{path.name}:{line}: missing value for {exc}") from exc
    except ValueError as exc:
        # PydanticValidationError is a ValueError
        if isinstance(exc, PydanticValidationError):
            detail = "; ".join(err["msg"] for err in exc.errors())
        else:
            detail = str(exc)
        raise IngestionError(f"{path.name}:{line}: {detail}") from exc


def _read_rows(path: Path, aliases: Optional[Dict[str, str]] = None) -> List[Tuple[int, Dict[str, str]]]:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"match file not found: {path}")
    # physical[n - 1] is the file line number of the n-th line the reader sees
    physical: List[int] = []

    def content_lines(handle):
        for number, line in enumerate(handle, start=1):
            if not line.startswith("#"):
                physical.append(number)
                yield line

    with path.open("r", encoding="utf-8-sig", newline="") as handle:
        reader = csv.DictReader(content_lines(handle))
        if reader.fieldnames is None:
            raise IngestionError(f"{path.name}: empty file")
        if aliases is not None:
            reader.fieldnames = [aliases.get(_normalize(name), name) for name in reader.fieldnames]
        missing = [name for name in CSV_HEADER if name not in reader.fieldnames]
        if missing:
            raise IngestionError(f"{path.name}: missing columns {', '.join(missing)}")
        return [(physical[reader.line_num - 1], row) for row in reader]


def _normalize(name: str) -> str:
    return name.strip().lower().replace(" ", "_")


def read_matches_csv(path: Path, exclusions: Sequence[str] = (), event_key: Optional[str] = None) -> EventDataset:
    """
    Read a canonical match CSV.

    Parameters
    ----------
    path : Path
        CSV with the canonical header.
    exclusions : sequence of str
        Match ids to drop (e.g. replays documented for the event).
    event_key : str, optional
        Defaults to the file stem.
    """
    path = Path(path)
    records = [_record_from_row(row, line, path) for line, row in _read_rows(path)]
    return build_dataset(event_key or path.stem, records, exclusions, source="csv")


def write_matches_csv(dataset: EventDataset, path: Path) -> Path:
    """
    Write ``dataset`` in canonical layout; reading it back yields the same dataset.

    Unlike the other emitted files there is no provenance comment line: the
    file is an input format and round-trips byte for byte.
    """
    path = Path(path)
    config.ensure_dir(path.parent)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for match in dataset.matches:
            writer.writerow([match.match_id, *match.red, *match.blue, match.red_score, match.blue_score])
    _logger.info(f"Wrote {len(dataset.matches)} matches to {path}")
    return path


def _team_key(value: str) -> str:
    value = value.strip()
    return value if value.lower().startswith("frc") else f"frc{value}"


def import_replication_csv(path: Path, exclusions: Sequence[str] = (), event_key: Optional[str] = None) -> EventDataset:
    """
    Read a replication-file layout (``Match,Red1,...,RedScore,BlueScore``).

    Column names are matched case-insensitively, bare team numbers get the
    ``frc`` prefix, and bare match numbers become ``qm<n>``.
    """
    path = Path(path)
    records = []
    for line, row in _read_rows(path, aliases=_ALIASES):
        row = dict(row)
        match_id = (row.get("match_id") or "").strip()
        if match_id.isdigit():
            row["match_id"] = f"qm{match_id}"
        for slot in ("red1", "red2", "red3", "blue1", "blue2", "blue3"):
            if row.get(slot):
                row[slot] = _team_key(row[slot])
        records.append(_record_from_row(row, line, path))
    return build_dataset(event_key or path.stem, records, exclusions, source="csv")
