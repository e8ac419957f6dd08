#!/usr/bin/env python3
"""
The Blue Alliance (v3) client for qualification match results, with an
on-disk JSON cache.

Responses are cached under ``CACHE_DIR/<event_key>/matches.json``; a warm
cache is served without touching the network.  Transport failures and 5xx
responses are retried with exponential backoff, authentication failures are not.
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import requests
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

import config
from errors import CredentialError, SchemaError, TransportError
from estimator.model_core import MatchRecord
from ingestor.ingest import EventDataset, build_dataset

_logger = logging.getLogger(__name__)

# ============================================================================
# CONFIGURATION
# ============================================================================
BASE_URL = config.TBA_BASE_URL
AUTH_KEY = config.TBA_AUTH_KEY
CACHE_DIR = config.CACHE_DIR
TIMEOUT = config.TBA_TIMEOUT_SECONDS
MAX_RETRIES = config.TBA_MAX_RETRIES

QUALIFICATION_LEVEL = "qm"
UNPLAYED_SCORE = -1


class _RetryableError(Exception):
    """Connection problem, rate limit (429) or 5xx status; worth another attempt."""


# ============================================================================
# CLIENT
# ============================================================================
class TbaClient:
    """Minimal read-only client for the match endpoints."""

    def __init__(
        self,
        api_key: Optional[str] = None,
        base_url: str = BASE_URL,
        cache_dir: Path = CACHE_DIR,
        timeout: int = TIMEOUT,
        max_retries: int = MAX_RETRIES,
        session: Optional[requests.Session] = None,
    ):
        self.api_key = api_key if api_key is not None else AUTH_KEY
        self.base_url = base_url.rstrip("/")
        self.cache_dir = Path(cache_dir)
        self.timeout = timeout
        self.max_retries = max(1, max_retries)
        self.session = session or requests.Session()

    # ------------------------------------------------------------------ #
    #  Cache
    # ------------------------------------------------------------------ #
    def cache_path(self, event_key: str) -> Path:
        safe_key = event_key.translate(str.maketrans('<>:"/\\|?*', "_________"))
        return self.cache_dir / safe_key / "matches.json"

    def _read_cache(self, event_key: str) -> Optional[Any]:
        path = self.cache_path(event_key)
        if not path.is_file():
            return None
        try:
            with path.open("r", encoding="utf-8") as handle:
                return json.load(handle)
        except json.JSONDecodeError:
            _logger.warning(f"Ignoring unreadable cache file {path}")
            return None

    def _write_cache(self, event_key: str, payload: Any) -> None:
        path = self.cache_path(event_key)
        config.ensure_dir(path.parent)
        # write-then-rename so readers never see a partial file
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".matches-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(payload, handle)
            os.replace(tmp_name, path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise

    # ------------------------------------------------------------------ #
    #  HTTP
    # ------------------------------------------------------------------ #
    def _get_once(self, url: str) -> Any:
        try:
            response = self.session.get(
                url,
                headers={"X-TBA-Auth-Key": self.api_key, "Accept": "application/json"},
                timeout=self.timeout,
            )
        except requests.exceptions.RequestException as exc:
            raise _RetryableError(str(exc)) from exc

        if response.status_code in (401, 403):
            raise CredentialError(f"API rejected the auth key (HTTP {response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise _RetryableError(f"HTTP {response.status_code} from {url}")
        try:
            response.raise_for_status()
        except requests.exceptions.HTTPError as exc:
            raise TransportError(f"HTTP {response.status_code} from {url}") from exc
        try:
            return response.json()
        except ValueError as exc:
            raise SchemaError(f"response from {url} is not JSON") from exc

    def get_json(self, endpoint: str) -> Any:
        url = f"{self.base_url}/{endpoint.lstrip('/')}"
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries),
            wait=wait_exponential(multiplier=1, min=1, max=10),
            retry=retry_if_exception_type(_RetryableError),
            reraise=True,
        )
        try:
            for attempt in retrying:
                with attempt:
                    if attempt.retry_state.attempt_number > 1:
                        _logger.info(f"Retrying {url} (attempt {attempt.retry_state.attempt_number})")
                    return self._get_once(url)
        except _RetryableError as exc:
            raise TransportError(f"{url}: {exc} (after {self.max_retries} attempts)") from exc

    def event_matches(self, event_key: str) -> Tuple[Any, str]:
        """Raw match payload of ``event_key`` and where it came from ('cache' or 'api')."""
        cached = self._read_cache(event_key)
        if cached is not None:
            _logger.info(f"{event_key}: using cached matches from {self.cache_path(event_key)}")
            return cached, "cache"
        if not self.api_key:
            raise CredentialError("no API key configured (set TBA_AUTH_KEY)")
        payload = self.get_json(f"event/{event_key}/matches")
        self._write_cache(event_key, payload)
        return payload, "api"


# ============================================================================
# PARSING
# ============================================================================
def _field(obj: Any, path: str) -> Any:
    value = obj
    for part in path.split("."):
        if not isinstance(value, dict) or part not in value:
            raise SchemaError(f"match payload is missing field '{path}'")
        value = value[part]
    return value


def parse_matches(payload: Any) -> List[MatchRecord]:
    """
    Qualification matches of a ``/event/{key}/matches`` payload.

    Playoff matches are ignored; matches without a final score (-1) are
    skipped with a warning.
    """
    if not isinstance(payload, list):
        raise SchemaError("match payload must be a JSON list")

    records = []
    for item in payload:
        if _field(item, "comp_level") != QUALIFICATION_LEVEL:
            continue
        number = _field(item, "match_number")
        red_teams = _field(item, "alliances.red.team_keys")
        blue_teams = _field(item, "alliances.blue.team_keys")
        red_score = _field(item, "alliances.red.score")
        blue_score = _field(item, "alliances.blue.score")
        match_id = f"{QUALIFICATION_LEVEL}{number}"
        if red_score is None or blue_score is None or UNPLAYED_SCORE in (red_score, blue_score):
            _logger.warning(f"Skipping unplayed match {match_id}")
            continue
        if len(red_teams) != 3 or len(blue_teams) != 3:
            raise SchemaError(f"match {match_id} does not have three robots per alliance")
        records.append(
            MatchRecord(
                match_id=match_id,
                red=tuple(red_teams),
                blue=tuple(blue_teams),
                red_score=int(red_score),
                blue_score=int(blue_score),
            )
        )
    return records


# ============================================================================
# MAIN FUNCTION
# ============================================================================
def fetch_event_matches(
    event_key: str,
    exclusions: Sequence[str] = (),
    client: Optional[TbaClient] = None,
) -> EventDataset:
    """
    Fetch (or read from cache) the qualification matches of ``event_key``.

    Raises
    ------
    CredentialError
        No key configured or the key was rejected.
    TransportError
        The API stayed unreachable and nothing was cached.
    SchemaError
        The payload lacks a required field.
    """
    client = client or TbaClient()
    payload, source = client.event_matches(event_key)
    records = parse_matches(payload)
    return build_dataset(event_key, records, exclusions, source=source)


def describe(dataset: EventDataset) -> Dict[str, Any]:
    return {
        "event_key": dataset.event_key,
        "matches": len(dataset.matches),
        "robots": len(dataset.roster),
        "source": dataset.source,
    }
