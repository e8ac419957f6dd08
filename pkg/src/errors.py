#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Exception hierarchy shared by the estimator, simulator, ingestor and CLI.

Every exception carries a short machine-readable ``code`` so the command-line
front end can emit an error JSON object without inspecting messages.
"""

from typing import Any, Dict


class WmprcError(Exception):
    """Base class for all errors raised by this project."""

    code = "wmprc_error"

    def to_dict(self) -> Dict[str, Any]:
        """Return the machine-readable error payload used by the CLI."""
        return {
            "error": {
                "code": self.code,
                "type": type(self).__name__,
                "message": str(self),
            }
        }


class ValidationError(WmprcError):
    """Malformed design rows, assignments, targets or roster mismatches."""

    code = "validation_error"


class IngestionError(WmprcError):
    """Match data could not be read or refers to unknown robots."""

    code = "ingestion_error"


class TransportError(WmprcError):
    """HTTP failure with no cached response to fall back on."""

    code = "transport_error"


class CredentialError(WmprcError):
    """The REST API rejected the configured auth key."""

    code = "credential_error"


class SchemaError(WmprcError):
    """A REST API payload is missing a field or has the wrong shape."""

    code = "schema_error"


class SelectionError(WmprcError):
    """No feasible candidate is available for the requested criterion."""

    code = "selection_error"


class ConfigError(WmprcError):
    """An experiment configuration file is missing or invalid."""

    code = "config_error"
