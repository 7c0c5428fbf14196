"""Stable short digests of configuration dictionaries."""

from __future__ import annotations

import hashlib
import json


def config_digest(payload: dict) -> str:
    """First 12 hex chars of the sha256 of the canonical JSON encoding.

    Covers every field of the payload, so the digest changes iff the
    configuration changes.
    """
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
