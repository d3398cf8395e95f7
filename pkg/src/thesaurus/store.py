"""Thesaurus file: canonical JSON, sorted keys, sha256 footer.

Layout:
    {
      "version": "1",
      "thesaurus": {...},
      "sha256": "<hex of the compact sorted dump of {thesaurus, version}>"
    }
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from loguru import logger

from src.errors import CorruptFile, MissingFile, VersionMismatch
from src.thesaurus.builder import THESAURUS_VERSION, Thesaurus


def _compact(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def checksum(payload: dict, version: str) -> str:
    return hashlib.sha256(_compact({"thesaurus": payload, "version": version}).encode("utf-8")).hexdigest()


def render_document(payload: dict, version: str) -> str:
    ordered = json.loads(_compact(payload))
    doc = {"version": version, "thesaurus": ordered, "sha256": checksum(ordered, version)}
    return json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def save_thesaurus(t: Thesaurus, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    try:
        text = render_document(t.to_dict(), t.version)
    except ValueError as e:
        raise CorruptFile(f"Thesaurus holds values JSON cannot carry: {e}") from e
    p.write_text(text, encoding="utf-8")
    logger.info(f"Thesaurus saved: path={p} exemplars={len(t.exemplars)}")
    return p


def load_thesaurus(path: str | Path) -> Thesaurus:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"Thesaurus file not found: {p}")
    try:
        text = p.read_text(encoding="utf-8")
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptFile(f"Thesaurus is not valid JSON: {p} ({e})") from e
    if not isinstance(doc, dict) or set(doc) != {"version", "thesaurus", "sha256"}:
        raise CorruptFile(f"Thesaurus document has an unexpected layout: {p}")

    version, payload = str(doc["version"]), doc["thesaurus"]
    if checksum(payload, version) != doc["sha256"]:
        raise CorruptFile(f"Thesaurus checksum mismatch: {p}")
    if render_document(payload, version) != text:
        raise CorruptFile(f"Thesaurus is not in canonical form: {p}")
    if version != THESAURUS_VERSION:
        raise VersionMismatch(f"Thesaurus version {version!r} is not supported (expected {THESAURUS_VERSION!r})")
    try:
        t = Thesaurus.from_dict(payload)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"Thesaurus payload is incomplete: {p} ({type(e).__name__}: {e})") from e
    logger.debug(f"Thesaurus loaded: path={p} variant={t.variant} exemplars={len(t.exemplars)}")
    return t
