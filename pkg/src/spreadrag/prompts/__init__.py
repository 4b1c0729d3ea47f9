"""Prompt assets shipped with the package.

The .txt files are treated as frozen artifacts: they are loaded byte-for-byte
(including any idiosyncratic spacing) and pinned by sha256 in checksums.json.
Edit them only together with the checksum manifest.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources

PROMPT_NAMES = (
    "answer_baseline",
    "reason_iterative",
    "decompose",
    "extract_entities",
    "extract_relations",
    "answer_graph",
    "reason_graph",
)

_cache: dict[str, str] = {}


def load_prompt(name: str) -> str:
    """Return the raw text of a named prompt asset."""
    if name not in PROMPT_NAMES:
        raise KeyError(f"unknown prompt {name!r}; expected one of {PROMPT_NAMES}")
    if name not in _cache:
        _cache[name] = (
            resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
        )
    return _cache[name]


def compose(name: str, payload: str) -> str:
    """Join a prompt asset with its input, exactly one blank line between."""
    return load_prompt(name).rstrip("\n") + "\n\n" + payload


def checksum_mismatches() -> list[str]:
    """Names of assets whose bytes do not match the pinned manifest."""
    manifest = json.loads(
        resources.files(__package__).joinpath("checksums.json").read_text(encoding="utf-8")
    )
    bad = []
    for name in PROMPT_NAMES:
        raw = resources.files(__package__).joinpath(f"{name}.txt").read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        if manifest.get(f"{name}.txt") != digest:
            bad.append(name)
    return bad
