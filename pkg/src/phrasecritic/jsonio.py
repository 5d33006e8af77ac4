"""Canonical JSON helpers.

All files the pipeline writes go through dump_canonical so that reruns with
the same seed produce byte-identical output (sorted keys, fixed separators,
trailing newline, floats via repr round-trip).
"""

from __future__ import annotations

import json
from pathlib import Path


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
