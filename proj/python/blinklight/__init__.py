"""Blink-suppression highlight detection from skater pose.

Thin layer over the compiled ``_core`` module. Configurations are plain
dicts with the same keys as the command-line tool's JSON config files.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from . import _core
from ._core import (  # noqa: F401
    ConfigError,
    Error,
    MissingStageError,
    ProvenanceError,
    __version__,
    detect_blinks,
    detect_highlights,
    ingest_clip,
    pearson,
    predict,
    surrogate_test,
)

STAGES = ("synth", "ingest", "blinks", "dataset", "train", "predict", "stats", "highlights")


def _dump(config: Mapping[str, Any] | None) -> str:
    return json.dumps(dict(config or {}))


def default_config() -> dict:
    return json.loads(_core.default_config())


def resolve_config(config: Mapping[str, Any] | None = None) -> dict:
    """Defaults filled in and validated; raises ConfigError on unknown keys."""
    return json.loads(_core.normalize_config(_dump(config)))


def run_stage(stage: str, config: Mapping[str, Any] | None = None) -> dict:
    result = _core.run_stage(stage, _dump(config))
    result["manifest"] = json.loads(result["manifest"])
    return result


def run_all(config: Mapping[str, Any] | None = None) -> list[dict]:
    return [run_stage(s, config) for s in STAGES]


def stage_plan(command: str, config: Mapping[str, Any] | None = None) -> list[str]:
    return _core.stage_plan(command, _dump(config))


def clip_ids(config: Mapping[str, Any] | None = None) -> list[str]:
    return _core.clip_ids(_dump(config))


def read_prediction(config: Mapping[str, Any] | None, clip_id: str):
    return _core.read_prediction(_dump(config), clip_id)


def reproduce(config: Mapping[str, Any] | None = None, verify_threads: int = 0) -> list[dict]:
    return _core.reproduce(_dump(config), verify_threads)
