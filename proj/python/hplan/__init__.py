# SPDX-License-Identifier: Apache-2.0
"""Python access to the hplan core: plans, selection, losses and pipeline stages."""

from __future__ import annotations

import json
from os import PathLike
from typing import Any, Iterable, Mapping, Optional, Sequence, Tuple, Union

from . import _core
from ._core import BadConfig, Error, OutOfRange, ParseError, StageFailed, TabularPolicy, log_sigmoid

__all__ = [
    "BadConfig",
    "Error",
    "OutOfRange",
    "ParseError",
    "StageFailed",
    "TabularPolicy",
    "audit_pairs",
    "audit_report",
    "dpo_sft_loss",
    "dpo_sft_loss_with_gradient",
    "dump_config",
    "log_sigmoid",
    "make_synthetic_suite",
    "parse_plan",
    "prefix",
    "render",
    "run_eval",
    "run_stage1",
    "run_stage2",
    "select_best",
    "sft_loss",
    "sft_loss_with_gradient",
    "validate",
]

Plan = Mapping[str, Any]
Path = Union[str, PathLike]


def _settings(overrides: Optional[Mapping[str, Any]]) -> dict:
    out = {}
    for key, value in (overrides or {}).items():
        out[key] = ("true" if value else "false") if isinstance(value, bool) else str(value)
    return out


def parse_plan(text: str, task_id: str = "", source_index: int = 1) -> dict:
    """Parses tagged plan text into {task_id, source_index, levels, written_levels, warnings}."""
    return json.loads(_core.parse_plan(text, task_id, source_index))


def _plan_json(plan: Plan) -> str:
    return json.dumps({k: plan[k] for k in ("task_id", "source_index", "levels") if k in plan})


def render(plan: Plan, mode: str = "hierarchical", m: Optional[int] = None) -> str:
    return _core.render(_plan_json(plan), mode, m)


def prefix(plan: Plan, m: int) -> dict:
    return json.loads(_core.prefix(_plan_json(plan), m))


def validate(plan: Plan, strict_monotone: bool = False, max_levels: Optional[int] = None) -> list:
    """Returns the list of violations; empty when the plan is well formed."""
    return _core.validate(_plan_json(plan), strict_monotone, max_levels)


def select_best(q: Mapping[Tuple[int, int], float], plans: Sequence[Plan], k: int = 1, task_id: str = "", literal_formula: bool = False) -> dict:
    """Picks the best (n, m) cell from a {(n, m): Q} mapping over the given plans."""
    table = {
        "task_id": task_id,
        "K": k,
        "cells": [{"n": n, "m": m, "q": value, "count": k} for (n, m), value in sorted(q.items())],
    }
    return json.loads(_core.select_best(json.dumps(table), [_plan_json(p) for p in plans], literal_formula))


def sft_loss(policy: TabularPolicy, batch: Iterable[Tuple[str, str]], reduction: str = "mean") -> float:
    return _core.sft_loss(policy, list(batch), reduction)


def sft_loss_with_gradient(policy: TabularPolicy, batch: Iterable[Tuple[str, str]], reduction: str = "mean") -> Tuple[float, list]:
    return _core.sft_loss_with_gradient(policy, list(batch), reduction)


def dpo_sft_loss(policy: TabularPolicy, reference: TabularPolicy, batch: Iterable[Tuple[str, str, str]], beta: float = 0.1, gamma: float = 1.0,
                 reduction: str = "mean", per_token_average: bool = False) -> float:
    """Batch entries are (context, chosen, rejected)."""
    return _core.dpo_sft_loss(policy, reference, list(batch), beta, gamma, reduction, per_token_average)


def dpo_sft_loss_with_gradient(policy: TabularPolicy, reference: TabularPolicy, batch: Iterable[Tuple[str, str, str]], beta: float = 0.1,
                               gamma: float = 1.0, reduction: str = "mean", per_token_average: bool = False) -> Tuple[float, list]:
    return _core.dpo_sft_loss_with_gradient(policy, reference, list(batch), beta, gamma, reduction, per_token_average)


def make_synthetic_suite(directory: Path, tasks: int = 30, levels: int = 3, plans: int = 5, seed: int = 0) -> str:
    """Writes tasks.jsonl, plans.jsonl and pipeline.conf; returns the config path."""
    return str(_core.make_synthetic_suite(directory, tasks, levels, plans, seed))


def dump_config(config: Path, overrides: Optional[Mapping[str, Any]] = None) -> str:
    return _core.dump_config(config, _settings(overrides))


def run_stage1(config: Path, overrides: Optional[Mapping[str, Any]] = None, max_new_tasks: Optional[int] = None) -> dict:
    return json.loads(_core.run_stage1(config, _settings(overrides), max_new_tasks))


def run_stage2(config: Path, overrides: Optional[Mapping[str, Any]] = None, max_new_tasks: Optional[int] = None) -> dict:
    return json.loads(_core.run_stage2(config, _settings(overrides), max_new_tasks))


def run_eval(config: Path, overrides: Optional[Mapping[str, Any]] = None, max_new_tasks: Optional[int] = None) -> dict:
    return json.loads(_core.run_eval(config, _settings(overrides), max_new_tasks))


def audit_report(directory: Path) -> dict:
    return json.loads(_core.audit_report(directory))


def audit_pairs(path: Path, margin: float = 0.0) -> dict:
    return json.loads(_core.audit_pairs(path, margin))
