"""Python bindings for the tasklens model optimization workbench."""

import json
import os

from . import _core
from ._core import TasklensError, percent_delta, round_percent

__all__ = [
    "TasklensError",
    "default_profile",
    "diff",
    "graph",
    "graph_hash",
    "layout",
    "metrics",
    "options",
    "percent_delta",
    "plan_to_budget",
    "round_percent",
    "simulate",
    "write_fixture",
]


def _selection(selection):
    if selection is None:
        return ""
    if isinstance(selection, str):
        return selection
    return json.dumps(selection)


def graph(path):
    return json.loads(_core.graph(os.fspath(path)))


def graph_hash(path):
    return _core.graph_hash(os.fspath(path))


def simulate(path, selection=None, profile=""):
    return json.loads(_core.simulate(os.fspath(path), _selection(selection), os.fspath(profile)))


def metrics(path, selection=None, profile=""):
    return json.loads(_core.metrics(os.fspath(path), _selection(selection), os.fspath(profile)))


def options(path, task, selection=None, profile=""):
    return json.loads(_core.options(os.fspath(path), int(task), _selection(selection), os.fspath(profile)))


def plan_to_budget(path, budget_ms, profile=""):
    return json.loads(_core.plan_to_budget(os.fspath(path), float(budget_ms), os.fspath(profile)))


def diff(base, target, profile=""):
    return json.loads(_core.diff(os.fspath(base), os.fspath(target), os.fspath(profile)))


def layout(path):
    return json.loads(_core.layout(os.fspath(path)))


def write_fixture(kind, out, tasks=200, seed=1):
    _core.write_fixture(kind, os.fspath(out), int(tasks), int(seed))


def default_profile():
    return json.loads(_core.default_profile())
