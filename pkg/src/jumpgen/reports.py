"""Named pass/fail checks and the JSON report container."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _json_number(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _show(x) -> str:
    return "None" if x is None else f"{float(x):.6g}"


@dataclass
class Check:
    """A measured quantity compared against a bound.

    ``informational`` checks are reported but never decide the exit status.
    """

    name: str
    measured: float | None
    bound: float | None
    passed: bool
    informational: bool = False
    note: str | None = None

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "measured": _json_number(self.measured),
            "bound": _json_number(self.bound),
            "pass": bool(self.passed),
        }
        if self.informational:
            out["informational"] = True
        if self.note:
            out["note"] = self.note
        return out

    def line(self) -> str:
        status = "INFO" if self.informational else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.name}: measured={_show(self.measured)} bound={_show(self.bound)}"


def check_upper(name: str, measured: float, bound: float, **kw) -> Check:
    return Check(name, measured, bound, bool(measured <= bound), **kw)


def check_lower(name: str, measured: float, bound: float, **kw) -> Check:
    return Check(name, measured, bound, bool(measured >= bound), **kw)


@dataclass
class Report:
    """A bundle of checks with the context needed to interpret them."""

    title: str
    checks: list[Check] = field(default_factory=list)
    window: list | None = None
    lambda_grid: list[float] | None = None
    notices: list[str] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.informational and not c.passed]

    def extend(self, checks) -> None:
        self.checks.extend(checks)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "checks": [c.to_dict() for c in self.checks],
            "window": self.window,
            "lambda_grid": self.lambda_grid,
            "notices": list(self.notices),
            "passed": self.passed,
            "data": _clean(self.data),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    try:
        return _json_number(obj)
    except (TypeError, ValueError):
        return str(obj)
