"""Residual-based validation reports with a stable JSON rendering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__

REPORT_SCHEMA_VERSION = 1


def _clean(x):
    """Convert numpy scalars/arrays to plain JSON values."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class Check:
    """One validated law: worst residual over the samples against a tolerance."""

    name: str
    residual: float
    tolerance: float
    worst: dict | None = None
    detail: dict = field(default_factory=dict)
    status_override: bool | None = None

    @property
    def passed(self) -> bool:
        if self.status_override is not None:
            return self.status_override
        return bool(math.isfinite(self.residual) and self.residual <= self.tolerance)

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        out = {"name": self.name, "status": self.status,
               "residual": self.residual, "tolerance": self.tolerance}
        if self.worst is not None:
            out["worst"] = self.worst
        if self.detail:
            out["detail"] = self.detail
        return _clean(out)


@dataclass
class ValidationReport:
    subject: str
    checks: list[Check] = field(default_factory=list)
    samples: int | None = None
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        self.checks.extend(other.checks)
        return self

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def max_residual(self, prefix: str = "") -> float:
        vals = [c.residual for c in self.checks if c.name.startswith(prefix)]
        return max(vals, default=0.0)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return _clean({
            "subject": self.subject,
            "status": self.status,
            "samples": self.samples,
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
        })


def dumps(doc) -> str:
    """Canonical JSON: sorted keys, fixed separators, repr-exact floats."""
    return json.dumps(_clean(doc), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def tool_info() -> dict:
    return {"name": "bundlekit", "version": __version__,
            "reportSchemaVersion": REPORT_SCHEMA_VERSION}


def worst_point(chart: str, coordinates, point) -> dict:
    return {"chart": chart,
            "coordinates": {c: float(x) for c, x in zip(coordinates, np.ravel(point))}}
