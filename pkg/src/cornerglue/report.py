"""Machine-readable verdict lists shared by the verification operations."""

from dataclasses import dataclass, field
import math

import numpy as np


def plain(v):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, np.ndarray):
        return [plain(x) for x in v.tolist()]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {str(k): plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [plain(x) for x in v]
    return v


@dataclass
class Verdict:
    id: str
    value: float
    threshold: float
    passed: bool
    note: str = ""

    def to_dict(self):
        return {
            "id": self.id,
            "value": plain(self.value),
            "threshold": plain(self.threshold),
            "passed": bool(self.passed),
            "note": self.note,
        }


@dataclass
class Report:
    name: str
    verdicts: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def at_most(self, vid, value, bound, note=""):
        value = float(value)
        self.verdicts.append(Verdict(vid, value, bound, bool(value <= bound), note))
        return self

    def at_least(self, vid, value, bound, note=""):
        value = float(value)
        self.verdicts.append(Verdict(vid, value, bound, bool(value >= bound), note))
        return self

    def flag(self, vid, ok, value=None, note=""):
        self.verdicts.append(Verdict(vid, value, None, bool(ok), note))
        return self

    def extend(self, other, prefix=""):
        for v in other.verdicts:
            self.verdicts.append(Verdict(prefix + v.id, v.value, v.threshold, v.passed, v.note))
        return self

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def get(self, vid):
        for v in self.verdicts:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def failures(self):
        return [v for v in self.verdicts if not v.passed]

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "data": plain(self.data),
        }
