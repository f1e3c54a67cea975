"""
Solve reports and stored-value instrumentation.

Memory is measured as live stored integers, not process RSS: every solver
declares what it holds persistently and what it allocates per step, and
StorageMeter keeps the peaks.
"""
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

REPORT_KEYS = (
    "solver",
    "energy",
    "flow_total",
    "constant",
    "augmentations",
    "reconstructions",
    "reconstruction_fallbacks",
    "stored_values_peak",
    "transient_values_peak",
)


class StorageMeter:
    """Tracks persistent and transient stored-value counts and their peaks"""

    def __init__(self):
        self._persistent: Dict[str, int] = {}
        self._persistent_total = 0
        self._transient = 0
        self.persistent_peak = 0
        self.transient_peak = 0

    @property
    def persistent(self) -> int:
        return self._persistent_total

    def set_persistent(self, name: str, count: int):
        self._persistent_total += count - self._persistent.get(name, 0)
        self._persistent[name] = count
        if self._persistent_total > self.persistent_peak:
            self.persistent_peak = self._persistent_total

    def note_transient(self, count: int):
        if self._transient + count > self.transient_peak:
            self.transient_peak = self._transient + count

    @contextmanager
    def transient(self, count: int) -> Iterator[None]:
        self._transient += count
        if self._transient > self.transient_peak:
            self.transient_peak = self._transient
        try:
            yield
        finally:
            self._transient -= count


@dataclass
class SolverDiagnostics:
    """Opt-in runtime checks collected during a solve"""
    distance_trace: List[List[int]] = field(default_factory=list)
    distance_checks: int = 0
    distance_violations: int = 0
    existence_checks: int = 0
    existence_mismatches: int = 0
    path_lengths: List[int] = field(default_factory=list)
    column_mismatches: int = 0

    def path_length_stats(self) -> Optional[Dict]:
        return summarize_path_lengths(self.path_lengths)


def summarize_path_lengths(lengths: Sequence[int]) -> Optional[Dict]:
    """Median and ascending histogram of augmenting path lengths, None when empty"""
    if not lengths:
        return None
    series = pd.Series(lengths)
    return {
        "median": float(series.median()),
        "histogram": {int(k): int(v) for k, v in series.value_counts().sort_index().items()},
    }


class SolveReport(BaseModel):
    """Outcome of one solver run"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    solver: str
    energy: int
    flow_total: int
    constant: int
    labeling: Optional[List[int]] = None
    augmentations: int = 0
    reconstructions: int = 0
    reconstruction_fallbacks: int = 0
    stored_values_peak: int = 0
    transient_values_peak: int = 0
    wall_time_ms: float = 0.0
    counters: Dict[str, int] = {}
    diagnostics: Optional[SolverDiagnostics] = None

    @model_validator(mode="after")
    def _energy_is_flow_plus_constant(self) -> "SolveReport":
        if self.energy != self.flow_total + self.constant:
            raise ValueError(
                f"energy {self.energy} != flow_total {self.flow_total} + constant {self.constant}")
        return self

    def to_key_value(self, include_time: bool = True) -> str:
        """
        Render as key=value lines.

        Fixed keys first, then solver-specific counters sorted by name, then
        wall_time_ms last so reports can be compared with it stripped.
        """
        lines = [f"{key}={getattr(self, key)}" for key in REPORT_KEYS]
        lines.extend(f"{key}={value}" for key, value in sorted(self.counters.items()))
        if include_time:
            lines.append(f"wall_time_ms={self.wall_time_ms:.3f}")
        return "\n".join(lines) + "\n"


def parse_key_value(text: str) -> Dict[str, str]:
    """Inverse of SolveReport.to_key_value, values left as strings"""
    result = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, value = line.split("=", 1)
        result[key] = value
    return result
