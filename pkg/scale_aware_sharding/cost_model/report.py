"""
Named results of cost model evaluations.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional


@dataclass(frozen=True)
class CostEntry:
    "One named scalar result."
    name: str
    value: float
    unit: str
    "seconds, bytes, ratio, FLOP/s, bytes/s or fraction."

    formula: str
    "Identifier of the formula that produced the value."

    def as_record(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "unit": self.unit,
            "formula": self.formula,
        }


@dataclass
class CostReport:
    "An ordered collection of cost entries."
    title: str = ""
    entries: List[CostEntry] = field(default_factory=list)

    def add(self, name: str, value: float, unit: str, formula: str) -> "CostReport":
        self.entries.append(CostEntry(name, value, unit, formula))
        return self

    def extend(self, other: "CostReport", prefix: Optional[str] = None):
        for entry in other.entries:
            name = f"{prefix}.{entry.name}" if prefix else entry.name
            self.entries.append(CostEntry(name, entry.value, entry.unit, entry.formula))

    def __getitem__(self, name: str) -> float:
        for entry in self.entries:
            if entry.name == name:
                return entry.value

        raise KeyError(name)

    def as_dict(self) -> Dict[str, float]:
        return {e.name: e.value for e in self.entries}

    def to_text(self) -> str:
        "Flat key=value lines: name=value unit [formula]."
        return "".join(
            f"{e.name}={e.value!r} {e.unit} [{e.formula}]\n" for e in self.entries
        )
