"""Experiment reports: fixed-column tables with a full config echo.

Serialization is deliberately boring and deterministic: identical
(config, seed) inputs produce byte-identical CSV and JSON-lines files.
The CSV preamble and the first JSON-lines record both carry the resolved
configuration, so an output file is self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = ["ExperimentReport"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentReport:
    """An immutable table of rows plus the configuration that produced it."""

    config: Mapping
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    @staticmethod
    def build(config: Mapping, columns: Sequence[str], rows: Sequence[Sequence]) -> "ExperimentReport":
        return ExperimentReport(
            config=dict(config),
            columns=tuple(columns),
            rows=tuple(tuple(r) for r in rows),
        )

    def config_json(self) -> str:
        return json.dumps(self.config, sort_keys=True, separators=(",", ":"))

    def to_csv_text(self) -> str:
        lines = [f"# config = {self.config_json()}"]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def to_jsonl_text(self) -> str:
        lines = [json.dumps({"config": self.config}, sort_keys=True, separators=(",", ":"))]
        for row in self.rows:
            record = dict(zip(self.columns, row))
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl_text())

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def filtered(self, **equals) -> list[tuple]:
        idx = {name: self.columns.index(name) for name in equals}
        return [
            row
            for row in self.rows
            if all(row[idx[name]] == val for name, val in equals.items())
        ]
