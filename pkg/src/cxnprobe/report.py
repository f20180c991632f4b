"""Score-grid assembly and rendering (TSV / JSON / Markdown).

Tables render values to one decimal place; the JSONL rows that feed them
keep full precision, so a rendered table is presentation only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .evals import EvalScore

# canonical column order for assembled tables
COLUMN_ORDER = (
    "cec_auc", "so_that", "idioms_auc",
    "fixed_much", "fixed_less", "fixed_let", "fixed_alone",
    "fixed_at", "fixed_way", "fixed_with", "fixed_the",
    "cc_adjadv",
    "npn_upon", "npn_after", "npn_by", "npn_to",
)


@dataclass
class ReportTable:
    models: list[str]
    columns: list[str]
    cells: dict[tuple[str, str], dict] = field(default_factory=dict)

    @classmethod
    def from_scores(cls, scores: Iterable[EvalScore]) -> "ReportTable":
        models: list[str] = []
        columns: list[str] = []
        cells: dict[tuple[str, str], dict] = {}
        for score in scores:
            if score.model not in models:
                models.append(score.model)
            if score.eval_name not in columns:
                columns.append(score.eval_name)
            cells[(score.model, score.eval_name)] = {
                "value": score.value,
                "n_used": score.n_used,
                "n_skipped": score.n_skipped,
            }
        columns.sort(key=lambda c: (COLUMN_ORDER.index(c)
                                    if c in COLUMN_ORDER else len(COLUMN_ORDER), c))
        return cls(models=models, columns=columns, cells=cells)

    def values(self) -> dict[str, dict[str, float]]:
        """model -> column -> value, the shape correlation wants."""
        out: dict[str, dict[str, float]] = {}
        for (model, column), cell in self.cells.items():
            out.setdefault(model, {})[column] = cell["value"]
        return out

    def _cell_text(self, model: str, column: str) -> str:
        cell = self.cells.get((model, column))
        if cell is None:
            return ""
        return f"{cell['value']:.1f}"

    def _skip_text(self, model: str, column: str) -> str:
        cell = self.cells.get((model, column))
        if cell is None:
            return ""
        return f"{cell['n_used']}/{cell['n_used'] + cell['n_skipped']}"

    def to_tsv(self) -> str:
        lines = ["\t".join(["model"] + self.columns
                           + [f"{c}:used" for c in self.columns])]
        for model in self.models:
            row = [model]
            row += [self._cell_text(model, c) for c in self.columns]
            row += [self._skip_text(model, c) for c in self.columns]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        header = "| model | " + " | ".join(self.columns) + " |"
        rule = "|" + "---|" * (len(self.columns) + 1)
        lines = [header, rule]
        for model in self.models:
            cells = []
            for column in self.columns:
                text = self._cell_text(model, column)
                skip = self.cells.get((model, column), {}).get("n_skipped", 0)
                cells.append(f"{text} ({skip} skipped)" if skip else text)
            lines.append("| " + " | ".join([model] + cells) + " |")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "models": self.models,
            "columns": self.columns,
            "cells": {f"{m}\t{c}": cell for (m, c), cell in sorted(self.cells.items())},
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportTable":
        payload = json.loads(text)
        cells = {}
        for key, cell in payload["cells"].items():
            model, column = key.split("\t", 1)
            cells[(model, column)] = cell
        return cls(models=list(payload["models"]),
                   columns=list(payload["columns"]), cells=cells)

    def render(self, fmt: str) -> str:
        if fmt == "tsv":
            return self.to_tsv()
        if fmt == "markdown":
            return self.to_markdown()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown table format {fmt!r}")


def load_scores_jsonl(path: str | Path) -> list[EvalScore]:
    scores = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            scores.append(EvalScore(model=row["model"], eval_name=row["eval"],
                                    value=row["value"], n_used=row["n_used"],
                                    n_skipped=row["n_skipped"],
                                    breakdown=row.get("breakdown", {})))
    return scores


def reference_scores() -> dict[str, dict[str, float]]:
    """The published per-model score grid bundled with the package."""
    text = resources.files("cxnprobe.data").joinpath("reference_scores.json").read_text("utf-8")
    return json.loads(text)


def reference_benchmark() -> dict[str, dict[str, float]]:
    """Published benchmark results (per-suite and macro average)."""
    text = resources.files("cxnprobe.data").joinpath("reference_benchmark.json").read_text("utf-8")
    return json.loads(text)


def benchmark_macro_averages(benchmark: Mapping[str, Mapping[str, float]] | None = None,
                             ) -> dict[str, float]:
    if benchmark is None:
        benchmark = reference_benchmark()
    return {model: row["macro_avg"] for model, row in benchmark.items()}
