"""Run reports: one set of records rendered as text (``report.txt``) and TSV (``report.tsv``).

Every numeric field is formatted once, by ``fmt``, so the two renderings agree
character for character on every value.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in np.asarray(value).ravel().tolist())
    return str(value)


@dataclass
class Section:
    title: str
    entries: list = field(default_factory=list)   # (key, value)
    blocks: list = field(default_factory=list)    # preformatted text

    def add(self, key: str, value):
        self.entries.append((key, value))
        return self

    def block(self, text: str):
        self.blocks.append(text.rstrip("\n"))
        return self


@dataclass
class Report:
    command: str
    metadata: list = field(default_factory=list)
    sections: list = field(default_factory=list)
    passed: bool = True

    def section(self, title: str) -> Section:
        sec = Section(title)
        self.sections.append(sec)
        return sec

    def fail(self, title: str, message: str):
        self.passed = False
        self.section(title).add("diagnostic", message)

    def records(self):
        yield ("meta", "command", self.command)
        for key, value in self.metadata:
            yield ("meta", key, fmt(value))
        for sec in self.sections:
            for key, value in sec.entries:
                yield (sec.title, key, fmt(value))
        yield ("meta", "passed", fmt(self.passed))

    def text(self) -> str:
        out = [f"degkam report: {self.command}"]
        out += [f"{key} = {fmt(value)}" for key, value in self.metadata]
        for sec in self.sections:
            out.append("")
            out.append(f"[{sec.title}]")
            out += [f"{key} = {fmt(value)}" for key, value in sec.entries]
            for block in sec.blocks:
                out.append(block)
        out.append("")
        out.append(f"passed = {fmt(self.passed)}")
        return "\n".join(out) + "\n"

    def tsv(self) -> str:
        lines = ["section\tkey\tvalue"]
        lines += ["\t".join(rec) for rec in self.records()]
        return "\n".join(lines) + "\n"

    def write(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(self.text())
        with open(os.path.join(directory, "report.tsv"), "w", encoding="utf-8") as fh:
            fh.write(self.tsv())
