"""Run specification files.

A spec is line-oriented text::

    # comment
    [hamiltonian]
    omega = 1.0 1.618033988749895
    g =
        0 0 | 0 0 | 4 0 | 0.25
        0 0 | 0 0 | 0 4 | 0.25
    P =
        cos 1 0 | 0 0 | 0 0 | 1e-6

    [schedule]
    epsilon = 1e-6
    m = 3

Sections are headed by ``[name]``; entries are ``key = value``.  A key with an
empty value starts a table whose rows are the following indented lines; a
table row is ``[kind] k.. | iota.. | j.. | re [im]`` with ``kind`` one of
``exp`` (default, a single exponential ``c e^{i<k,x>}``), ``cos`` or ``sin``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .normal_form import NormalForm
from .series import Caps, TFSeries, linear_combination

SECTIONS = {
    "hamiltonian": {"omega", "g", "h_tilde", "g_bar", "e", "P"},
    "schedule": {"epsilon", "m", "L", "tau", "s", "r", "mode", "K_base", "max_steps", "stop_norm"},
    "region": {"bounds", "omega_map", "samples", "seed", "epsilons", "steps", "center", "radius",
               "A1_order", "A1_grid", "kinds"},
    "torus": {"T", "h", "angles"},
    "counterexample": {"epsilon", "omega", "T", "h"},
}
TABLE_KEYS = {"g", "h_tilde", "g_bar", "P"}
DEFAULTS = {
    "schedule": {"tau": "2", "s": "0.5", "r": "0.5", "mode": "practical", "K_base": "8",
                 "max_steps": "4", "stop_norm": "0"},
    "region": {"samples": "10000", "seed": "0", "steps": "3", "A1_order": "1", "A1_grid": "11",
               "omega_map": "identity", "kinds": "scalar matrix"},
    "torus": {"T": "100", "h": "1e-3", "angles": "16"},
    "counterexample": {"omega": "1", "T": "100", "h": "1e-3"},
}


class SpecError(ValueError):
    """Parse or validation error with a position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"line {line}" + (f", column {column}" if column is not None else "") if line else ""
        super().__init__(f"{where}: {message}" if where else message)
        self.line, self.column = line, column


@dataclass(frozen=True)
class Row:
    kind: str
    k: tuple
    iota: tuple
    j: tuple
    coeff: complex
    line: int = 0

    def text(self) -> str:
        c = self.coeff
        coef = f"{c.real!r}" if c.imag == 0 else f"{c.real!r} {c.imag!r}"
        parts = [" ".join(map(str, self.k)), " ".join(map(str, self.iota)),
                 " ".join(map(str, self.j)), coef]
        return f"{self.kind} " + " | ".join(parts)


@dataclass
class RunSpec:
    sections: dict = field(default_factory=dict)   # name -> {key: str or list[Row]}
    lines: dict = field(default_factory=dict)      # (section, key) -> line number
    n: int = 0
    d: int = 0

    # -- access -----------------------------------------------------------------
    def has(self, section: str) -> bool:
        return section in self.sections

    def get(self, section: str, key: str, default=None):
        value = self.sections.get(section, {}).get(key)
        if value is None:
            value = DEFAULTS.get(section, {}).get(key, default)
        return value

    def number(self, section: str, key: str, cast=float, default=None):
        raw = self.get(section, key)
        if raw is None:
            if default is not None:
                return default
            raise SpecError(f"missing [{section}] {key}")
        try:
            return cast(float(raw)) if cast is int else cast(raw)
        except ValueError:
            raise SpecError(f"[{section}] {key}: cannot read {raw!r} as a number",
                            self.lines.get((section, key))) from None

    def vector(self, section: str, key: str) -> np.ndarray:
        raw = self.get(section, key)
        if raw is None:
            raise SpecError(f"missing [{section}] {key}")
        try:
            return np.array([float(v) for v in raw.replace(",", " ").split()])
        except ValueError:
            raise SpecError(f"[{section}] {key}: expected numbers, got {raw!r}",
                            self.lines.get((section, key))) from None

    # -- objects ----------------------------------------------------------------
    def series(self, key: str) -> TFSeries:
        rows = self.sections.get("hamiltonian", {}).get(key) or []
        pieces = []
        for row in rows:
            if row.kind == "exp":
                pieces.append((1.0, TFSeries.monomial(self.n, self.d, row.k, row.iota, row.j, row.coeff)))
            elif row.kind == "cos":
                pieces.append((1.0, TFSeries.cos_mode(self.n, self.d, row.k, row.iota, row.j, row.coeff)))
            else:  # sin(<k,x>) = (e^{i<k,x>} - e^{-i<k,x>}) / 2i
                kk = tuple(-v for v in row.k)
                pieces.append((1.0, TFSeries.monomial(self.n, self.d, row.k, row.iota, row.j,
                                                      row.coeff / 2j)))
                pieces.append((1.0, TFSeries.monomial(self.n, self.d, kk, row.iota, row.j,
                                                      -row.coeff / 2j)))
        if not pieces:
            return TFSeries.zero(self.n, self.d, Caps(0, 0))
        return linear_combination(pieces)

    def require_hamiltonian(self):
        if "hamiltonian" not in self.sections:
            raise SpecError("missing [hamiltonian] section")

    def normal_form(self) -> NormalForm:
        self.require_hamiltonian()
        omega = self.vector("hamiltonian", "omega")
        e = self.number("hamiltonian", "e", default=0.0)
        nf = NormalForm.from_parts(omega, self.series("g"), self.series("h_tilde") or None,
                                   self.series("g_bar") or None, e)
        for name in ("g", "h_tilde", "g_bar"):
            for row in self.sections.get("hamiltonian", {}).get(name) or []:
                if any(row.k):
                    raise SpecError(f"{name} must not depend on the angles", row.line)
        return nf

    def perturbation(self) -> TFSeries:
        return self.series("P")

    def hash(self) -> str:
        return hashlib.sha256(dump_spec(self).encode()).hexdigest()[:16]


def _parse_row(text: str, lineno: int, col0: int) -> Row:
    body = text.strip()
    kind = "exp"
    head = body.split(None, 1)
    if head and head[0] in ("exp", "cos", "sin"):
        kind, body = head[0], head[1] if len(head) > 1 else ""
    parts = body.split("|")
    if len(parts) != 4:
        raise SpecError("table row needs 'k | iota | j | coefficient'", lineno, col0 + 1)
    offset = text.index(body) if body in text else col0
    fields = []
    pos = offset
    for i, part in enumerate(parts):
        try:
            if i < 3:
                fields.append(tuple(int(v) for v in part.split()))
            else:
                vals = [float(v) for v in part.split()]
                if len(vals) not in (1, 2):
                    raise ValueError
                fields.append(complex(vals[0], vals[1] if len(vals) == 2 else 0.0))
        except ValueError:
            col = pos + len(part) - len(part.lstrip()) + 1
            raise SpecError(f"bad field {part.strip()!r}", lineno, col) from None
        pos += len(part) + 1
    return Row(kind, fields[0], fields[1], fields[2], fields[3], lineno)


def parse_spec(text: str) -> RunSpec:
    spec = RunSpec()
    section = None
    table = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        if table is not None and indent > 0:
            spec.sections[section][table].append(_parse_row(line, lineno, indent))
            continue
        table = None
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise SpecError("unterminated section header", lineno, len(line) + 1)
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                raise SpecError(f"unknown section [{section}]", lineno, indent + 2)
            spec.sections.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise SpecError("expected 'key = value'", lineno, indent + 1)
        if section is None:
            raise SpecError("entry outside any section", lineno, indent + 1)
        key, value = (v.strip() for v in stripped.split("=", 1))
        if key not in SECTIONS[section]:
            raise SpecError(f"unknown key {key!r} in [{section}]", lineno, indent + 1)
        if key in spec.sections[section]:
            raise SpecError(f"duplicate key {key!r}", lineno, indent + 1)
        spec.lines[(section, key)] = lineno
        if key in TABLE_KEYS:
            if value:
                raise SpecError(f"{key} takes a table on the following indented lines",
                                lineno, line.index("=") + 2)
            spec.sections[section][key] = []
            table = key
        else:
            spec.sections[section][key] = value
    _validate(spec)
    return spec


def _validate(spec: RunSpec):
    ham = spec.sections.get("hamiltonian")
    if ham is None:
        return
    if "omega" not in ham:
        raise SpecError("[hamiltonian] needs omega")
    n = len(spec.vector("hamiltonian", "omega"))
    dims_j = set()
    for key in TABLE_KEYS:
        for row in ham.get(key) or []:
            for name, vec in (("k", row.k), ("iota", row.iota)):
                if len(vec) != n:
                    raise SpecError(f"{key}: {name} has {len(vec)} entries but omega gives n = {n}",
                                    row.line)
            dims_j.add((len(row.j), row.line))
    sizes = {s for s, _ in dims_j}
    if len(sizes) > 1:
        (s1, l1), (s2, l2) = sorted(dims_j)[0], sorted(dims_j)[-1]
        raise SpecError(f"normal dimension mismatch: 2d = {s1} (line {l1}) vs 2d = {s2} (line {l2})",
                        l2)
    if not sizes:
        raise SpecError("[hamiltonian] needs at least a g table")
    two_d = sizes.pop()
    if two_d % 2 or two_d == 0:
        raise SpecError(f"z has {two_d} components; need an even positive number")
    spec.n, spec.d = n, two_d // 2
    if spec.has("schedule") and spec.get("schedule", "m") is None and spec.get("schedule", "L") is None:
        raise SpecError("[schedule] needs m or L")


def load_spec(path) -> RunSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


def dump_spec(spec: RunSpec) -> str:
    """Canonical text: sections and keys in a fixed order, tables re-serialized."""
    out = []
    for name, keys in SECTIONS.items():
        if name not in spec.sections:
            continue
        out.append(f"[{name}]")
        entries = spec.sections[name]
        for key in sorted(entries, key=lambda k: (k in TABLE_KEYS, k)):
            value = entries[key]
            if key in TABLE_KEYS:
                out.append(f"{key} =")
                out.extend("    " + row.text() for row in value)
            else:
                out.append(f"{key} = {' '.join(str(value).split())}")
        out.append("")
    return "\n".join(out)


def specs_equal(a: RunSpec, b: RunSpec) -> bool:
    def strip(spec):
        return {s: {k: ([(r.kind, r.k, r.iota, r.j, r.coeff) for r in v] if isinstance(v, list)
                        else " ".join(str(v).split())) for k, v in e.items()}
                for s, e in spec.sections.items()}
    return strip(a) == strip(b)
