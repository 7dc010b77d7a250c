"""Reading and writing CPLEX LP text.

Only the slice of the format the planner emits is supported: Minimize or
Maximize, one named objective row, Subject To, Bounds (including fixed and
free variables), Binary, General, End.  ``write_lp`` is deterministic, and
``parse_lp(write_lp(m))`` reproduces the model exactly, so a second write is
byte-identical; numbers are rendered as integers when possible and via
``repr`` otherwise, which floats survive round-trip.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence


class LpError(ValueError):
    pass


@dataclass(frozen=True)
class LpConstraint:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str  # "<=", ">=", "="
    rhs: float

    def __post_init__(self) -> None:
        if self.sense not in ("<=", ">=", "="):
            raise LpError(f"bad constraint sense {self.sense!r}")


@dataclass(frozen=True)
class LpModel:
    sense: str  # "min" | "max"
    objective: tuple[tuple[str, float], ...]
    constraints: tuple[LpConstraint, ...]
    bounds: tuple[tuple[str, float | None, float | None], ...]
    binaries: tuple[str, ...]
    generals: tuple[str, ...] = ()
    objective_name: str = "obj"

    def constraint(self, name: str) -> LpConstraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise LpError(f"no constraint named {name!r}")

    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for v, _ in self.objective:
            seen.setdefault(v)
        for c in self.constraints:
            for v, _ in c.terms:
                seen.setdefault(v)
        for v, _, _ in self.bounds:
            seen.setdefault(v)
        for v in self.binaries + self.generals:
            seen.setdefault(v)
        return tuple(seen)


def _num(x: float) -> str:
    f = float(x)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _expr(terms: Sequence[tuple[str, float]]) -> str:
    if not terms:
        return ""
    parts: list[str] = []
    for i, (var, coef) in enumerate(terms):
        mag = abs(coef)
        body = var if mag == 1.0 else f"{_num(mag)} {var}"
        if i == 0:
            parts.append(f"- {body}" if coef < 0 else body)
        else:
            parts.append(f"{'-' if coef < 0 else '+'} {body}")
    return " ".join(parts)


def write_lp(model: LpModel) -> str:
    lines: list[str] = []
    lines.append("Minimize" if model.sense == "min" else "Maximize")
    lines.append(f" {model.objective_name}: {_expr(model.objective)}".rstrip())
    lines.append("Subject To")
    for c in model.constraints:
        lines.append(f" {c.name}: {_expr(c.terms)} {c.sense} {_num(c.rhs)}")
    if model.bounds:
        lines.append("Bounds")
        for name, lo, hi in model.bounds:
            if lo is None and hi is None:
                lines.append(f" {name} free")
            elif lo is not None and hi is not None and lo == hi:
                lines.append(f" {name} = {_num(lo)}")
            elif lo is None:
                lines.append(f" {name} <= {_num(hi)}")
            elif hi is None:
                lines.append(f" {name} >= {_num(lo)}")
            else:
                lines.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    if model.binaries:
        lines.append("Binary")
        lines.extend(f" {v}" for v in model.binaries)
    if model.generals:
        lines.append("General")
        lines.extend(f" {v}" for v in model.generals)
    lines.append("End")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(
    r"\s*(<=|>=|=|\+|-|[A-Za-z_][A-Za-z0-9_.]*|[0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)"
)
_SECTIONS = {
    "minimize": "min",
    "maximize": "max",
    "subject to": None,
    "such that": None,
    "bounds": None,
    "binary": None,
    "binaries": None,
    "general": None,
    "generals": None,
    "end": None,
}


def _tokens(text: str) -> list[str]:
    out: list[str] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise LpError(f"cannot tokenize {text[pos:pos + 20]!r}")
            break
        out.append(m.group(1))
        pos = m.end()
    return out


def _is_number(tok: str) -> bool:
    return bool(re.fullmatch(r"[0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?", tok))


def _parse_terms(tokens: Sequence[str]) -> tuple[tuple[str, float], ...]:
    terms: list[tuple[str, float]] = []
    sign = 1.0
    coef: float | None = None
    for tok in tokens:
        if tok == "+":
            pass
        elif tok == "-":
            sign = -sign
        elif _is_number(tok):
            if coef is not None:
                raise LpError("two coefficients in a row")
            coef = float(tok)
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
    if coef is not None:
        raise LpError("dangling coefficient")
    return tuple(terms)


def _parse_signed(tokens: Sequence[str]) -> float:
    sign = 1.0
    for tok in tokens:
        if tok == "-":
            sign = -sign
        elif tok == "+":
            pass
        elif _is_number(tok):
            return sign * float(tok)
        else:
            break
    raise LpError(f"expected a number, got {list(tokens)!r}")


def _section_of(line: str) -> str | None:
    label = line.strip().lower()
    return label if label in _SECTIONS else None


def parse_lp(text: str) -> LpModel:
    sense = "min"
    objective: tuple[tuple[str, float], ...] = ()
    objective_name = "obj"
    constraints: list[LpConstraint] = []
    bounds: list[tuple[str, float | None, float | None]] = []
    binaries: list[str] = []
    generals: list[str] = []

    section = None
    row_buffer: list[str] = []

    def flush_row() -> None:
        if not row_buffer:
            return
        joined = " ".join(row_buffer)
        row_buffer.clear()
        name, _, rest = joined.partition(":")
        tokens = _tokens(rest)
        # split at the sense token
        for i, tok in enumerate(tokens):
            if tok in ("<=", ">=", "="):
                constraints.append(
                    LpConstraint(
                        name.strip(),
                        _parse_terms(tokens[:i]),
                        tok,
                        _parse_signed(tokens[i + 1 :]),
                    )
                )
                return
        raise LpError(f"constraint without a sense: {joined!r}")

    for raw in text.splitlines():
        if raw.lstrip().startswith("\\") or not raw.strip():
            continue
        label = _section_of(raw)
        if label is not None:
            flush_row()
            if label in ("minimize", "maximize"):
                sense = _SECTIONS[label]
                section = "objective"
            elif label in ("subject to", "such that"):
                section = "constraints"
            elif label == "bounds":
                section = "bounds"
            elif label in ("binary", "binaries"):
                section = "binary"
            elif label in ("general", "generals"):
                section = "general"
            else:
                section = "end"
            continue
        line = raw.strip()
        if section == "objective":
            name, colon, rest = line.partition(":")
            if colon:
                objective_name = name.strip() or "obj"
                objective = objective + _parse_terms(_tokens(rest))
            else:
                objective = objective + _parse_terms(_tokens(line))
        elif section == "constraints":
            if ":" in line and row_buffer:
                flush_row()
            row_buffer.append(line)
            if any(tok in ("<=", ">=", "=") for tok in _tokens(line.partition(":")[2] if ":" in line else line)):
                flush_row()
        elif section == "bounds":
            bounds.append(_parse_bound(line))
        elif section == "binary":
            binaries.extend(line.split())
        elif section == "general":
            generals.extend(line.split())
        elif section is None:
            raise LpError(f"content before the objective section: {line!r}")
    flush_row()
    return LpModel(
        sense=sense,
        objective=objective,
        constraints=tuple(constraints),
        bounds=tuple(bounds),
        binaries=tuple(binaries),
        generals=tuple(generals),
        objective_name=objective_name,
    )


def _parse_bound(line: str) -> tuple[str, float | None, float | None]:
    tokens = _tokens(line)
    if len(tokens) == 2 and tokens[1].lower() == "free":
        return (tokens[0], None, None)
    senses = [i for i, t in enumerate(tokens) if t in ("<=", ">=", "=")]
    if len(senses) == 2 and tokens[senses[0]] == "<=" and tokens[senses[1]] == "<=":
        lo = _parse_signed(tokens[: senses[0]])
        name = tokens[senses[0] + 1]
        hi = _parse_signed(tokens[senses[1] + 1 :])
        return (name, lo, hi)
    if len(senses) == 1:
        i = senses[0]
        sense = tokens[i]
        if _is_number(tokens[0]) or tokens[0] in ("+", "-"):
            # number sense name
            value = _parse_signed(tokens[:i])
            name = tokens[i + 1]
            return (name, value, None) if sense == "<=" else (name, None, value)
        name = tokens[0]
        value = _parse_signed(tokens[i + 1 :])
        if sense == "=":
            return (name, value, value)
        return (name, None, value) if sense == "<=" else (name, value, None)
    raise LpError(f"cannot parse bound line {line!r}")
