"""Wiring diagrams: typed boundaries, wire partitions, nesting, requirements.

A wiring operation connects the ports of inner boundaries to each other and
to an outer boundary; the connections form a partition of all ports into
wire classes, each carrying a single value space.  Nesting substitutes a
diagram into an inner boundary and flattens: wire classes are merged through
the shared intermediate ports, which then disappear.

The requirements layer works over finite grids only: a requirement restricts
the values of some boundary's ports to unions of closed intervals, joint
validity enumerates internal states (one value per wire class) satisfying
all component requirements, and the soundness check asks whether every
jointly valid state also satisfies the outer requirements.

Port direction is carried and linted (an all-``in`` wire is suspicious) but
never enforced; the LSI-style diagrams this models treat wires as shared
variables.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

PortRef = tuple[str, str]  # (boundary name, port name)


class WiringError(ValueError):
    pass


@dataclass(frozen=True)
class Port:
    name: str
    space: str
    direction: str = "bi"

    def __post_init__(self) -> None:
        if self.direction not in ("in", "out", "bi"):
            raise WiringError(f"port {self.name!r}: bad direction {self.direction!r}")
        if not self.name or not self.space:
            raise WiringError("port name and space must be non-empty")


@dataclass(frozen=True)
class Boundary:
    name: str
    ports: tuple[Port, ...]

    def __post_init__(self) -> None:
        names = [p.name for p in self.ports]
        if len(set(names)) != len(names):
            raise WiringError(f"boundary {self.name!r}: duplicate port names")

    def port(self, name: str) -> Port:
        for p in self.ports:
            if p.name == name:
                return p
        raise WiringError(f"boundary {self.name!r} has no port {name!r}")

    def port_signature(self) -> frozenset[tuple[str, str]]:
        return frozenset((p.name, p.space) for p in self.ports)


def _canon_wires(wires: Iterable[Iterable[PortRef]]) -> tuple[frozenset[PortRef], ...]:
    classes = [frozenset(tuple(ref) for ref in wire) for wire in wires]
    classes = [w for w in classes if w]
    return tuple(sorted(classes, key=lambda w: sorted(w)))


@dataclass(frozen=True)
class WiringOp:
    """One layer of wiring between an outer boundary and inner boundaries."""

    outer: Boundary
    inner: tuple[Boundary, ...]
    wires: tuple[frozenset[PortRef], ...]

    def __post_init__(self) -> None:
        names = [b.name for b in self.inner]
        if len(set(names)) != len(names):
            raise WiringError(f"duplicate inner boundary names: {names}")
        if self.outer.name in names:
            raise WiringError(f"outer boundary name {self.outer.name!r} reused inside")
        object.__setattr__(self, "wires", _canon_wires(self.wires))

        all_ports: dict[PortRef, Port] = {}
        for b in (self.outer, *self.inner):
            for p in b.ports:
                all_ports[(b.name, p.name)] = p
        seen: set[PortRef] = set()
        for wire in self.wires:
            for ref in wire:
                if ref not in all_ports:
                    raise WiringError(f"wire references unknown port {ref[0]}.{ref[1]}")
                if ref in seen:
                    raise WiringError(f"port {ref[0]}.{ref[1]} appears in two wires")
                seen.add(ref)
            spaces = {all_ports[ref].space for ref in wire}
            if len(spaces) > 1:
                raise WiringError(
                    f"wire {sorted(wire)} mixes value spaces {sorted(spaces)}"
                )
        missing = set(all_ports) - seen
        if missing:
            raise WiringError(
                "ports not covered by any wire: "
                + ", ".join(f"{b}.{p}" for b, p in sorted(missing))
            )

    def boundary(self, name: str) -> Boundary:
        if name == self.outer.name:
            return self.outer
        for b in self.inner:
            if b.name == name:
                return b
        raise WiringError(f"no boundary named {name!r} in this diagram")

    def port_of(self, ref: PortRef) -> Port:
        return self.boundary(ref[0]).port(ref[1])

    def wire_of(self, ref: PortRef) -> frozenset[PortRef]:
        for wire in self.wires:
            if ref in wire:
                return wire
        raise WiringError(f"no wire contains {ref[0]}.{ref[1]}")

    def wire_space(self, wire: frozenset[PortRef]) -> str:
        return self.port_of(next(iter(wire))).space

    def wire_label(self, wire: frozenset[PortRef]) -> str:
        owner, port = min(wire)
        return f"{owner}.{port}"

    def lint(self) -> list[str]:
        """Direction advisories; wiring is not rejected on their account."""
        notes = []
        for wire in self.wires:
            directions = {self.port_of(ref).direction for ref in wire}
            if len(wire) > 1 and directions == {"in"}:
                notes.append(f"wire {self.wire_label(wire)} connects only 'in' ports")
        return notes


def identity_wiring(boundary: Boundary) -> WiringOp:
    """Wires every outer port straight through to one inner copy."""
    inner = Boundary(boundary.name + ".inner", boundary.ports)
    wires = [
        frozenset({(boundary.name, p.name), (inner.name, p.name)}) for p in boundary.ports
    ]
    return WiringOp(boundary, (inner,), tuple(wires))


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def nest(f: WiringOp, gs: Sequence[WiringOp]) -> WiringOp:
    """Substitute ``gs[i]`` into ``f``'s i-th inner boundary and flatten.

    Each g's outer boundary must expose the same (port name, space) set as
    the boundary it replaces.  Wire classes of the result are the union-find
    closure of all layers' wires through the shared intermediate ports, with
    those ports dropped.
    """
    if len(gs) != len(f.inner):
        raise WiringError(f"nest expects {len(f.inner)} diagrams, got {len(gs)}")
    for i, g in enumerate(gs):
        want = f.inner[i].port_signature()
        got = g.outer.port_signature()
        if want != got:
            raise WiringError(
                f"slot {i}: boundary {f.inner[i].name!r} has ports "
                f"{sorted(want)} but {g.outer.name!r} exposes {sorted(got)}"
            )
    inner_names = [b.name for g in gs for b in g.inner]
    if len(set(inner_names)) != len(inner_names):
        raise WiringError(f"inner boundary names collide across slots: {inner_names}")
    if f.outer.name in inner_names:
        raise WiringError(f"outer name {f.outer.name!r} collides with a nested boundary")

    slot_of = {f.inner[i].name: i for i in range(len(f.inner))}
    uf = _UnionFind()

    def f_node(ref: PortRef):
        if ref[0] in slot_of:
            return ("mid", slot_of[ref[0]], ref[1])
        return ("keep", ref)

    for wire in f.wires:
        refs = sorted(wire)
        for other in refs[1:]:
            uf.union(f_node(refs[0]), f_node(other))
    for i, g in enumerate(gs):

        def g_node(ref: PortRef, i=i, g=g):
            if ref[0] == g.outer.name:
                return ("mid", i, ref[1])
            return ("keep", ref)

        for wire in g.wires:
            refs = sorted(wire)
            for other in refs[1:]:
                uf.union(g_node(refs[0]), g_node(other))
            uf.find(g_node(refs[0]))

    # make sure isolated singleton wires still register
    for wire in f.wires:
        for ref in wire:
            uf.find(f_node(ref))

    classes: dict = {}
    for node in list(uf.parent):
        root = uf.find(node)
        classes.setdefault(root, set()).add(node)
    flat_wires = []
    for members in classes.values():
        kept = {ref for kind, *rest in members if kind == "keep" for ref in [rest[0]]}
        if kept:
            flat_wires.append(frozenset(kept))
    inner = tuple(b for g in gs for b in g.inner)
    return WiringOp(f.outer, inner, tuple(flat_wires))


@dataclass(frozen=True)
class WiringComparison:
    equal: bool
    witness: str | None = None


def diagrams_equal(a: WiringOp, b: WiringOp) -> WiringComparison:
    """Structural equality with inner boundaries matched by name."""
    if a.outer.name != b.outer.name or a.outer.port_signature() != b.outer.port_signature():
        return WiringComparison(False, f"outer boundary differs: {a.outer.name} vs {b.outer.name}")
    a_inner = {x.name: x for x in a.inner}
    b_inner = {x.name: x for x in b.inner}
    if set(a_inner) != set(b_inner):
        only = set(a_inner) ^ set(b_inner)
        return WiringComparison(False, f"inner boundaries differ: {sorted(only)}")
    for name in a_inner:
        if a_inner[name].port_signature() != b_inner[name].port_signature():
            return WiringComparison(False, f"ports of {name!r} differ")
    wa, wb = set(a.wires), set(b.wires)
    if wa != wb:
        diff = sorted(wa ^ wb, key=lambda w: sorted(w))
        wire = diff[0]
        side = "first" if wire in wa else "second"
        label = "|".join(f"{o}.{p}" for o, p in sorted(wire))
        return WiringComparison(False, f"wire {{{label}}} only in {side} diagram")
    return WiringComparison(True, None)


# ---------------------------------------------------------------------------
# requirements over finite grids


@dataclass(frozen=True)
class Requirement:
    """Closed-interval constraints on some ports of one boundary.

    ``intervals`` maps a port name to a non-empty list of (lo, hi) pairs; a
    value is admissible when it falls in at least one of them.
    """

    boundary: str
    name: str
    intervals: Mapping[str, tuple[tuple[float, float], ...]]

    def __post_init__(self) -> None:
        norm = {}
        for port, spans in self.intervals.items():
            spans = tuple((float(lo), float(hi)) for lo, hi in spans)
            if not spans:
                raise WiringError(f"requirement {self.name!r}: empty interval list for {port!r}")
            for lo, hi in spans:
                if lo > hi:
                    raise WiringError(f"requirement {self.name!r}: interval [{lo}, {hi}] is empty")
            norm[port] = spans
        object.__setattr__(self, "intervals", norm)

    def admits(self, values: Mapping[str, float]) -> bool:
        for port, spans in self.intervals.items():
            v = values[port]
            if not any(lo <= v <= hi for lo, hi in spans):
                return False
        return True


@dataclass(frozen=True)
class ValidityResult:
    labels: tuple[str, ...]
    states: tuple[tuple[float, ...], ...]

    @property
    def count(self) -> int:
        return len(self.states)

    def as_dicts(self) -> list[dict[str, float]]:
        return [dict(zip(self.labels, s)) for s in self.states]


def _resolve_requirements(op: WiringOp, reqs: Sequence[Requirement]) -> list[tuple[Requirement, dict[str, int]]]:
    """Map each requirement's ports to wire indices; errors name the culprit."""
    index_of = {wire: i for i, wire in enumerate(op.wires)}
    resolved = []
    for req in reqs:
        boundary = op.boundary(req.boundary)
        port_to_wire = {}
        for port in req.intervals:
            boundary.port(port)  # raises if absent
            port_to_wire[port] = index_of[op.wire_of((boundary.name, port))]
        resolved.append((req, port_to_wire))
    return resolved


def joint_validity(
    op: WiringOp,
    reqs: Sequence[Requirement],
    grid: Mapping[str, Sequence[float]],
) -> ValidityResult:
    """Enumerate internal states (one value per wire) meeting every requirement.

    ``grid`` supplies the finite sample set per value space; every wire's
    space must be present.
    """
    samples = []
    for wire in op.wires:
        space = op.wire_space(wire)
        if space not in grid:
            raise WiringError(
                f"no grid for value space {space!r} (wire {op.wire_label(wire)})"
            )
        if not grid[space]:
            raise WiringError(f"grid for {space!r} is empty")
        samples.append(tuple(grid[space]))
    resolved = _resolve_requirements(op, reqs)
    labels = tuple(op.wire_label(w) for w in op.wires)
    valid = []
    for state in itertools.product(*samples):
        ok = True
        for req, port_to_wire in resolved:
            values = {port: state[w] for port, w in port_to_wire.items()}
            if not req.admits(values):
                ok = False
                break
        if ok:
            valid.append(tuple(state))
    return ValidityResult(labels, tuple(valid))


@dataclass(frozen=True)
class SoundnessReport:
    sound: bool
    checked: int
    counterexamples: tuple[tuple[dict[str, float], str], ...]

    def to_dict(self) -> dict:
        return {
            "sound": self.sound,
            "checked": self.checked,
            "counterexamples": [
                {"state": state, "violated": name} for state, name in self.counterexamples
            ],
        }


def soundness_check(
    op: WiringOp,
    component_reqs: Sequence[Requirement],
    outer_reqs: Sequence[Requirement],
    grid: Mapping[str, Sequence[float]],
) -> SoundnessReport:
    """Do the component requirements entail the outer ones on the grid?

    Every jointly valid internal state is projected to the outer boundary and
    tested against ``outer_reqs``; failures are returned as (state, violated
    requirement) counterexamples.
    """
    for req in outer_reqs:
        if req.boundary != op.outer.name:
            raise WiringError(
                f"outer requirement {req.name!r} names boundary {req.boundary!r}, "
                f"expected {op.outer.name!r}"
            )
    joint = joint_validity(op, component_reqs, grid)
    resolved = _resolve_requirements(op, outer_reqs)
    counterexamples = []
    for state in joint.states:
        for req, port_to_wire in resolved:
            values = {port: state[w] for port, w in port_to_wire.items()}
            if not req.admits(values):
                counterexamples.append((dict(zip(joint.labels, state)), req.name))
    return SoundnessReport(not counterexamples, joint.count, tuple(counterexamples))


# ---------------------------------------------------------------------------
# JSON bundles


def _parse_ref(text: str) -> PortRef:
    if text.count(".") != 1:
        raise WiringError(f"port reference must be 'boundary.port': {text!r}")
    owner, port = text.split(".")
    return (owner, port)


def parse_wiring_bundle(data: Mapping | str) -> dict[str, WiringOp]:
    """Parse a bundle of named wiring operations and their compositions.

    Shape::

        {"version": 1,
         "boundaries": {"LSI": {"ports": [{"name": ..., "space": ...}, ...]}},
         "operations": {"f": {"outer": "LSI", "inner": ["LengthSys", ...],
                              "wires": [["LengthSys.laser", "TempSys.laser"]]}},
         "compositions": {"flat": {"op": "f", "args": ["l", "t"]}}}

    Compositions may reference operations or earlier compositions by name.
    """
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("version") != 1:
        raise WiringError(f"wiring bundle: expected \"version\": 1, got {data.get('version')!r}")
    unknown = set(data) - {"version", "boundaries", "operations", "compositions"}
    if unknown:
        raise WiringError(f"wiring bundle: unknown keys {sorted(unknown)}")

    boundaries: dict[str, Boundary] = {}
    for name, raw in data.get("boundaries", {}).items():
        ports = tuple(
            Port(p["name"], p["space"], p.get("direction", "bi")) for p in raw["ports"]
        )
        boundaries[name] = Boundary(name, ports)

    diagrams: dict[str, WiringOp] = {}
    for name, raw in data.get("operations", {}).items():
        try:
            outer = boundaries[raw["outer"]]
            inner = tuple(boundaries[b] for b in raw["inner"])
        except KeyError as missing:
            raise WiringError(f"operation {name!r}: unknown boundary {missing}") from None
        wires = [[_parse_ref(ref) for ref in wire] for wire in raw["wires"]]
        diagrams[name] = WiringOp(outer, inner, _canon_wires(wires))

    for name, raw in data.get("compositions", {}).items():
        try:
            op = diagrams[raw["op"]]
            args = [diagrams[a] for a in raw["args"]]
        except KeyError as missing:
            raise WiringError(f"composition {name!r}: unknown diagram {missing}") from None
        diagrams[name] = nest(op, args)
    return diagrams


def load_wiring_bundle(path: str | Path) -> dict[str, WiringOp]:
    return parse_wiring_bundle(json.loads(Path(path).read_text()))


def parse_requirements_bundle(
    data: Mapping | str,
) -> tuple[list[Requirement], list[Requirement], dict[str, list[float]]]:
    """Parse ``{"version": 1, "components": [...], "outer": [...], "grid": {...}}``."""
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("version") != 1:
        raise WiringError(f"requirements: expected \"version\": 1, got {data.get('version')!r}")
    unknown = set(data) - {"version", "components", "outer", "grid"}
    if unknown:
        raise WiringError(f"requirements: unknown keys {sorted(unknown)}")

    def parse_reqs(raw_list) -> list[Requirement]:
        out = []
        for raw in raw_list:
            out.append(
                Requirement(
                    boundary=raw["boundary"],
                    name=raw["name"],
                    intervals={
                        port: tuple((lo, hi) for lo, hi in spans)
                        for port, spans in raw["intervals"].items()
                    },
                )
            )
        return out

    grid = {space: [float(v) for v in values] for space, values in data.get("grid", {}).items()}
    return parse_reqs(data.get("components", [])), parse_reqs(data.get("outer", [])), grid


def load_requirements_bundle(path: str | Path):
    return parse_requirements_bundle(json.loads(Path(path).read_text()))
