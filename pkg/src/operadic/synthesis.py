"""Fleet design synthesis over a carrying network.

A candidate design is a forest: root assets stationed at a base, each
optionally carrying a tree of further assets permitted by the template's
carry rules.  Candidates are kept in a canonical nested form (children
sorted by their serialization, roots sorted by base then serialization), so
two assemblies of the same fleet compare and hash identically.

``enumerate_designs`` walks every canonical forest within the cost budget
and node cap.  ``search`` scores candidates by expected detections under a
scenario and supports three strategies: exhaustive enumeration, simulated
annealing, and a genetic search.  Ties on score go to the cheaper design,
then to the smaller serialization, so results are reproducible.  All
searches are seeded; the annealing and genetic streams are derived from the
seed by hashing, and every evaluation is appended to an audit log that can
be rendered as JSON lines.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping

from .algebra import (
    AssetSpec,
    FleetDesign,
    KpiReport,
    SearchScenario,
    kpi_evaluate,
    parse_scenario,
)
from .core import NetOperation, NetType
from .template import NetworkTemplate

COST_EPS = 1e-6

# a carry tree is (kind, children) with children a tuple of carry trees
Tree = tuple


class SynthesisError(ValueError):
    pass


def tree_serial(tree: Tree) -> str:
    kind, children = tree
    if not children:
        return kind
    return kind + "(" + ",".join(tree_serial(c) for c in children) + ")"


def tree_nodes(tree: Tree) -> int:
    return 1 + sum(tree_nodes(c) for c in tree[1])


def tree_cost(tree: Tree, catalog: Mapping[str, AssetSpec]) -> float:
    return catalog[tree[0]].cost + sum(tree_cost(c, catalog) for c in tree[1])


def canon_tree(tree: Tree) -> Tree:
    kind, children = tree
    fixed = tuple(canon_tree(c) for c in children)
    return (kind, tuple(sorted(fixed, key=tree_serial)))


@dataclass(frozen=True)
class CandidateDesign:
    """A canonical forest of (base, carry tree) placements."""

    placements: tuple[tuple[str, Tree], ...]

    @classmethod
    def of(cls, placements: Iterable[tuple[str, Tree]]) -> "CandidateDesign":
        fixed = [(base, canon_tree(tree)) for base, tree in placements]
        fixed.sort(key=lambda p: (p[0], tree_serial(p[1])))
        return cls(tuple(fixed))

    def serial(self) -> str:
        return ";".join(f"{base}:{tree_serial(tree)}" for base, tree in self.placements)

    def digest(self) -> str:
        return hashlib.sha256(self.serial().encode()).hexdigest()

    def node_count(self) -> int:
        return sum(tree_nodes(tree) for _, tree in self.placements)

    def cost(self, catalog: Mapping[str, AssetSpec]) -> float:
        return sum(tree_cost(tree, catalog) for _, tree in self.placements)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}

        def walk(tree: Tree) -> None:
            counts[tree[0]] = counts.get(tree[0], 0) + 1
            for c in tree[1]:
                walk(c)

        for _, tree in self.placements:
            walk(tree)
        return counts


EMPTY = CandidateDesign(())


@dataclass(frozen=True)
class SearchConfig:
    budget: float
    max_nodes: int = 5
    seed: int = 0
    iterations: int = 800  # annealing steps
    population: int = 24
    generations: int = 40
    mutation_rate: float = 0.4
    t_initial: float = 0.02
    cooling: float = 0.995
    elite: int = 2

    def __post_init__(self) -> None:
        if self.budget < 0:
            raise SynthesisError("budget must be >= 0")
        if self.max_nodes < 0:
            raise SynthesisError("max_nodes must be >= 0")
        if self.iterations < 0 or self.generations < 0:
            raise SynthesisError("iteration counts must be >= 0")
        if self.population < 2:
            raise SynthesisError("population must be at least 2")
        if not (0 <= self.elite <= self.population):
            raise SynthesisError("elite must fit inside the population")
        if not (0.0 <= self.mutation_rate <= 1.0):
            raise SynthesisError("mutation_rate must be a probability")
        if not (0.0 < self.cooling <= 1.0) or self.t_initial <= 0:
            raise SynthesisError("cooling schedule must be positive")


def _substream(seed: int, label: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class DesignEvaluator:
    """Realizes candidates as fleet designs and caches their scores."""

    def __init__(
        self,
        template: NetworkTemplate,
        catalog: Mapping[str, AssetSpec],
        scenario: SearchScenario,
        carry_interaction: str = "carrying",
    ) -> None:
        self.template = template
        self.catalog = dict(catalog)
        self.scenario = scenario
        self.carry = carry_interaction
        rule = template.rule(carry_interaction)  # raises on unknown interaction
        kinds = sorted(k for k in self.catalog if k in template.colors)
        if not kinds:
            raise SynthesisError("no catalog kind appears in the template")
        self.kinds = kinds
        self.children_of = {
            k: tuple(c for c in kinds if rule.allows(c, k)) for k in kinds
        }
        self.bases = tuple(sorted(scenario.bases))
        self._cache: dict[str, tuple[float, float]] = {}
        self.evaluations = 0

    def realize(self, cand: CandidateDesign) -> FleetDesign:
        word: list[str] = []
        edges: dict = {}
        bases: list[str] = []
        sig = self.template.signature

        def walk(tree: Tree, base: str, parent: int | None) -> None:
            index = len(word)
            word.append(tree[0])
            bases.append(base)
            if parent is not None:
                edges[sig.edge(self.carry, index, parent)] = 1
            for child in tree[1]:
                walk(child, base, index)

        for base, tree in cand.placements:
            walk(tree, base, None)
        op = NetOperation.endo(NetType.of(*word), edges, sig)
        assets = tuple(self.catalog[k] for k in word)
        return FleetDesign(op, assets, tuple(bases), self.carry)

    def score(self, cand: CandidateDesign) -> float:
        return self._entry(cand)[0]

    def rank(self, cand: CandidateDesign) -> tuple[float, float, str]:
        """Sort key: lower is better (max score, then min cost, then serial)."""
        score, cost = self._entry(cand)
        return (-score, cost, cand.serial())

    def report(self, cand: CandidateDesign) -> KpiReport:
        return kpi_evaluate(self.realize(cand), self.scenario)

    def audit_record(self, cand: CandidateDesign, **extra) -> dict:
        score, cost = self._entry(cand)
        record = {
            "design": cand.serial(),
            "sha256": cand.digest(),
            "nodes": cand.node_count(),
            "cost": cost,
            "score": score,
        }
        record.update(extra)
        return record

    def _entry(self, cand: CandidateDesign) -> tuple[float, float]:
        key = cand.serial()
        if key not in self._cache:
            report = self.report(cand)
            self._cache[key] = (report.expected_detections, report.cost)
            self.evaluations += 1
        return self._cache[key]


# ---------------------------------------------------------------------------
# exhaustive enumeration


def _trees_rooted(
    kind: str,
    max_nodes: int,
    children_of: Mapping[str, tuple[str, ...]],
    catalog: Mapping[str, AssetSpec],
    memo: dict,
) -> list[tuple[Tree, int, float]]:
    """Every canonical tree rooted at ``kind`` with at most ``max_nodes`` nodes."""
    if max_nodes < 1:
        return []
    key = (kind, max_nodes)
    if key in memo:
        return memo[key]
    options: list[tuple[Tree, int, float]] = []
    for child_kind in children_of[kind]:
        options.extend(
            _trees_rooted(child_kind, max_nodes - 1, children_of, catalog, memo)
        )
    options.sort(key=lambda o: tree_serial(o[0]))
    results: list[tuple[Tree, int, float]] = []

    def grow(start: int, nodes_left: int, acc: list[Tree], cost: float) -> None:
        results.append(((kind, tuple(acc)), max_nodes - nodes_left, cost))
        for idx in range(start, len(options)):
            sub, n, c = options[idx]
            if n <= nodes_left:
                acc.append(sub)
                grow(idx, nodes_left - n, acc, cost + c)
                acc.pop()

    grow(0, max_nodes - 1, [], catalog[kind].cost)
    memo[key] = results
    return results


def enumerate_designs(
    template: NetworkTemplate,
    catalog: Mapping[str, AssetSpec],
    scenario: SearchScenario,
    config: SearchConfig,
    carry_interaction: str = "carrying",
) -> tuple[CandidateDesign, ...]:
    """All canonical designs within the budget and node cap, empty included.

    Each isomorphism class of forests appears exactly once; growth is
    combinatorial in ``max_nodes``, which is the intended cap.
    """
    ev = DesignEvaluator(template, catalog, scenario, carry_interaction)
    memo: dict = {}
    options: list[tuple[str, Tree, int, float]] = []
    for base in ev.bases:
        for kind in ev.kinds:
            for tree, nodes, cost in _trees_rooted(
                kind, config.max_nodes, ev.children_of, catalog, memo
            ):
                if cost <= config.budget + COST_EPS:
                    options.append((base, tree, nodes, cost))
    options.sort(key=lambda o: (o[0], tree_serial(o[1])))

    found: list[CandidateDesign] = []

    def grow(start: int, nodes_left: int, budget_left: float, acc: list) -> None:
        found.append(CandidateDesign(tuple(acc)))
        for idx in range(start, len(options)):
            base, tree, nodes, cost = options[idx]
            if nodes <= nodes_left and cost <= budget_left + COST_EPS:
                acc.append((base, tree))
                grow(idx, nodes_left - nodes, budget_left - cost, acc)
                acc.pop()

    grow(0, config.max_nodes, config.budget, [])
    found.sort(key=lambda c: c.serial())
    return tuple(found)


# ---------------------------------------------------------------------------
# neighbourhood moves shared by annealing and mutation


def _tree_paths(tree: Tree, prefix: tuple = ()) -> list[tuple]:
    out = [prefix]
    for i, child in enumerate(tree[1]):
        out.extend(_tree_paths(child, prefix + (i,)))
    return out


def _node_at(tree: Tree, path: tuple) -> Tree:
    for i in path:
        tree = tree[1][i]
    return tree


def _add_child(tree: Tree, path: tuple, kind: str) -> Tree:
    if not path:
        return (tree[0], tree[1] + ((kind, ()),))
    i = path[0]
    children = list(tree[1])
    children[i] = _add_child(children[i], path[1:], kind)
    return (tree[0], tuple(children))


def _drop_node(tree: Tree, path: tuple) -> Tree | None:
    """Remove the leaf at ``path``; None when the root itself goes."""
    if not path:
        return None
    i = path[0]
    children = list(tree[1])
    replaced = _drop_node(children[i], path[1:])
    if replaced is None:
        del children[i]
    else:
        children[i] = replaced
    return (tree[0], tuple(children))


def _moves(cand: CandidateDesign, ev: DesignEvaluator, config: SearchConfig) -> list:
    """Every applicable single-step edit, in a fixed order."""
    catalog = ev.catalog
    nodes = cand.node_count()
    cost = cand.cost(catalog)
    moves: list[tuple] = []
    if nodes < config.max_nodes:
        for base in ev.bases:
            for kind in ev.kinds:
                if catalog[kind].cost + cost <= config.budget + COST_EPS:
                    moves.append(("add_root", base, kind))
        for r, (_base, tree) in enumerate(cand.placements):
            for path in _tree_paths(tree):
                host = _node_at(tree, path)[0]
                for kind in ev.children_of[host]:
                    if catalog[kind].cost + cost <= config.budget + COST_EPS:
                        moves.append(("add_child", r, path, kind))
    for r, (_base, tree) in enumerate(cand.placements):
        for path in _tree_paths(tree):
            if not _node_at(tree, path)[1]:  # leaf
                moves.append(("drop_leaf", r, path))
    if len(ev.bases) > 1:
        for r, (base, _tree) in enumerate(cand.placements):
            for other in ev.bases:
                if other != base:
                    moves.append(("change_base", r, other))
    # reattach: move a leaf (possibly a whole single-node root) under a host
    # in another placement that may carry it
    for r, (_base, tree) in enumerate(cand.placements):
        for path in _tree_paths(tree):
            node = _node_at(tree, path)
            if node[1]:
                continue
            for r2, (_b2, tree2) in enumerate(cand.placements):
                if r2 == r:
                    continue  # within-tree paths go stale once the leaf drops
                for path2 in _tree_paths(tree2):
                    host = _node_at(tree2, path2)[0]
                    if node[0] in ev.children_of[host]:
                        moves.append(("reattach", r, path, r2, path2))
    return moves


def _apply_move(cand: CandidateDesign, move: tuple) -> CandidateDesign:
    placements = list(cand.placements)
    if move[0] == "add_root":
        _, base, kind = move
        placements.append((base, (kind, ())))
    elif move[0] == "add_child":
        _, r, path, kind = move
        base, tree = placements[r]
        placements[r] = (base, _add_child(tree, path, kind))
    elif move[0] == "drop_leaf":
        _, r, path = move
        base, tree = placements[r]
        dropped = _drop_node(tree, path)
        if dropped is None:
            del placements[r]
        else:
            placements[r] = (base, dropped)
    elif move[0] == "change_base":
        _, r, other = move
        placements[r] = (other, placements[r][1])
    elif move[0] == "reattach":
        _, r, path, r2, path2 = move
        kind = _node_at(placements[r][1], path)[0]
        base, tree = placements[r]
        dropped = _drop_node(tree, path)
        if dropped is None:
            del placements[r]
            if r2 > r:
                r2 -= 1
        else:
            placements[r] = (base, dropped)
        base2, tree2 = placements[r2]
        placements[r2] = (base2, _add_child(tree2, path2, kind))
    else:
        raise SynthesisError(f"unknown move {move[0]!r}")
    return CandidateDesign.of(placements)


def mutate(
    cand: CandidateDesign,
    rng: random.Random,
    ev: DesignEvaluator,
    config: SearchConfig,
) -> CandidateDesign:
    """One random neighbourhood edit; identity when nothing applies."""
    moves = _moves(cand, ev, config)
    if not moves:
        return cand
    return _apply_move(cand, rng.choice(moves))


def crossover(
    a: CandidateDesign,
    b: CandidateDesign,
    rng: random.Random,
    ev: DesignEvaluator,
    config: SearchConfig,
) -> CandidateDesign:
    """Mix root trees from both parents, trimming the least score per cost."""
    pool = list(a.placements) + list(b.placements)
    chosen = [p for p in pool if rng.random() < 0.5]

    def density(placement) -> float:
        single = CandidateDesign.of([placement])
        cost = single.cost(ev.catalog)
        return ev.score(single) / max(cost, 1.0)

    def over_caps() -> bool:
        probe = CandidateDesign.of(chosen)
        return (
            probe.node_count() > config.max_nodes
            or probe.cost(ev.catalog) > config.budget + COST_EPS
        )

    while chosen and over_caps():
        weakest = min(range(len(chosen)), key=lambda i: (density(chosen[i]), i))
        chosen.pop(weakest)
    return CandidateDesign.of(chosen)


# ---------------------------------------------------------------------------
# search strategies


@dataclass(frozen=True)
class SearchResult:
    method: str
    best: CandidateDesign
    design: FleetDesign
    report: KpiReport
    evaluations: int
    audit: tuple[dict, ...]

    def audit_jsonl(self) -> str:
        return "\n".join(json.dumps(rec, sort_keys=True) for rec in self.audit)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "design": self.best.serial(),
            "sha256": self.best.digest(),
            "kind_counts": self.best.kind_counts(),
            "evaluations": self.evaluations,
            "report": self.report.to_dict(),
        }


def search(
    template: NetworkTemplate,
    catalog: Mapping[str, AssetSpec],
    scenario: SearchScenario,
    config: SearchConfig,
    method: str = "exhaustive",
    carry_interaction: str = "carrying",
) -> SearchResult:
    ev = DesignEvaluator(template, catalog, scenario, carry_interaction)
    if method == "exhaustive":
        best, audit = _search_exhaustive(ev, template, catalog, scenario, config)
    elif method == "anneal":
        best, audit = _search_anneal(ev, config)
    elif method == "genetic":
        best, audit = _search_genetic(ev, config)
    else:
        raise SynthesisError(f"unknown search method {method!r}")
    return SearchResult(
        method=method,
        best=best,
        design=ev.realize(best),
        report=ev.report(best),
        evaluations=ev.evaluations,
        audit=tuple(audit),
    )


def _search_exhaustive(ev, template, catalog, scenario, config):
    audit = []
    best = EMPTY
    for cand in enumerate_designs(template, catalog, scenario, config, ev.carry):
        audit.append(ev.audit_record(cand))
        if ev.rank(cand) < ev.rank(best):
            best = cand
    audit.append(ev.audit_record(best, selected=True))
    return best, audit


def _search_anneal(ev, config):
    rng = _substream(config.seed, "anneal")
    current = EMPTY
    best = EMPTY
    temperature = config.t_initial
    restart_after = max(40, config.iterations // 10)
    stalled = 0
    audit = [ev.audit_record(current, step=0, accepted=True, temperature=temperature)]
    for step in range(1, config.iterations + 1):
        if stalled >= restart_after:  # reheat from a fresh random design
            current = _random_design(rng, ev, config)
            temperature = config.t_initial
            stalled = 0
        proposal = mutate(current, rng, ev, config)
        delta = ev.score(proposal) - ev.score(current)
        accepted = delta > 0 or rng.random() < math.exp(min(delta, 0.0) / temperature)
        if accepted:
            current = proposal
        if ev.rank(current) < ev.rank(best):
            best = current
            stalled = 0
        else:
            stalled += 1
        audit.append(
            ev.audit_record(
                proposal, step=step, accepted=accepted, temperature=temperature
            )
        )
        temperature = max(temperature * config.cooling, 1e-12)
    audit.append(ev.audit_record(best, selected=True))
    return best, audit


def _random_design(rng, ev, config):
    cand = EMPTY
    for _ in range(rng.randint(0, config.max_nodes)):
        adds = [
            m for m in _moves(cand, ev, config) if m[0] in ("add_root", "add_child")
        ]
        if not adds:
            break
        cand = _apply_move(cand, rng.choice(adds))
    return cand


def _search_genetic(ev, config):
    rng = _substream(config.seed, "genetic")
    population = [_random_design(rng, ev, config) for _ in range(config.population)]
    best = min(population, key=ev.rank)
    audit = [ev.audit_record(best, generation=0)]

    def tournament(ranked):
        i = rng.randrange(len(ranked))
        j = rng.randrange(len(ranked))
        return ranked[min(i, j)]  # ranked is sorted best-first

    for generation in range(1, config.generations + 1):
        ranked = sorted(population, key=ev.rank)
        if ev.rank(ranked[0]) < ev.rank(best):
            best = ranked[0]
        next_gen = list(ranked[: config.elite])
        while len(next_gen) < config.population:
            child = crossover(tournament(ranked), tournament(ranked), rng, ev, config)
            if rng.random() < config.mutation_rate:
                child = mutate(child, rng, ev, config)
            next_gen.append(child)
        population = next_gen
        audit.append(ev.audit_record(min(population, key=ev.rank), generation=generation))
    final = min(population, key=ev.rank)
    if ev.rank(final) < ev.rank(best):
        best = final
    audit.append(ev.audit_record(best, selected=True))
    return best, audit


# ---------------------------------------------------------------------------
# task JSON


@dataclass(frozen=True)
class SynthesisTask:
    scenario: SearchScenario
    config: SearchConfig
    method: str
    carry_interaction: str = "carrying"


def parse_synthesis_task(data: Mapping | str) -> SynthesisTask:
    """Parse the synthesis task dialect.

    Shape::

        {"version": 1,
         "scenario": {"version": 1, "bases": {...}, "area_nmi2": ...,
                      "window_hr": ..., "target_mix": {...}},
         "budget": 9060000,
         "max_nodes": 5,
         "method": "exhaustive",
         "seed": 7,
         "iterations": 800, "population": 24, "generations": 40}
    """
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("version") != 1:
        raise SynthesisError(
            f"synthesis task: expected \"version\": 1, got {data.get('version')!r}"
        )
    known = {
        "version",
        "scenario",
        "budget",
        "max_nodes",
        "method",
        "seed",
        "iterations",
        "population",
        "generations",
        "mutation_rate",
        "carry_interaction",
    }
    unknown = set(data) - known
    if unknown:
        raise SynthesisError(f"synthesis task: unknown keys {sorted(unknown)}")
    if "budget" not in data or "scenario" not in data:
        raise SynthesisError("synthesis task: budget and scenario are required")
    config_kwargs = dict(budget=float(data["budget"]))
    for key in ("max_nodes", "seed", "iterations", "population", "generations"):
        if key in data:
            config_kwargs[key] = int(data[key])
    if "mutation_rate" in data:
        config_kwargs["mutation_rate"] = float(data["mutation_rate"])
    return SynthesisTask(
        scenario=parse_scenario(data["scenario"]),
        config=SearchConfig(**config_kwargs),
        method=data.get("method", "exhaustive"),
        carry_interaction=data.get("carry_interaction", "carrying"),
    )
