import itertools
import json
import math
import random
from pathlib import Path

import numpy as np
import pytest

from conftest import random_micro_net
from operadic.planner import (
    Agent,
    ConstraintSystem,
    CountsSolution,
    FuelSpec,
    Infeasible,
    Level,
    PlannerError,
    RiskSpec,
    Solution,
    TaskVector,
    TypeVector,
    Undecided,
    add_fuel_semantics,
    add_risk_semantics,
    compile_scenario,
    compile_timed,
    compile_untimed,
    enumerate_bindings,
    lift,
    parse_plan_scenario,
    project,
    solve,
    solve_all,
)
from operadic.template import load_tasking_template

DATA = Path(__file__).parent / "data"

# ---------------------------------------------------------------------------
# frozen expectations: the rescue net's binding matrices, worked by hand.
# Columns are agent-major (first agent's places a..d, then the second's).

M_SINGLE = [
    [-1, 0, 1, 0],
    [0, -1, 1, 0],
]
MS_SINGLE = [
    [1, 0, 0, 0],
    [0, 1, 0, 0],
]

M_PAIR = [
    [-1, 0, 1, 0, 0, 0, 0, 0],
    [0, -1, 1, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, -1, 0, 1, 0],
    [0, 0, 0, 0, 0, -1, 1, 0],
    [0, 0, -1, 1, 0, 0, -1, 1],
]
MS_PAIR = [
    [1, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 1, 0, 0],
    [0, 0, 1, 0, 0, 0, 1, 0],
]

M_MIXED = [
    [-1, 0, 1, 0, 0, 0, 0, 0],
    [0, -1, 1, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],  # refuel moves nobody
]
MS_MIXED = [
    [1, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0, 1, 0],
]


# ---------------------------------------------------------------------------
# independent oracle: exhaustive schedule search straight off the JSON dict.
# Shares no code with the planner; same timing convention (a task started at
# s holds its agents from s, keeps them off the board until s+d, must finish
# inside the horizon).


def _oracle_instances(transitions, positions, colors):
    found = []
    for tr in transitions:
        need = {}
        for tok in tr["inputs"]:
            key = (tok["color"], tok["place"])
            need[key] = need.get(key, 0) + tok.get("count", 1)
        groups = sorted(need.items())

        def pick(i, used, chosen):
            if i == len(groups):
                yield dict(chosen)
                return
            (color, place), n = groups[i]
            pool = [
                a
                for a in sorted(colors)
                if colors[a] == color and positions.get(a) == place and a not in used
            ]
            for combo in itertools.combinations(pool, n):
                chosen[(color, place)] = combo
                yield from pick(i + 1, used | set(combo), chosen)
            chosen.pop((color, place), None)

        outs = {}
        for tok in tr["outputs"]:
            outs.setdefault(tok["color"], []).extend(
                [tok["place"]] * tok.get("count", 1)
            )
        for assignment in pick(0, frozenset(), {}):
            src_of = {}
            per_color = {}
            for (color, place), combo in assignment.items():
                per_color.setdefault(color, []).extend(combo)
                for a in combo:
                    src_of[a] = place
            options = []
            for color in sorted(per_color):
                ids = sorted(per_color[color])
                slots = sorted(outs.get(color, []))
                options.append(
                    sorted(
                        {
                            tuple(sorted(zip(perm, slots)))
                            for perm in itertools.permutations(ids)
                        }
                    )
                )
            for combo in itertools.product(*options):
                dest = {a: p for matching in combo for a, p in matching}
                moves = tuple(sorted((a, src_of[a], dest[a]) for a in src_of))
                found.append((tr["name"], tr["duration"], moves))
    return found


def oracle_min_makespan(raw, colors, starts, goal, horizon):
    """Minimum over all feasible schedules of the latest task completion."""
    transitions = raw["transitions"]
    best = [math.inf]

    def disjoint_subsets(instances):
        acc = []

        def rec(i, used):
            yield list(acc)
            for j in range(i, len(instances)):
                ids = {a for a, _, _ in instances[j][2]}
                if ids & used:
                    continue
                acc.append(instances[j])
                yield from rec(j + 1, used | ids)
                acc.pop()

        yield from rec(0, frozenset())

    def sim(t, positions, busy, maxc):
        if t == horizon:
            if busy:
                return
            for (place, color), n in goal.items():
                have = sum(
                    1
                    for a, p in positions.items()
                    if p == place and colors[a] == color
                )
                if have < n:
                    return
            best[0] = min(best[0], maxc)
            return
        usable = [
            x
            for x in _oracle_instances(transitions, positions, colors)
            if t + x[1] <= horizon
        ]
        for subset in disjoint_subsets(usable):
            pos2 = dict(positions)
            busy2 = dict(busy)
            mc = maxc
            for _name, d, moves in subset:
                for a, _src, dst in moves:
                    pos2[a] = None
                    busy2[a] = (t + d, dst)
                mc = max(mc, t + d)
            for a, (release, dst) in list(busy2.items()):
                if release == t + 1:
                    pos2[a] = dst
                    del busy2[a]
            sim(t + 1, pos2, busy2, mc)

    sim(0, dict(starts), {}, 0)
    return best[0]


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def rescue():
    return load_tasking_template(DATA / "rescue_tasking.json")


def pair_fleet():
    return (Agent("u1", "uh60", "a"), Agent("u2", "uh60", "b"))


def mixed_fleet():
    return (Agent("u1", "uh60", "a"), Agent("h1", "hc130", "c"))


class TestBindings:
    def test_single_agent_bindings(self, rescue):
        fleet = (Agent("u1", "uh60", "a"),)
        bindings = enumerate_bindings(rescue, fleet)
        assert [(b.name, b.moves) for b in bindings] == [
            ("t1", (("u1", "a", "c"),)),
            ("t2", (("u1", "b", "c"),)),
        ]

    def test_pair_rows_group_singles_first(self, rescue):
        bindings = enumerate_bindings(rescue, pair_fleet())
        assert [(b.name, b.agents) for b in bindings] == [
            ("t1", ("u1",)),
            ("t2", ("u1",)),
            ("t1", ("u2",)),
            ("t2", ("u2",)),
            ("t4", ("u1", "u2")),
        ]

    def test_mixed_fleet_includes_refuel(self, rescue):
        bindings = enumerate_bindings(rescue, mixed_fleet())
        assert [(b.name, b.agents) for b in bindings] == [
            ("t1", ("u1",)),
            ("t2", ("u1",)),
            ("t3", ("h1", "u1")),
        ]
        assert bindings[2].moves == (("h1", "c", "c"), ("u1", "c", "c"))

    def test_output_matchings_fan_out(self, rescue):
        # a variant where two same-color tokens land at distinct places
        raw = json.loads((DATA / "rescue_tasking.json").read_text())
        raw["transitions"][3]["outputs"] = [
            {"color": "uh60", "place": "c", "count": 1},
            {"color": "uh60", "place": "d", "count": 1},
        ]
        from operadic.template import parse_tasking_template

        template = parse_tasking_template(raw)
        bindings = enumerate_bindings(template, pair_fleet())
        fan = [b for b in bindings if b.name == "t4"]
        assert {b.moves for b in fan} == {
            (("u1", "c", "c"), ("u2", "c", "d")),
            (("u1", "c", "d"), ("u2", "c", "c")),
        }


class TestMatrices:
    def test_single_agent_matrices(self, rescue):
        cs = compile_untimed(rescue, (Agent("u1", "uh60", "a"),), steps=1)
        assert np.array_equal(cs.update_matrix(), np.array(M_SINGLE))
        assert np.array_equal(cs.source_matrix(), np.array(MS_SINGLE))
        assert cs.column_labels == ("u1:a", "u1:b", "u1:c", "u1:d")

    def test_pair_matrices(self, rescue):
        cs = compile_untimed(rescue, pair_fleet(), steps=1)
        assert np.array_equal(cs.update_matrix(), np.array(M_PAIR))
        assert np.array_equal(cs.source_matrix(), np.array(MS_PAIR))

    def test_mixed_matrices(self, rescue):
        cs = compile_untimed(rescue, mixed_fleet(), steps=1)
        assert np.array_equal(cs.update_matrix(), np.array(M_MIXED))
        assert np.array_equal(cs.source_matrix(), np.array(MS_MIXED))

    def test_duration_stratification(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), horizon=4)
        # t1 (d=2) for each agent plus t4 (d=2): 3 rows; t2 (d=1): 2 rows
        assert cs.update_matrix(duration=2).shape == (3, 8)
        assert cs.update_matrix(duration=1).shape == (2, 8)
        # the plan level collapses every duration to one step
        plan = compile_untimed(rescue, pair_fleet(), steps=1)
        assert plan.update_matrix(duration=1).shape == (5, 8)

    def test_fuel_matrix_charges_task_costs(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), horizon=4)
        cs = add_fuel_semantics(
            cs, FuelSpec(burn_rates={}, task_costs={"t1": {"uh60": 2.0}})
        )
        F = cs.fuel_matrix()
        assert F.shape == (5, 2)
        assert F[0].tolist() == [-2.0, 0.0]  # u1 flying t1
        assert F[2].tolist() == [0.0, -2.0]  # u2 flying t1
        assert F[4].tolist() == [0.0, 0.0]


class TestSolve:
    def test_rescue_min_makespan_matches_oracle(self, rescue):
        raw = json.loads((DATA / "rescue_tasking.json").read_text())
        colors = {"u1": "uh60", "u2": "uh60"}
        starts = {"u1": "a", "u2": "b"}
        goal = {("d", "uh60"): 2}
        expect = oracle_min_makespan(raw, colors, starts, goal, horizon=4)
        assert expect == 4  # frozen: worked by hand as well

        cs = compile_timed(rescue, pair_fleet(), 4, goal, "min_makespan")
        sol = solve(cs)
        assert isinstance(sol, Solution)
        assert sol.objective_value == 4
        assert [(t, b.name) for t, b in sol.schedule] == [(0, "t1"), (1, "t2"), (2, "t4")]

    def test_longer_horizon_same_optimum(self, rescue):
        raw = json.loads((DATA / "rescue_tasking.json").read_text())
        goal = {("d", "uh60"): 2}
        expect = oracle_min_makespan(
            raw, {"u1": "uh60", "u2": "uh60"}, {"u1": "a", "u2": "b"}, goal, horizon=6
        )
        cs = compile_timed(rescue, pair_fleet(), 6, goal, "min_makespan")
        sol = solve(cs)
        assert sol.objective_value == expect == 4

    def test_markings_trace_the_timed_convention(self, rescue):
        goal = {("d", "uh60"): 2}
        cs = compile_timed(rescue, pair_fleet(), 4, goal, "min_makespan")
        sol = solve(cs)
        rows = [tv.as_dict() for tv in sol.markings]
        assert rows[0] == {"u1": "a", "u2": "b"}
        assert rows[1] == {"u1": None, "u2": "b"}  # u1 mid-flight on t1
        assert rows[2] == {"u1": "c", "u2": "c"}
        assert rows[3] == {"u1": None, "u2": None}  # both mid-flight on t4
        assert rows[4] == {"u1": "d", "u2": "d"}

    def test_goal_without_matching_color_is_infeasible(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), 4, {("d", "hc130"): 1})
        result = solve(cs)
        assert isinstance(result, Infeasible)
        assert result.deepest_step == 4
        assert any("hc130@d" in c for c in result.conflicts)

    def test_node_cap_yields_undecided(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), 4, {("d", "uh60"): 2})
        result = solve(cs, node_cap=3)
        assert isinstance(result, Undecided)
        assert result.nodes_explored == 3

    def test_solve_is_deterministic(self, rescue):
        goal = {("d", "uh60"): 2}
        cs = compile_timed(rescue, pair_fleet(), 5, goal, "min_makespan")
        a = solve(cs)
        b = solve(cs)
        assert a.schedule == b.schedule
        assert a.markings == b.markings

    def test_solve_all_enumerates_unique_solutions(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), 3)
        sols = solve_all(cs, limit=50)
        keys = [tuple((t, b.name, b.agents) for t, b in s.schedule) for s in sols]
        assert len(keys) == len(set(keys))
        assert () in keys  # waiting out the horizon is a solution when no goal
        assert solve_all(cs, limit=50) is not sols
        assert [s.schedule for s in solve_all(cs, limit=50)] == [s.schedule for s in sols]


class TestFuel:
    def fueled(self, rescue, **agent_fuel):
        agent = Agent("u1", "uh60", "a", **agent_fuel)
        return agent

    def test_cost_and_waiting_burn_trace(self, rescue):
        u1 = Agent("u1", "uh60", "a", fuel_init=5, fuel_max=5, fuel_min=1)
        cs = compile_timed(rescue, (u1,), 4, {("c", "uh60"): 1}, "min_makespan")
        cs = add_fuel_semantics(
            cs,
            FuelSpec(
                burn_rates={("uh60", "c"): 1.0},
                task_costs={"t1": {"uh60": 2.0}},
            ),
        )
        sol = solve(cs)
        assert isinstance(sol, Solution)
        assert [(t, b.name) for t, b in sol.schedule] == [(0, "t1")]
        assert [dict(row)["u1"] for row in sol.fuel_trace] == [5, 3, 3, 2, 1]

    def test_literal_update_variant_pins_to_capacity(self, rescue):
        u1 = Agent("u1", "uh60", "a", fuel_init=5, fuel_max=5, fuel_min=1)
        cs = compile_timed(rescue, (u1,), 4, {("c", "uh60"): 1}, "min_makespan")
        cs = add_fuel_semantics(
            cs,
            FuelSpec(
                burn_rates={("uh60", "c"): 1.0},
                task_costs={"t1": {"uh60": 2.0}},
                literal_update=True,
            ),
        )
        sol = solve(cs)
        assert [dict(row)["u1"] for row in sol.fuel_trace] == [5, 5, 5, 5, 5]

    def test_refuel_resets_to_capacity_and_is_clamped(self, rescue):
        u1 = Agent("u1", "uh60", "a", fuel_init=5, fuel_max=5, fuel_min=2)
        h1 = Agent("h1", "hc130", "c")
        cs = compile_timed(rescue, (u1, h1), 4, {("c", "uh60"): 1})
        cs = add_fuel_semantics(
            cs,
            FuelSpec(
                burn_rates={("uh60", "a"): 1.0, ("uh60", "c"): 1.0},
                task_costs={"t1": {"uh60": 2.0}},
                refuel={"t3": ("uh60",)},
            ),
        )
        sol = solve(cs)
        assert isinstance(sol, Solution)
        assert [(t, b.name) for t, b in sol.schedule] == [(0, "t1"), (2, "t3")]
        assert [dict(row)["u1"] for row in sol.fuel_trace] == [5, 2, 2, 5, 4]
        assert [dict(row)["h1"] for row in sol.fuel_trace] == [0, 0, 0, 0, 0]

    def test_reserve_violation_is_infeasible_and_named(self, rescue):
        u1 = Agent("u1", "uh60", "a", fuel_init=2, fuel_max=5, fuel_min=1)
        cs = compile_timed(rescue, (u1,), 3, {("c", "uh60"): 1})
        cs = add_fuel_semantics(
            cs,
            FuelSpec(burn_rates={("uh60", "a"): 1.0, ("uh60", "c"): 1.0}),
        )
        result = solve(cs)
        assert isinstance(result, Infeasible)
        assert result.deepest_step == 3
        assert any("fuel of u1 below reserve" in c for c in result.conflicts)

    def test_negative_rates_rejected(self):
        with pytest.raises(PlannerError):
            FuelSpec(burn_rates={("uh60", "a"): -1.0})


class TestRisk:
    def test_max_survival_prefers_late_departure(self):
        from operadic.template import TaskingTemplate, TokenFlow, Transition

        template = TaskingTemplate(
            ("uh60",),
            ("a", "b"),
            (
                Transition(
                    "mv",
                    (TokenFlow("uh60", "a", 1),),
                    (TokenFlow("uh60", "b", 1),),
                    duration=1,
                ),
            ),
        )
        u1 = Agent("u1", "uh60", "a")
        cs = compile_timed(template, (u1,), 2, {("b", "uh60"): 1}, "max_survival")
        cs = add_risk_semantics(
            cs,
            RiskSpec(
                place_factors={("uh60", "a"): 0.9, ("uh60", "b"): 0.8},
                transition_factors={"mv": 0.95},
            ),
        )
        sol = solve(cs)
        assert [(t, b.name) for t, b in sol.schedule] == [(1, "mv")]
        assert sol.objective_value == pytest.approx(math.log(0.9 * 0.9 * 0.95))

    def test_factors_must_be_probabilities(self):
        with pytest.raises(PlannerError):
            RiskSpec(place_factors={("uh60", "a"): 1.5})
        with pytest.raises(PlannerError):
            RiskSpec(place_factors={("uh60", "a"): 0.0})


class TestLevels:
    def test_project_rescue_solution_down_both_levels(self, rescue):
        goal = {("d", "uh60"): 2}
        cs = compile_timed(rescue, pair_fleet(), 4, goal, "min_makespan")
        timed = solve(cs)

        plan = project(timed, Level.PLAN)
        assert plan.level is Level.PLAN
        assert plan.steps == 3  # three batches: t1, t2, t4
        assert [(j, b.name) for j, b in plan.schedule] == [(0, "t1"), (1, "t2"), (2, "t4")]

        counts = project(plan, Level.COUNTS)
        assert isinstance(counts, CountsSolution)
        assert counts.fleet == (("uh60", 2),)
        assert counts.schedule == ((0, "t1", 1), (1, "t2", 1), (2, "t4", 1))
        assert counts.markings[0] == ((("uh60", "a"), 1), (("uh60", "b"), 1))
        assert counts.markings[-1] == ((("uh60", "d"), 2),)

    def test_project_rejects_refinement_direction(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), 4, {("d", "uh60"): 2}, "min_makespan")
        timed = solve(cs)
        with pytest.raises(PlannerError):
            project(timed, Level.TIMED)

    def test_lift_contains_the_projected_original(self, rescue):
        goal = {("d", "uh60"): 2}
        cs = compile_timed(rescue, pair_fleet(), 4, goal, "min_makespan")
        timed = solve(cs)
        plan = project(timed, Level.PLAN)
        lifted = lift(plan, Level.TIMED, horizon=4)
        assert not lifted.truncated
        assert timed in lifted

        counts = project(plan, Level.COUNTS)
        plans = lift(counts, Level.PLAN, agents=pair_fleet())
        assert not plans.truncated
        assert plan in plans

    def test_lift_counts_to_timed_chains(self, rescue):
        goal = {("d", "uh60"): 2}
        cs = compile_timed(rescue, pair_fleet(), 4, goal, "min_makespan")
        timed = solve(cs)
        counts = project(project(timed, Level.PLAN), Level.COUNTS)
        lifted = lift(counts, Level.TIMED, agents=pair_fleet(), horizon=4)
        assert timed in lifted

    def test_lift_cap_reports_truncation(self, rescue):
        cs = compile_timed(rescue, pair_fleet(), 6, {("d", "uh60"): 2}, "min_makespan")
        plan = project(solve(cs), Level.PLAN)
        lifted = lift(plan, Level.TIMED, horizon=6, cap=1)
        assert lifted.truncated
        assert len(lifted.solutions) == 1

    def test_micro_net_round_trips(self):
        rng = random.Random(20260815)
        exercised = 0
        for _ in range(40):
            template, agents = random_micro_net(rng)
            cs = compile_timed(template, agents, 3)
            sols = solve_all(cs, limit=5)
            for x in sols:
                plan = project(x, Level.PLAN)
                counts = project(plan, Level.COUNTS)
                lifted = lift(plan, Level.TIMED, horizon=cs.steps, cap=400)
                if not lifted.truncated:
                    assert x in lifted
                plans = lift(counts, Level.PLAN, agents=agents, cap=400)
                if not plans.truncated:
                    assert plan in plans
                exercised += 1
        assert exercised >= 100


class TestVectors:
    def test_type_vector_counts_drop_busy_agents(self):
        tv = TypeVector.of({"u1": "a", "u2": None})
        assert tv.counts({"u1": "uh60", "u2": "uh60"}) == {("uh60", "a"): 1}
        assert tv.place_of("u2") is None
        with pytest.raises(PlannerError):
            tv.place_of("zz")

    def test_task_vector_must_be_sorted_unique(self):
        TaskVector((0, 2, 5))
        with pytest.raises(PlannerError):
            TaskVector((2, 0))
        with pytest.raises(PlannerError):
            TaskVector((1, 1))


class TestScenario:
    def test_parse_compile_solve(self, rescue):
        scenario = parse_plan_scenario(
            {
                "version": 1,
                "agents": [
                    {"id": "u1", "color": "uh60", "start": "a"},
                    {"id": "u2", "color": "uh60", "start": "b"},
                ],
                "horizon": 4,
                "objective": "min_makespan",
                "goal": {"d": {"uh60": 2}},
            }
        )
        cs = compile_scenario(rescue, scenario)
        sol = solve(cs)
        assert sol.objective_value == 4

    def test_unknown_keys_rejected(self):
        with pytest.raises(PlannerError):
            parse_plan_scenario({"version": 1, "horizon": 3, "agents": [], "extra": 1})

    def test_version_required(self):
        with pytest.raises(PlannerError):
            parse_plan_scenario({"horizon": 3, "agents": []})

    def test_fuel_and_risk_blocks(self, rescue):
        scenario = parse_plan_scenario(
            {
                "version": 1,
                "agents": [
                    {
                        "id": "u1",
                        "color": "uh60",
                        "start": "a",
                        "fuel_init": 5,
                        "fuel_max": 5,
                        "fuel_min": 1,
                    }
                ],
                "horizon": 4,
                "objective": "min_makespan",
                "goal": {"c": {"uh60": 1}},
                "fuel": {
                    "burn_rates": {"uh60": {"c": 1}},
                    "task_costs": {"t1": {"uh60": 2}},
                },
            }
        )
        cs = compile_scenario(rescue, scenario)
        assert cs.fuel is not None
        sol = solve(cs)
        assert [dict(row)["u1"] for row in sol.fuel_trace] == [5, 3, 3, 2, 1]
