"""Shared helpers for the test suite."""

import random

from operadic.planner import Agent
from operadic.template import TaskingTemplate, TokenFlow, Transition


def random_micro_net(rng: random.Random) -> tuple[TaskingTemplate, tuple[Agent, ...]]:
    """A tiny random tasking net plus a two-agent fleet.

    Small on purpose: 2-3 places, 1-3 single-color transitions moving one or
    two tokens, durations 1-2.  Exhaustive search stays trivial, which keeps
    the level-change round-trip checks honest.
    """
    places = tuple(f"p{i}" for i in range(rng.randint(2, 3)))
    colors = ("red", "blue")
    live = list(colors[: rng.randint(1, 2)])
    transitions = []
    for i in range(rng.randint(1, 3)):
        color = rng.choice(live)
        n = rng.randint(1, 2)
        src = rng.choice(places)
        dst = rng.choice(places)
        transitions.append(
            Transition(
                name=f"tr{i}",
                inputs=(TokenFlow(color, src, n),),
                outputs=(TokenFlow(color, dst, n),),
                duration=rng.randint(1, 2),
            )
        )
    template = TaskingTemplate(colors, places, tuple(transitions))
    agents = tuple(
        Agent(f"g{i}", rng.choice(live), rng.choice(places)) for i in range(2)
    )
    return template, agents
