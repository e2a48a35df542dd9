"""Random scenario generator for stress and property runs."""

from __future__ import annotations

import random

from .scenario import FaultKind, Scenario

UTILITY_NAMES = ("electricity", "water", "data")


def random_scenario_dict(rng: random.Random, *, n_nodes: int | None = None, end_tick: int = 30,
                         faults: bool = True, name: str = "random") -> dict:
    """A valid scenario document with random producers, buyers and behaviour.

    A share of suppliers under-deliver (``delivery_ratio`` < 1) or never
    deliver, and some buyers' meters over-read, so the partial, revoke and
    dispute paths all get exercised.
    """
    n = n_nodes or rng.randint(3, 6)
    nodes = []
    for i in range(n):
        name_i = f"n{i}"
        node: dict = {"name": name_i}
        if rng.random() < 0.7:
            meters, offers = [], {}
            for u in rng.sample(UTILITY_NAMES, rng.randint(1, 2)):
                pulses = {str(t): rng.randint(5, 60) for t in rng.sample(range(1, end_tick // 2), rng.randint(1, 3))}
                meters.append({"id": f"{name_i}/{u}", "utility": u, "direction": "Produced",
                               "driver": {"type": "pulses", "pulses": pulses}})
                if rng.random() < 0.5:
                    offers[u] = {"policy": "dynamic", "base_price": rng.choice([0.5, 1.0, 1.5, 2.0]),
                                 "target_stock": rng.choice([20, 40, 80]),
                                 "params": {"k": rng.choice([0.25, 0.5, 1.0]), "low": 0.5, "high": 2.0}}
                else:
                    offers[u] = {"policy": "flat", "base_price": rng.choice([0.5, 1.0, 1.25, 2.0, 3.0])}
                offers[u]["validity"] = rng.randint(6, 20)
            node["meters"], node["offers"] = meters, offers
            node["delivery_ratio"] = rng.choice([1.0, 1.0, 1.0, 1.0, 0.5, 0.0])
            if rng.random() < 0.2:
                node["acceptance_policy"] = "never"
        demand = []
        for _ in range(rng.randint(0, 4)):
            demand.append({"tick": rng.randint(1, end_tick - 8), "utility": rng.choice(UTILITY_NAMES),
                           "quantity": rng.randint(1, 40)})
        node["demand"] = demand
        node["meter_bias"] = rng.choice([1.0, 1.0, 1.0, 1.0, 1.02, 1.3, 0.6])
        node["rating_policy"] = rng.choice(["default", "binary"])
        node["selection_policy"] = rng.choice(["greedy", "greedy", "reputation"])
        nodes.append(node)
    mints = [{"tick": rng.randint(0, 3), "to": f"n{i}", "amount": rng.randint(0, 200) or 1} for i in range(n)]
    payments = []
    for _ in range(rng.randint(0, 3)):
        a, b = rng.sample(range(n), 2)
        payments.append({"tick": rng.randint(1, end_tick), "from": f"n{a}", "to": f"n{b}",
                         "amount": rng.randint(1, 50)})
    doc = {
        "name": name, "seed": str(rng.getrandbits(32)), "end_tick": end_tick,
        "authorities": [f"authority-{i}" for i in range(rng.randint(1, 3))],
        "contract_window": rng.randint(6, 12), "nodes": nodes, "mints": mints, "payments": payments,
    }
    if faults and rng.random() < 0.5:
        doc["faults"] = [{"kind": rng.choice(list(FaultKind)).value, "at": rng.randint(0, end_tick)}
                         for _ in range(rng.randint(1, 3))]
    return doc


def random_scenario(rng: random.Random, **kw) -> Scenario:
    return Scenario.from_dict(random_scenario_dict(rng, **kw))
