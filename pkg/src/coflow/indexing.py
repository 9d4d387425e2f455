"""Derived index sets over a Scenario.

Array layouts used by the physics oracle, the program builders, and solution
serialization all follow declaration order in the scenario document; this
module is the single place that order is computed.
"""
from __future__ import annotations

from .model import Scenario, WaterPipe, HeatPipe


class ScenarioIndex:
    def __init__(self, s: Scenario):
        self.scenario = s
        T = s.horizon.slot_count
        self.slots = range(T)

        # --- power ---------------------------------------------------------
        self.power_nodes: list[str] = s.power.node_ids()
        self.pnode_pos = {n: i for i, n in enumerate(self.power_nodes)}
        self.slack_pos = self.pnode_pos[s.power.slack_node]
        self.lines = list(s.power.lines)
        self.lines_in: dict[str, list[int]] = {n: [] for n in self.power_nodes}
        self.lines_out: dict[str, list[int]] = {n: [] for n in self.power_nodes}
        for e, ln in enumerate(self.lines):
            self.lines_out[ln.sender].append(e)
            self.lines_in[ln.receiver].append(e)
        self.ders = list(s.power.ders)

        # --- water ---------------------------------------------------------
        self.water_nodes: list[str] = s.water.node_ids()
        self.wnode_pos = {n: i for i, n in enumerate(self.water_nodes)}
        self.water_pipes: list[WaterPipe] = list(s.water.pipes)
        self.wpipe_pos = {p.key: i for i, p in enumerate(self.water_pipes)}
        self.wpipes_in: dict[str, list[int]] = {n: [] for n in self.water_nodes}
        self.wpipes_out: dict[str, list[int]] = {n: [] for n in self.water_nodes}
        for e, p in enumerate(self.water_pipes):
            self.wpipes_out[p.sender].append(e)
            self.wpipes_in[p.receiver].append(e)
        self.pump_pipes: list[int] = [i for i, p in enumerate(self.water_pipes)
                                      if p.kind == "pump"]
        self.plain_pipes: list[int] = [i for i, p in enumerate(self.water_pipes)
                                       if p.kind == "plain"]
        self.valve_pipes: list[int] = [i for i, p in enumerate(self.water_pipes)
                                       if p.kind == "valve"]
        self.reservoir_ids = [r.id for r in s.water.reservoirs]
        self.junction_ids = [j.id for j in s.water.junctions]

        # --- heat ----------------------------------------------------------
        self.heat_nodes: list[str] = s.heat.node_ids()
        self.hnode_pos = {n: i for i, n in enumerate(self.heat_nodes)}
        self.supply_pipes: list[HeatPipe] = s.heat.supply_pipes()
        self.return_pipes: list[HeatPipe] = s.heat.return_pipes()
        self.spipe_pos = {p.key: i for i, p in enumerate(self.supply_pipes)}
        self.rpipe_pos = {p.key: i for i, p in enumerate(self.return_pipes)}
        self.spipes_in: dict[str, list[int]] = {n: [] for n in self.heat_nodes}
        self.spipes_out: dict[str, list[int]] = {n: [] for n in self.heat_nodes}
        for e, p in enumerate(self.supply_pipes):
            self.spipes_out[p.sender].append(e)
            self.spipes_in[p.receiver].append(e)
        self.rpipes_in: dict[str, list[int]] = {n: [] for n in self.heat_nodes}
        self.rpipes_out: dict[str, list[int]] = {n: [] for n in self.heat_nodes}
        for e, p in enumerate(self.return_pipes):
            self.rpipes_out[p.sender].append(e)
            self.rpipes_in[p.receiver].append(e)
        self.chps = list(s.heat.chps)
        self.chp_pos = {c.node: i for i, c in enumerate(self.chps)}
        self.heat_loads = list(s.heat.loads)
        self.hload_pos = {l.node: i for i, l in enumerate(self.heat_loads)}
        self.heat_junctions = list(s.heat.junction_ids)

    @property
    def n_slots(self) -> int:
        return self.scenario.horizon.slot_count
