"""Road network model: sections, signal plans, detectors, demand.

A Scenario bundles the static description of one experiment: the directed
section graph, signalized intersections with their phase plans, induction-loop
detectors and the origin-destination demand. Scenarios are immutable after
validation and can be saved to / loaded from a JSON document (schema below,
also documented in the README).

Built-in generators produce the two benchmark networks used throughout the
repo: a single intersection of two crossing roads (network A) and a 3x2
signalized grid (network B).
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field, asdict

import numpy as np


class ScenarioError(Exception):
    """Base class for scenario file problems."""


class ParseError(ScenarioError):
    """The file is not valid JSON or misses required keys."""


class ValidationError(ScenarioError):
    """The parsed scenario violates an invariant; message names it."""


@dataclass(frozen=True)
class Section:
    """Directed road segment between two nodes."""

    id: str
    length: float          # meters
    lanes: int
    max_speed: float       # km/h
    from_node: str
    to_node: str

    @property
    def max_speed_ms(self) -> float:
        return self.max_speed / 3.6


@dataclass(frozen=True)
class Phase:
    """One signal configuration of an intersection: a set of permitted
    (in-section, out-section) movements active for base_duration seconds."""

    id: str
    base_duration: float
    movements: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Intersection:
    id: str
    interphase: float      # all-red gap after every phase, seconds
    phases: tuple[Phase, ...]

    @property
    def cycle(self) -> float:
        return sum(p.base_duration for p in self.phases) + len(self.phases) * self.interphase


@dataclass(frozen=True)
class Detector:
    id: str
    section: str
    position: float        # meters from section start


@dataclass(frozen=True)
class Centroid:
    """Vehicle source/sink. Sources are sections vehicles enter at position 0,
    sinks are sections vehicles leave at the downstream end."""

    id: str
    sources: tuple[str, ...]
    sinks: tuple[str, ...]


@dataclass(frozen=True)
class DemandEntry:
    origin: str
    destination: str
    vehicles_per_hour: float


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[str, ...]
    sections: tuple[Section, ...]
    intersections: tuple[Intersection, ...]
    detectors: tuple[Detector, ...]
    centroids: tuple[Centroid, ...]
    demand: tuple[DemandEntry, ...]
    sim_step: float = 0.75
    episode_step: float = 120.0
    horizon: float = 3600.0

    def section(self, sec_id: str) -> Section:
        return self._section_map[sec_id]

    @property
    def _section_map(self) -> dict[str, Section]:
        # frozen dataclass: cache on first use via object.__setattr__
        m = self.__dict__.get("_sec_map_cache")
        if m is None:
            m = {s.id: s for s in self.sections}
            object.__setattr__(self, "_sec_map_cache", m)
        return m

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    @property
    def n_phases(self) -> int:
        return sum(len(i.phases) for i in self.intersections)

    @property
    def episode_steps_per_run(self) -> int:
        return int(round(self.horizon / self.episode_step))

    def scenario_hash(self) -> str:
        """Stable content hash, used to key the baseline cache."""
        return hashlib.sha256(scenario_to_json(self).encode()).hexdigest()[:16]


def _is_multiple(value: float, base: float, tol: float = 1e-9) -> bool:
    ratio = value / base
    return abs(ratio - round(ratio)) < tol and round(ratio) >= 1


def validate_scenario(sc: Scenario) -> Scenario:
    """Check every structural invariant; raise ValidationError naming the
    first violated one. Returns the scenario unchanged so calls chain."""
    node_set = set(sc.nodes)
    if len(node_set) != len(sc.nodes):
        raise ValidationError("duplicate node id")
    sec_ids = [s.id for s in sc.sections]
    if len(set(sec_ids)) != len(sec_ids):
        raise ValidationError("duplicate section id")
    secs = {s.id: s for s in sc.sections}

    for s in sc.sections:
        if not s.length > 0:
            raise ValidationError(f"section {s.id}: length must be > 0")
        if s.lanes < 1:
            raise ValidationError(f"section {s.id}: lanes must be >= 1")
        if not s.max_speed > 0:
            raise ValidationError(f"section {s.id}: max_speed must be > 0")
        if s.from_node not in node_set or s.to_node not in node_set:
            raise ValidationError(f"section {s.id}: endpoint not a known node")

    for inter in sc.intersections:
        if len(inter.phases) < 1:
            raise ValidationError(f"intersection {inter.id}: needs at least one phase")
        if inter.interphase < 0:
            raise ValidationError(f"intersection {inter.id}: interphase must be >= 0")
        for ph in inter.phases:
            if not ph.base_duration > 0:
                raise ValidationError(f"phase {ph.id}: base_duration must be > 0")
            for sin, sout in ph.movements:
                if sin not in secs or sout not in secs:
                    raise ValidationError(f"phase {ph.id}: movement references unknown section")
                if secs[sin].to_node != secs[sout].from_node:
                    raise ValidationError(
                        f"phase {ph.id}: movement ({sin}, {sout}) does not meet at one node")

    for d in sc.detectors:
        if d.section not in secs:
            raise ValidationError(f"detector {d.id}: unknown section {d.section}")
        if not (0 <= d.position <= secs[d.section].length):
            raise ValidationError(f"detector {d.id}: position outside its section")
    det_ids = [d.id for d in sc.detectors]
    if len(set(det_ids)) != len(det_ids):
        raise ValidationError("duplicate detector id")

    cents = {c.id: c for c in sc.centroids}
    if len(cents) != len(sc.centroids):
        raise ValidationError("duplicate centroid id")
    for c in sc.centroids:
        for sid in c.sources + c.sinks:
            if sid not in secs:
                raise ValidationError(f"centroid {c.id}: unknown section {sid}")

    for e in sc.demand:
        if e.origin not in cents or e.destination not in cents:
            raise ValidationError(f"demand ({e.origin}->{e.destination}): unknown centroid")
        if e.vehicles_per_hour < 0:
            raise ValidationError(
                f"demand ({e.origin}->{e.destination}): vehicles_per_hour must be >= 0")

    if not sc.sim_step > 0:
        raise ValidationError("sim_step must be > 0")
    if not _is_multiple(sc.episode_step, sc.sim_step):
        raise ValidationError("episode_step must be an integer multiple of sim_step")
    if not _is_multiple(sc.horizon, sc.episode_step):
        raise ValidationError("horizon must be an integer multiple of episode_step")

    for e in sc.demand:
        if e.vehicles_per_hour > 0 and find_route(sc, e.origin, e.destination) is None:
            raise ValidationError(
                f"demand ({e.origin}->{e.destination}): no signal-permitted route exists")
    return sc


def allowed_section_pairs(sc: Scenario) -> set[tuple[str, str]]:
    """All (in-section, out-section) transitions a vehicle may take. At a
    signalized node only declared phase movements qualify; elsewhere any
    pair of sections meeting at the node does."""
    signalized: dict[str, set[tuple[str, str]]] = {}
    secs = sc._section_map
    for inter in sc.intersections:
        for ph in inter.phases:
            for mv in ph.movements:
                node = secs[mv[0]].to_node
                signalized.setdefault(node, set()).add(tuple(mv))
    pairs: set[tuple[str, str]] = set()
    by_from: dict[str, list[Section]] = {}
    for s in sc.sections:
        by_from.setdefault(s.from_node, []).append(s)
    for s in sc.sections:
        node = s.to_node
        for nxt in by_from.get(node, []):
            if nxt.id == s.id:
                continue
            if node in signalized:
                if (s.id, nxt.id) in signalized[node]:
                    pairs.add((s.id, nxt.id))
            else:
                pairs.add((s.id, nxt.id))
    return pairs


def find_route(sc: Scenario, origin: str, destination: str) -> list[str] | None:
    """Shortest section sequence from an origin centroid source section to a
    destination centroid sink section, honoring signal-permitted movements.
    Returns None when no route exists."""
    import networkx as nx

    cents = {c.id: c for c in sc.centroids}
    secs = sc._section_map
    g = nx.DiGraph()
    for s in sc.sections:
        g.add_node(s.id)
    for a, b in sorted(allowed_section_pairs(sc)):
        g.add_edge(a, b, weight=secs[b].length)
    best: list[str] | None = None
    best_cost = float("inf")
    for src in cents[origin].sources:
        for dst in cents[destination].sinks:
            if src == dst:
                continue
            try:
                path = nx.shortest_path(g, src, dst, weight="weight")
            except nx.NetworkXNoPath:
                continue
            cost = sum(secs[p].length for p in path)
            if cost < best_cost:
                best, best_cost = path, cost
    return best


# ---------------------------------------------------------------------------
# JSON serialization

def scenario_to_json(sc: Scenario) -> str:
    doc = {
        "name": sc.name,
        "sim_step": sc.sim_step,
        "episode_step": sc.episode_step,
        "horizon": sc.horizon,
        "nodes": list(sc.nodes),
        "sections": [asdict(s) | {"from": s.from_node, "to": s.to_node} for s in sc.sections],
        "intersections": [
            {
                "id": i.id,
                "interphase": i.interphase,
                "phases": [
                    {"id": p.id, "duration": p.base_duration,
                     "movements": [list(m) for m in p.movements]}
                    for p in i.phases
                ],
            }
            for i in sc.intersections
        ],
        "detectors": [asdict(d) for d in sc.detectors],
        "centroids": [
            {"id": c.id, "sources": list(c.sources), "sinks": list(c.sinks)}
            for c in sc.centroids
        ],
        "demand": [
            {"origin": e.origin, "destination": e.destination,
             "vehicles_per_hour": e.vehicles_per_hour}
            for e in sc.demand
        ],
    }
    for s in doc["sections"]:
        s.pop("from_node")
        s.pop("to_node")
    return json.dumps(doc, indent=2, sort_keys=True)


def scenario_from_json(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    try:
        sc = Scenario(
            name=doc.get("name", "unnamed"),
            sim_step=float(doc.get("sim_step", 0.75)),
            episode_step=float(doc.get("episode_step", 120.0)),
            horizon=float(doc.get("horizon", 3600.0)),
            nodes=tuple(doc["nodes"]),
            sections=tuple(
                Section(id=s["id"], length=float(s["length"]), lanes=int(s["lanes"]),
                        max_speed=float(s["max_speed"]), from_node=s["from"], to_node=s["to"])
                for s in doc["sections"]
            ),
            intersections=tuple(
                Intersection(
                    id=i["id"], interphase=float(i["interphase"]),
                    phases=tuple(
                        Phase(id=p["id"], base_duration=float(p["duration"]),
                              movements=tuple((m[0], m[1]) for m in p["movements"]))
                        for p in i["phases"]
                    ),
                )
                for i in doc["intersections"]
            ),
            detectors=tuple(
                Detector(id=d["id"], section=d["section"], position=float(d["position"]))
                for d in doc["detectors"]
            ),
            centroids=tuple(
                Centroid(id=c["id"], sources=tuple(c["sources"]), sinks=tuple(c["sinks"]))
                for c in doc["centroids"]
            ),
            demand=tuple(
                DemandEntry(origin=e["origin"], destination=e["destination"],
                            vehicles_per_hour=float(e["vehicles_per_hour"]))
                for e in doc["demand"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or malformed field: {exc}") from None
    return sc


def load_scenario(path: str) -> Scenario:
    """Load, parse and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return validate_scenario(scenario_from_json(text))


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario_to_json(sc))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Built-in benchmark networks

ARM_LENGTH = 500.0          # meters, network A approach/exit arms
DETECTOR_SETBACK = 50.0     # meters up/downstream of the stop line
URBAN_SPEED = 50.0          # km/h


def generate_network_a() -> Scenario:
    """Single intersection of two crossing roads.

    One lane per direction; going straight or turning right is allowed, left
    turns are not. Horizontal traffic gets the deliberately short phase
    (15 s) versus 70 s for vertical traffic, 5 s all-red between phases, so
    the east-west road queues up under the fixed plan. Eight detectors, one
    upstream and one downstream of the stop line on every arm. Demand is a
    constant 150 vehicles/hour for every connected centroid pair.
    """
    arms = ["w", "e", "n", "s"]
    nodes = tuple(f"n_{a}" for a in arms) + ("n_c",)
    sections = []
    for a in arms:
        sections.append(Section(f"in_{a}", ARM_LENGTH, 1, URBAN_SPEED, f"n_{a}", "n_c"))
        sections.append(Section(f"out_{a}", ARM_LENGTH, 1, URBAN_SPEED, "n_c", f"n_{a}"))
    # right-hand traffic: right turn from west goes south, from east north, etc.
    horizontal = (("in_w", "out_e"), ("in_w", "out_s"), ("in_e", "out_w"), ("in_e", "out_n"))
    vertical = (("in_n", "out_s"), ("in_n", "out_w"), ("in_s", "out_n"), ("in_s", "out_e"))
    inter = Intersection(
        id="tl_c",
        interphase=5.0,
        phases=(Phase("p1", 15.0, horizontal), Phase("p2", 70.0, vertical)),
    )
    detectors = []
    for a in arms:
        detectors.append(Detector(f"det_in_{a}", f"in_{a}", ARM_LENGTH - DETECTOR_SETBACK))
        detectors.append(Detector(f"det_out_{a}", f"out_{a}", DETECTOR_SETBACK))
    centroids = tuple(
        Centroid(f"c_{a}", sources=(f"in_{a}",), sinks=(f"out_{a}",)) for a in arms
    )
    od_pairs = [("w", "e"), ("w", "s"), ("e", "w"), ("e", "n"),
                ("n", "s"), ("n", "w"), ("s", "n"), ("s", "e")]
    demand = tuple(DemandEntry(f"c_{o}", f"c_{d}", 150.0) for o, d in od_pairs)
    sc = Scenario(
        name="network-a",
        nodes=nodes,
        sections=tuple(sections),
        intersections=(inter,),
        detectors=tuple(detectors),
        centroids=centroids,
        demand=demand,
    )
    return validate_scenario(sc)


NETWORK_B_SEED = 20170405   # demand randomization seed baked into the generator
GRID_COLS = 3
GRID_ROWS = 2
B_INTERIOR_LEN = 300.0
B_BOUNDARY_LEN = 500.0
# phase count per junction, in (col, row) row-major order
B_PHASE_COUNTS = {(0, 0): 5, (1, 0): 5, (2, 0): 4, (0, 1): 5, (1, 1): 5, (2, 1): 6}
B_PHASE_DURATION = 20.0
B_INTERPHASE = 5.0


def generate_network_b(scenario_seed: int = NETWORK_B_SEED) -> Scenario:
    """3x2 signalized grid: three vertical and two horizontal roads.

    All turns are allowed. Four junctions run 5 phases, one runs 4 and one
    runs 6 (30 phases overall): each approach gets its own all-movements
    phase, and the 5/6-phase junctions add vertical (and horizontal)
    through-phases. 17 detectors cover every inbound boundary section plus
    seven interior ones. Demand is drawn once from `scenario_seed`, heavy
    enough to congest parts of the grid, and is reproduced exactly on every
    call with the same seed.
    """
    nodes: list[str] = []
    sections: list[Section] = []
    for x in range(GRID_COLS):
        for y in range(GRID_ROWS):
            nodes.append(f"n_{x}_{y}")
    for x in range(GRID_COLS):
        nodes.extend([f"n_{x}_b", f"n_{x}_t"])
    for y in range(GRID_ROWS):
        nodes.extend([f"n_l_{y}", f"n_r_{y}"])

    def add(sec_id: str, frm: str, to: str, length: float) -> None:
        sections.append(Section(sec_id, length, 1, URBAN_SPEED, frm, to))

    # vertical roads: northbound (vn) and southbound (vs), bottom segment index 0
    for x in range(GRID_COLS):
        vcol = [f"n_{x}_b"] + [f"n_{x}_{y}" for y in range(GRID_ROWS)] + [f"n_{x}_t"]
        for k in range(len(vcol) - 1):
            length = B_BOUNDARY_LEN if k in (0, len(vcol) - 2) else B_INTERIOR_LEN
            add(f"vn_{x}_{k}", vcol[k], vcol[k + 1], length)
        rcol = list(reversed(vcol))
        for k in range(len(rcol) - 1):
            length = B_BOUNDARY_LEN if k in (0, len(rcol) - 2) else B_INTERIOR_LEN
            add(f"vs_{x}_{k}", rcol[k], rcol[k + 1], length)
    # horizontal roads: eastbound (he) and westbound (hw), left segment index 0
    for y in range(GRID_ROWS):
        hrow = [f"n_l_{y}"] + [f"n_{x}_{y}" for x in range(GRID_COLS)] + [f"n_r_{y}"]
        for k in range(len(hrow) - 1):
            length = B_BOUNDARY_LEN if k in (0, len(hrow) - 2) else B_INTERIOR_LEN
            add(f"he_{y}_{k}", hrow[k], hrow[k + 1], length)
        rrow = list(reversed(hrow))
        for k in range(len(rrow) - 1):
            length = B_BOUNDARY_LEN if k in (0, len(rrow) - 2) else B_INTERIOR_LEN
            add(f"hw_{y}_{k}", rrow[k], rrow[k + 1], length)

    by_to: dict[str, list[Section]] = {}
    by_from: dict[str, list[Section]] = {}
    for s in sections:
        by_to.setdefault(s.to_node, []).append(s)
        by_from.setdefault(s.from_node, []).append(s)

    def approach_movements(node: str, sin: Section) -> tuple[tuple[str, str], ...]:
        outs = [s for s in by_from[node]
                if not (s.to_node == sin.from_node and sin.to_node == s.from_node)]
        return tuple((sin.id, s.id) for s in sorted(outs, key=lambda s: s.id))

    def through_movements(node: str, orientation: str) -> tuple[tuple[str, str], ...]:
        prefixes = ("vn_", "vs_") if orientation == "vertical" else ("he_", "hw_")
        mvs = []
        for sin in by_to[node]:
            if not sin.id.startswith(prefixes):
                continue
            road = sin.id[:4]  # e.g. "vn_0"
            for sout in by_from[node]:
                if sout.id.startswith(road):
                    mvs.append((sin.id, sout.id))
        return tuple(sorted(mvs))

    intersections: list[Intersection] = []
    for x in range(GRID_COLS):
        for y in range(GRID_ROWS):
            node = f"n_{x}_{y}"
            n_ph = B_PHASE_COUNTS[(x, y)]
            approaches = sorted(by_to[node], key=lambda s: s.id)
            phases: list[Phase] = []
            for k, sin in enumerate(approaches):
                phases.append(Phase(f"tl_{x}_{y}_p{k}", B_PHASE_DURATION,
                                    approach_movements(node, sin)))
            if n_ph >= 5:
                phases.append(Phase(f"tl_{x}_{y}_p{len(phases)}", B_PHASE_DURATION,
                                    through_movements(node, "vertical")))
            if n_ph >= 6:
                phases.append(Phase(f"tl_{x}_{y}_p{len(phases)}", B_PHASE_DURATION,
                                    through_movements(node, "horizontal")))
            phases = phases[:n_ph]
            intersections.append(Intersection(f"tl_{x}_{y}", B_INTERPHASE, tuple(phases)))

    detectors = []
    for x in range(GRID_COLS):
        detectors.append(Detector(f"det_vn_{x}_0", f"vn_{x}_0", B_BOUNDARY_LEN - DETECTOR_SETBACK))
        detectors.append(Detector(f"det_vs_{x}_0", f"vs_{x}_0", B_BOUNDARY_LEN - DETECTOR_SETBACK))
    for y in range(GRID_ROWS):
        detectors.append(Detector(f"det_he_{y}_0", f"he_{y}_0", B_BOUNDARY_LEN - DETECTOR_SETBACK))
        detectors.append(Detector(f"det_hw_{y}_0", f"hw_{y}_0", B_BOUNDARY_LEN - DETECTOR_SETBACK))
    for x in range(GRID_COLS):
        detectors.append(Detector(f"det_vn_{x}_1", f"vn_{x}_1", B_INTERIOR_LEN - DETECTOR_SETBACK))
        detectors.append(Detector(f"det_vs_{x}_1", f"vs_{x}_1", B_INTERIOR_LEN - DETECTOR_SETBACK))
    detectors.append(Detector("det_he_0_1", "he_0_1", B_INTERIOR_LEN - DETECTOR_SETBACK))

    centroids = []
    for x in range(GRID_COLS):
        centroids.append(Centroid(f"c_b_{x}", (f"vn_{x}_0",), (f"vs_{x}_{GRID_ROWS}",)))
        centroids.append(Centroid(f"c_t_{x}", (f"vs_{x}_0",), (f"vn_{x}_{GRID_ROWS}",)))
    for y in range(GRID_ROWS):
        centroids.append(Centroid(f"c_l_{y}", (f"he_{y}_0",), (f"hw_{y}_{GRID_COLS}",)))
        centroids.append(Centroid(f"c_r_{y}", (f"hw_{y}_0",), (f"he_{y}_{GRID_COLS}",)))

    rng = np.random.default_rng(scenario_seed)
    cent_ids = [c.id for c in centroids]
    demand: list[DemandEntry] = []
    for o in cent_ids:
        for d in cent_ids:
            if o == d:
                continue
            if rng.random() < 0.45:
                rate = float(np.round(rng.uniform(15.0, 55.0), 1))
                demand.append(DemandEntry(o, d, rate))
    # overload a handful of pairs so some sections saturate
    heavy = rng.choice(len(demand), size=6, replace=False)
    for idx in sorted(int(i) for i in heavy):
        e = demand[idx]
        demand[idx] = DemandEntry(e.origin, e.destination,
                                  float(np.round(e.vehicles_per_hour * 2.5, 1)))

    sc = Scenario(
        name="network-b",
        nodes=tuple(nodes),
        sections=tuple(sections),
        intersections=tuple(intersections),
        detectors=tuple(detectors),
        centroids=tuple(centroids),
        demand=tuple(demand),
    )
    return validate_scenario(sc)


BUILTIN_SCENARIOS = {
    "network-a": generate_network_a,
    "network-b": generate_network_b,
}


def resolve_scenario(ref: str) -> Scenario:
    """Accept a builtin scenario name or a file path."""
    if ref in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[ref]()
    return load_scenario(ref)
