"""Deterministic discrete-time microscopic traffic engine.

Vehicles follow a Krauss-style safe-speed rule: accelerate toward the speed
limit but never exceed the speed from which the gap to the leader (or to a
red stop line) can still be closed with bounded braking. The model is
collision-free, exhibits queueing and spillback, and is fully deterministic
given (scenario, seed): randomness enters only through Poisson vehicle
generation and is drawn from a private generator.

The implementation keeps all vehicles in flat numpy arrays sorted by
(lane, -position), so one simulation step is a handful of vectorized
operations regardless of network size. Per-lane structure (front vehicles,
rear vehicles) is cached and rebuilt only when vehicles enter, leave or move
between sections.

Induction-loop detectors accumulate vehicle counts, crossing speeds and
occupancy per simulation step; `run_episode_step` aggregates them over the
controller's decision period into per-detector counts and speed scores
(count-weighted mean crossing speed over the section speed limit, capped
at 1; detectors nobody crossed report a free-flow score of 1 with count 0).
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .netgraph import Scenario, allowed_section_pairs, find_route

# Driver/vehicle model constants. TAU must be >= the simulation step for the
# safe-speed rule to guarantee stopping before an obstacle.
VEHICLE_LENGTH = 4.5        # m
MIN_GAP = 2.5               # m, standing bumper-to-bumper clearance
SPACE = VEHICLE_LENGTH + MIN_GAP
ACCEL = 2.0                 # m/s^2
BRAKE = 4.0                 # m/s^2, comfortable deceleration bound
TAU = 1.0                   # s, driver reaction headway
VEHICLE_VMAX = 120.0 / 3.6  # m/s, vehicle hardware cap
ENTRY_CLEARANCE = SPACE + 0.5
_BIG = 1e12
_EPS_T = 1e-7               # tolerance for phase-clock comparisons


class SimulationError(RuntimeError):
    pass


class CycleViolationError(ValueError):
    """Requested phase durations do not preserve an intersection's cycle."""


@dataclass
class EpisodeStepObservation:
    """Detector aggregates over one episode step."""

    clock: float
    counts: np.ndarray        # (nd,) vehicles crossed
    speed_scores: np.ndarray  # (nd,) in [0, 1]
    occupancy: np.ndarray     # (nd,) in [0, 1]


def aggregate_speed_score(count: float, speed_sum: float, max_speed_ms: float) -> float:
    """Count-weighted mean crossing speed over the limit, capped at 1.

    Zero-count periods report 1.0: an empty detector is read as free flow,
    and the count factor in the reward makes the convention neutral there.
    """
    if count <= 0:
        return 1.0
    return min((speed_sum / count) / max_speed_ms, 1.0)


class _SignalState:
    """Phase clock of one intersection with latched duration updates."""

    __slots__ = ("durations", "pending", "interphase", "phase", "clock", "n")

    def __init__(self, base_durations: list[float], interphase: float):
        self.durations = list(base_durations)
        self.pending: list[float] | None = None
        self.interphase = interphase
        self.phase = 0
        self.clock = 0.0
        self.n = len(base_durations)

    @property
    def in_interphase(self) -> bool:
        return self.clock >= self.durations[self.phase] - _EPS_T

    def advance(self, dt: float) -> bool:
        """Advance the clock; returns True if the signal aspect changed."""
        was_inter = self.in_interphase
        old_phase = self.phase
        self.clock += dt
        while self.clock >= self.durations[self.phase] + self.interphase - _EPS_T:
            self.clock -= self.durations[self.phase] + self.interphase
            self.phase = (self.phase + 1) % self.n
            if self.pending is not None:
                self.durations = self.pending
                self.pending = None
        return self.phase != old_phase or self.in_interphase != was_inter


class Simulation:
    """Mutable world state for one run of a scenario.

    The constructor corresponds to resetting the world: empty roads, every
    intersection at its first phase with base durations, generator seeded.
    """

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.dt = scenario.sim_step
        if TAU < self.dt - 1e-12:
            raise SimulationError("driver reaction headway must be >= sim_step")
        self.clock = 0.0
        self._build_static_tables(scenario)

        n0 = 0
        self.pos = np.empty(n0)
        self.speed = np.empty(n0)
        self.lane = np.empty(n0, dtype=np.int64)
        self.vid = np.empty(n0, dtype=np.int64)
        self.rid = np.empty(n0, dtype=np.int64)
        self.rstep = np.empty(n0, dtype=np.int64)
        self.sec = np.empty(n0, dtype=np.int64)
        self.slen = np.empty(n0)
        self.vcap = np.empty(n0)
        self.mov = np.empty(n0, dtype=np.int64)
        self.nsec = np.empty(n0, dtype=np.int64)
        self.det_cols = [
            (np.empty(n0, dtype=np.int64), np.empty(n0)) for _ in range(self._det_k)
        ]
        self._vehicle_cols = ["pos", "speed", "lane", "vid", "rid", "rstep",
                              "sec", "slen", "vcap", "mov", "nsec"]
        self._pending_removal: np.ndarray | None = None

        self.signals = [
            _SignalState([p.base_duration for p in inter.phases], inter.interphase)
            for inter in scenario.intersections
        ]
        self._refresh_allowed()

        self.entry_queues: dict[int, deque[int]] = {s: deque() for s in self._entry_sections}
        self.spawned = 0
        self.entered = 0
        self.exited = 0
        self.exited_log: list[tuple[int, int]] = []   # (vehicle id, route id)
        self._next_id = 0

        nd = len(scenario.detectors)
        self.det_counts = np.zeros(nd, dtype=np.int64)
        self.det_speed_sums = np.zeros(nd)
        self.det_occ_time = np.zeros(nd)

        self._rebuild_structure()

    # ------------------------------------------------------------------
    # static tables

    def _build_static_tables(self, sc: Scenario) -> None:
        self._sec_index = {s.id: i for i, s in enumerate(sc.sections)}
        self.sec_len = np.array([s.length for s in sc.sections])
        self.sec_vmax = np.array([min(s.max_speed_ms, VEHICLE_VMAX) for s in sc.sections])
        self.sec_lanes = np.array([s.lanes for s in sc.sections], dtype=np.int64)
        self.lane_first = np.concatenate([[0], np.cumsum(self.sec_lanes)])
        self.n_lanes = int(self.lane_first[-1])
        self._max_lanes = int(self.sec_lanes.max())

        # movements: every section pair a vehicle may traverse; pairs at a
        # signalized node toggle with the phases, the rest are always open
        pairs = sorted(allowed_section_pairs(sc))
        self._mov_index = {p: i for i, p in enumerate(pairs)}
        signal_nodes = set()
        for inter in sc.intersections:
            for ph in inter.phases:
                for sin, _ in ph.movements:
                    signal_nodes.add(sc.section(sin).to_node)
        self._mov_static = np.array(
            [sc.section(a).to_node not in signal_nodes for a, _ in pairs], dtype=bool
        )
        self._phase_movs: list[list[np.ndarray]] = []
        self._inter_movs: list[np.ndarray] = []
        for inter in sc.intersections:
            per_phase = []
            all_ids = set()
            for ph in inter.phases:
                ids = [self._mov_index[m] for m in ph.movements if m in self._mov_index]
                per_phase.append(np.array(ids, dtype=np.int64))
                all_ids.update(ids)
            self._phase_movs.append(per_phase)
            self._inter_movs.append(np.array(sorted(all_ids), dtype=np.int64))
        # index -1 used by route-final vehicles; keep one always-open slot
        self.mov_allowed = np.zeros(len(pairs) + 1, dtype=bool)
        self.mov_allowed[-1] = True

        # routes, one per demand entry with positive rate
        self._routes: list[list[int]] = []
        self._route_movs: list[list[int]] = []
        self._od_rates = []
        self._od_route = []
        for e in sc.demand:
            if e.vehicles_per_hour <= 0:
                continue
            path = find_route(sc, e.origin, e.destination)
            secs = [self._sec_index[p] for p in path]
            movs = []
            for a, b in zip(path[:-1], path[1:]):
                movs.append(self._mov_index[(a, b)])
            movs.append(-1)
            self._routes.append(secs)
            self._route_movs.append(movs)
            self._od_rates.append(e.vehicles_per_hour / 3600.0)
            self._od_route.append(len(self._routes) - 1)
        self._od_rates_dt = np.array(self._od_rates) * self.dt
        self._entry_sections = sorted({r[0] for r in self._routes})

        # detectors: per-section lists, plus the column width for the
        # per-vehicle detector cache
        self._sec_dets: list[list[int]] = [[] for _ in sc.sections]
        self.det_pos = np.array([d.position for d in sc.detectors])
        self.det_vmax = np.array(
            [min(sc.section(d.section).max_speed_ms, VEHICLE_VMAX) for d in sc.detectors]
        )
        for i, d in enumerate(sc.detectors):
            self._sec_dets[self._sec_index[d.section]].append(i)
        self._det_k = max(1, max((len(l) for l in self._sec_dets), default=1))

        self._inter_of_group = list(range(len(sc.intersections)))
        self._base_durations = [
            [p.base_duration for p in inter.phases] for inter in sc.intersections
        ]

    # ------------------------------------------------------------------
    # signals

    def _refresh_allowed(self) -> None:
        allowed = self.mov_allowed
        allowed[:-1] = self._mov_static
        for k, sig in enumerate(self.signals):
            if not sig.in_interphase:
                allowed[self._phase_movs[k][sig.phase]] = True

    def apply_phase_durations(self, durations: np.ndarray) -> None:
        """Latch new per-phase durations, effective from each intersection's
        next phase change; the phase in progress finishes untouched.

        Durations are given as one flat vector over all intersections, in
        scenario order. Per intersection they must be positive and sum to
        the base total within 1e-6 s.
        """
        durations = np.asarray(durations, dtype=np.float64)
        offset = 0
        pend = []
        for k, base in enumerate(self._base_durations):
            part = durations[offset:offset + len(base)]
            offset += len(base)
            if np.any(part <= 0):
                raise CycleViolationError(
                    f"intersection {self.scenario.intersections[k].id}: "
                    "phase durations must be positive")
            if abs(float(part.sum()) - sum(base)) > 1e-6:
                raise CycleViolationError(
                    f"intersection {self.scenario.intersections[k].id}: durations sum "
                    f"{part.sum():.9f} != cycle phase time {sum(base):.9f}")
            pend.append(list(part))
        if offset != len(durations):
            raise CycleViolationError("duration vector length mismatch")
        for sig, p in zip(self.signals, pend):
            sig.pending = p

    # ------------------------------------------------------------------
    # structure bookkeeping

    def _rebuild_structure(self) -> None:
        n = len(self.pos)
        if n:
            change = np.empty(n, dtype=bool)
            change[0] = True
            np.not_equal(self.lane[1:], self.lane[:-1], out=change[1:])
            starts = np.flatnonzero(change)
            ends = np.concatenate([starts[1:], [n]]) - 1
        else:
            starts = np.empty(0, dtype=np.int64)
            ends = starts
        self._starts = starts
        self._rear_row = np.full(self.n_lanes, -1, dtype=np.int64)
        if n:
            self._rear_row[self.lane[ends]] = ends
        self._is_front = np.zeros(n, dtype=bool)
        self._is_front[starts] = True

    def _apply_events(self, remove_mask: np.ndarray | None,
                      new_rows: dict[str, list] | None) -> None:
        cols = self._vehicle_cols
        if remove_mask is not None and remove_mask.any():
            keep = ~remove_mask
            for c in cols:
                setattr(self, c, getattr(self, c)[keep])
            self.det_cols = [(ids[keep], ps[keep]) for ids, ps in self.det_cols]
        if new_rows is not None and new_rows["pos"]:
            for c in cols:
                dtype = getattr(self, c).dtype
                add = np.asarray(new_rows[c], dtype=dtype)
                setattr(self, c, np.concatenate([getattr(self, c), add]))
            for k in range(self._det_k):
                ids, ps = self.det_cols[k]
                self.det_cols[k] = (
                    np.concatenate([ids, np.asarray(new_rows[f"det{k}"], dtype=np.int64)]),
                    np.concatenate([ps, np.asarray(new_rows[f"detp{k}"], dtype=np.float64)]),
                )
        perm = np.lexsort((-self.pos, self.lane))
        if not np.array_equal(perm, np.arange(len(perm))):
            for c in cols:
                setattr(self, c, getattr(self, c)[perm])
            self.det_cols = [(ids[perm], ps[perm]) for ids, ps in self.det_cols]
        self._rebuild_structure()

    def _residence(self, route_id: int, route_step: int) -> tuple:
        """Per-vehicle cached attributes for its current section."""
        route = self._routes[route_id]
        sec = route[route_step]
        mov = self._route_movs[route_id][route_step]
        nsec = route[route_step + 1] if route_step + 1 < len(route) else -1
        dets = self._sec_dets[sec]
        det_ids = [dets[k] if k < len(dets) else -1 for k in range(self._det_k)]
        det_ps = [self.det_pos[d] if d >= 0 else -1.0 for d in det_ids]
        return sec, self.sec_len[sec], self.sec_vmax[sec], mov, nsec, det_ids, det_ps

    # ------------------------------------------------------------------
    # main step

    def sim_step(self) -> None:
        """Advance the world by one simulation step."""
        if self.clock >= self.scenario.horizon - _EPS_T:
            raise SimulationError("simulation horizon reached")
        dt = self.dt
        n = len(self.pos)
        events = False

        if n:
            pos, speed = self.pos, self.speed
            # desired speed: accelerate toward the section limit
            v_des = np.minimum(speed + ACCEL * dt, self.vcap)

            # leader constraint: previous row in the sorted arrays is the
            # vehicle directly ahead within the same lane
            gap = np.empty(n)
            v_lead = np.empty(n)
            gap[0] = _BIG
            v_lead[0] = 0.0
            if n > 1:
                np.subtract(pos[:-1], pos[1:], out=gap[1:])
                gap[1:] -= SPACE
                v_lead[1:] = speed[:-1]

            # front-of-lane vehicles: constraint comes from downstream
            f = self._starts
            if len(f):
                gap_f, vl_f, tgt_lane = self._front_constraints(f)
                gap[f] = gap_f
                v_lead[f] = vl_f
            else:
                tgt_lane = np.empty(0, dtype=np.int64)

            # red stop line applies to every vehicle whose next movement is
            # currently forbidden, not just lane fronts
            red = ~self.mov_allowed[self.mov]
            if red.any():
                line_gap = self.slen - pos
                gap = np.where(red, np.minimum(gap, line_gap), gap)
                v_lead = np.where(red & (line_gap <= gap), 0.0, v_lead)

            v_safe = v_lead + (gap - v_lead * TAU) / ((speed + v_lead) / (2.0 * BRAKE) + TAU)
            v_new = np.maximum(np.minimum(v_des, v_safe), 0.0)
            x_new = pos + v_new * dt

            # hard guarantees: never cross a red line, never overlap the
            # vehicle ahead (cascading), never move backwards
            if red.any():
                x_new = np.where(red, np.minimum(x_new, self.slen), x_new)
            while True:
                lim = np.empty(n)
                lim[0] = _BIG
                if n > 1:
                    np.subtract(x_new[:-1], SPACE, out=lim[1:])
                lim[self._is_front] = _BIG
                over = x_new > lim
                if not over.any():
                    break
                x_new = np.where(over, lim, x_new)
            x_new = np.maximum(x_new, pos)
            clamped = x_new < pos + v_new * dt - 1e-12
            if clamped.any():
                v_new = np.where(clamped, (x_new - pos) / dt, v_new)

            self._accumulate_detectors(pos, x_new, v_new, dt)

            crossing = x_new > self.slen
            self.speed = v_new
            self.pos = x_new
            if crossing.any():
                events = self._handle_crossings(np.flatnonzero(crossing), tgt_lane) or events

        # vehicle generation and queued entries
        if len(self._od_rates_dt):
            draws = self.rng.poisson(self._od_rates_dt)
            if draws.any():
                for k in np.flatnonzero(draws):
                    route_id = self._od_route[k]
                    for _ in range(int(draws[k])):
                        self.entry_queues[self._routes[route_id][0]].append(route_id)
                        self.spawned += 1
        new_rows = self._process_entries()
        if new_rows is not None:
            events = True

        if events or new_rows is not None:
            self._apply_events(self._pending_removal, new_rows)
            self._pending_removal = None

        changed = False
        for sig in self.signals:
            changed = sig.advance(dt) or changed
        if changed:
            self._refresh_allowed()
        self.clock += dt

    def _front_constraints(self, f: np.ndarray) -> tuple:
        """Virtual leader for each lane-front vehicle: the rear vehicle of
        the best target lane downstream when its movement is open, nothing
        when the road ahead is clear or the route ends here."""
        mov_f = self.mov[f]
        has_next = mov_f >= 0
        allowed_f = self.mov_allowed[mov_f]
        go = has_next & allowed_f

        gap_f = np.full(len(f), _BIG)
        vl_f = np.zeros(len(f))
        tgt_lane = np.full(len(f), -1, dtype=np.int64)
        if not go.any():
            return gap_f, vl_f, tgt_lane

        idx = np.flatnonzero(go)
        rows = f[idx]
        nxt = self.nsec[rows]
        first = self.lane_first[nxt]
        n_l = self.sec_lanes[nxt]
        best_clear = np.full(len(idx), -np.inf)
        best_lane = first.copy()
        for k in range(self._max_lanes):
            lane_k = first + k
            valid = k < n_l
            rear = np.where(valid, self._rear_row[np.minimum(lane_k, self.n_lanes - 1)], -1)
            clear = np.where(rear >= 0, self.pos[np.maximum(rear, 0)],
                             self.sec_len[nxt])
            clear = np.where(valid, clear, -np.inf)
            better = clear > best_clear
            best_clear = np.where(better, clear, best_clear)
            best_lane = np.where(better, lane_k, best_lane)
        rear_best = self._rear_row[best_lane]
        occupied = rear_best >= 0
        gap_go = np.where(
            occupied,
            (self.slen[rows] - self.pos[rows]) + best_clear - SPACE,
            _BIG,
        )
        vl_go = np.where(occupied, self.speed[np.maximum(rear_best, 0)], 0.0)
        gap_f[idx] = gap_go
        vl_f[idx] = vl_go
        tgt_lane[idx] = best_lane
        return gap_f, vl_f, tgt_lane

    def _accumulate_detectors(self, pos_old: np.ndarray, x_new: np.ndarray,
                              v_new: np.ndarray, dt: float) -> None:
        for ids, dpos in self.det_cols:
            present = ids >= 0
            if not present.any():
                continue
            crossed = present & (pos_old < dpos) & (x_new >= dpos)
            if crossed.any():
                d = ids[crossed]
                np.add.at(self.det_counts, d, 1)
                np.add.at(self.det_speed_sums, d, v_new[crossed])
            # occupancy: time the vehicle front spends within one vehicle
            # length past the loop position
            near = present & (x_new >= dpos) & (pos_old <= dpos + VEHICLE_LENGTH)
            if near.any():
                lo = np.maximum(pos_old[near], dpos[near])
                hi = np.minimum(x_new[near], dpos[near] + VEHICLE_LENGTH)
                v = v_new[near]
                moving = v > 1e-9
                t_occ = np.where(moving,
                                 np.clip((hi - lo) / np.where(moving, v, 1.0), 0.0, dt),
                                 dt)
                np.add.at(self.det_occ_time, ids[near], t_occ)

    def _handle_crossings(self, rows: np.ndarray, tgt_lane: np.ndarray) -> bool:
        """Move vehicles past the end of their section: exit the network or
        enter the next section of their route."""
        remove = np.zeros(len(self.pos), dtype=bool)
        tgt_of_row = {int(r): int(t) for r, t in zip(self._starts, tgt_lane)}
        for r in rows:
            r = int(r)
            overshoot = self.pos[r] - self.slen[r]
            if self.mov[r] < 0:
                self.exited += 1
                self.exited_log.append((int(self.vid[r]), int(self.rid[r])))
                remove[r] = True
                continue
            route_id = int(self.rid[r])
            step = int(self.rstep[r]) + 1
            sec, slen, vcap, mov, nsec, det_ids, det_ps = self._residence(route_id, step)
            lane = tgt_of_row.get(r, -1)
            if not (self.lane_first[sec] <= lane < self.lane_first[sec + 1]):
                lane = self._pick_entry_lane(sec)[0]
            rear = self._rear_row[lane]
            entry_pos = overshoot
            if rear >= 0 and rear != r and not remove[rear]:
                entry_pos = min(entry_pos, max(self.pos[rear] - SPACE, 0.0))
            self.pos[r] = entry_pos
            self.lane[r] = lane
            self.sec[r] = sec
            self.rstep[r] = step
            self.slen[r] = slen
            self.vcap[r] = vcap
            self.mov[r] = mov
            self.nsec[r] = nsec
            for k in range(self._det_k):
                self.det_cols[k][0][r] = det_ids[k]
                self.det_cols[k][1][r] = det_ps[k]
            # the rear of the target lane advances as vehicles pour in
            self._rear_row[lane] = r
            for k, d in enumerate(det_ids):
                if d >= 0 and 0.0 < det_ps[k] <= entry_pos:
                    self.det_counts[d] += 1
                    self.det_speed_sums[d] += self.speed[r]
            # speed cap of the new section applies from the next step
        self._pending_removal = remove
        return True

    def _pick_entry_lane(self, sec: int) -> tuple[int, float, float]:
        """Lane of `sec` with the most room at the entrance; returns
        (lane, clearance, rear speed)."""
        best = (-1, -np.inf, 0.0)
        for lane in range(int(self.lane_first[sec]), int(self.lane_first[sec + 1])):
            rear = self._rear_row[lane]
            if rear < 0:
                clear, v = float(self.sec_len[sec]), 0.0
            else:
                clear, v = float(self.pos[rear]), float(self.speed[rear])
            if clear > best[1]:
                best = (lane, clear, v)
        return best

    def _process_entries(self) -> dict[str, list] | None:
        new: dict[str, list] | None = None
        for sec in self._entry_sections:
            q = self.entry_queues[sec]
            if not q:
                continue
            # snapshot entrance state per lane, maintained locally while the
            # queue drains; ties go to the lowest lane index
            state: dict[int, tuple[float, float]] = {}
            for lane in range(int(self.lane_first[sec]), int(self.lane_first[sec + 1])):
                rear = self._rear_row[lane]
                if rear < 0:
                    state[lane] = (float(self.sec_len[sec]), 0.0)
                else:
                    state[lane] = (float(self.pos[rear]), float(self.speed[rear]))
            while q:
                lane = max(state, key=lambda l: (state[l][0], -l))
                clear, rear_v = state[lane]
                if clear < ENTRY_CLEARANCE:
                    break
                route_id = q.popleft()
                vmax = float(min(self.sec_vmax[sec], VEHICLE_VMAX))
                gap = clear - SPACE
                v_safe = rear_v + (gap - rear_v * TAU) / ((vmax + rear_v) / (2 * BRAKE) + TAU)
                v0 = max(0.0, min(vmax, v_safe))
                _, slen, vcap, mov, nsec, det_ids, det_ps = self._residence(route_id, 0)
                if new is None:
                    new = {c: [] for c in self._vehicle_cols}
                    for k in range(self._det_k):
                        new[f"det{k}"] = []
                        new[f"detp{k}"] = []
                new["pos"].append(0.0)
                new["speed"].append(v0)
                new["lane"].append(lane)
                new["vid"].append(self._next_id)
                new["rid"].append(route_id)
                new["rstep"].append(0)
                new["sec"].append(sec)
                new["slen"].append(slen)
                new["vcap"].append(vcap)
                new["mov"].append(mov)
                new["nsec"].append(nsec)
                for k in range(self._det_k):
                    new[f"det{k}"].append(det_ids[k])
                    new[f"detp{k}"].append(det_ps[k])
                self._next_id += 1
                self.entered += 1
                state[lane] = (0.0, v0)
        return new

    # ------------------------------------------------------------------
    # episode-step aggregation

    def run_episode_step(self) -> EpisodeStepObservation:
        """Run one controller period and aggregate detector data."""
        sc = self.scenario
        ratio = self.clock / sc.episode_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise SimulationError("clock not aligned to an episode-step boundary")
        n_sub = int(round(sc.episode_step / sc.sim_step))
        for _ in range(n_sub):
            self.sim_step()
        counts = self.det_counts.copy()
        scores = np.where(
            counts > 0,
            np.minimum(
                self.det_speed_sums / np.maximum(counts, 1) / self.det_vmax, 1.0),
            1.0,
        )
        occupancy = np.clip(self.det_occ_time / sc.episode_step, 0.0, 1.0)
        self.det_counts[:] = 0
        self.det_speed_sums[:] = 0.0
        self.det_occ_time[:] = 0.0
        return EpisodeStepObservation(self.clock, counts, scores, occupancy)

    # ------------------------------------------------------------------
    # introspection

    @property
    def n_vehicles(self) -> int:
        return len(self.pos)

    @property
    def queued(self) -> int:
        return sum(len(q) for q in self.entry_queues.values())

    def vehicles(self) -> list[tuple[int, int, int, float, float]]:
        """(vehicle id, route id, route step, position, speed) per vehicle."""
        return [
            (int(self.vid[i]), int(self.rid[i]), int(self.rstep[i]),
             float(self.pos[i]), float(self.speed[i]))
            for i in range(len(self.pos))
        ]

    def routes(self) -> list[list[str]]:
        return [[self.scenario.sections[s].id for s in r] for r in self._routes]

    def signal_state(self, k: int = 0) -> tuple[int, float, list[float]]:
        sig = self.signals[k]
        return sig.phase, sig.clock, list(sig.durations)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for c in self._vehicle_cols:
            h.update(np.ascontiguousarray(getattr(self, c)).tobytes())
        for ids, ps in self.det_cols:
            h.update(ids.tobytes())
            h.update(ps.tobytes())
        for sig in self.signals:
            h.update(json.dumps([sig.phase, sig.clock, sig.durations, sig.pending]).encode())
        h.update(json.dumps([self.clock, self.spawned, self.entered, self.exited]).encode())
        h.update(json.dumps(self.rng.bit_generator.state, default=int).encode())
        for s in self._entry_sections:
            h.update(json.dumps(list(self.entry_queues[s])).encode())
        h.update(self.det_counts.tobytes())
        h.update(self.det_speed_sums.tobytes())
        h.update(self.det_occ_time.tobytes())
        return h.hexdigest()
