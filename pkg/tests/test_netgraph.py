import dataclasses
import json

import numpy as np
import pytest

from trafficgrad.netgraph import (
    Detector,
    ParseError,
    ValidationError,
    find_route,
    generate_network_a,
    generate_network_b,
    load_scenario,
    resolve_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
    validate_scenario,
)


class TestNetworkA:
    def test_counts(self, network_a):
        assert network_a.n_detectors == 8
        assert len(network_a.intersections) == 1
        assert len(network_a.intersections[0].phases) == 2

    def test_cycle(self, network_a):
        # 15 + 70 + 2 * 5
        assert network_a.intersections[0].cycle == 95.0

    def test_phase_durations(self, network_a):
        assert [p.base_duration for p in network_a.intersections[0].phases] == [15.0, 70.0]

    def test_demand(self, network_a):
        assert len(network_a.centroids) == 4
        assert len(network_a.demand) == 8
        assert all(e.vehicles_per_hour == 150.0 for e in network_a.demand)

    def test_no_left_turns(self, network_a):
        # a westbound entry may exit east (straight) or south (right), never north
        allowed = {m for p in network_a.intersections[0].phases for m in p.movements}
        assert ("in_w", "out_e") in allowed and ("in_w", "out_s") in allowed
        assert ("in_w", "out_n") not in allowed

    def test_timing_defaults(self, network_a):
        assert network_a.sim_step == 0.75
        assert network_a.episode_step == 120.0
        assert network_a.horizon == 3600.0
        assert network_a.episode_steps_per_run == 30


class TestNetworkB:
    def test_phase_total_and_detectors(self, network_b):
        assert network_b.n_phases == 30
        assert network_b.n_detectors == 17
        assert len(network_b.intersections) == 6

    def test_phase_count_multiset(self, network_b):
        counts = sorted(len(i.phases) for i in network_b.intersections)
        assert counts == [4, 5, 5, 5, 5, 6]

    def test_regeneration_is_byte_identical(self, network_b):
        again = generate_network_b()
        assert scenario_to_json(again) == scenario_to_json(network_b)
        assert again == network_b

    def test_different_seed_differs(self, network_b):
        other = generate_network_b(scenario_seed=1)
        assert other.demand != network_b.demand

    def test_all_demand_routable(self, network_b):
        for e in network_b.demand[:10]:
            assert find_route(network_b, e.origin, e.destination) is not None


class TestSerialization:
    def test_round_trip(self, tmp_path, network_a, network_b):
        for sc in (network_a, network_b):
            path = tmp_path / f"{sc.name}.json"
            save_scenario(sc, str(path))
            again = load_scenario(str(path))
            assert again == sc

    def test_malformed_json_raises_parse_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_scenario(str(path))

    def test_missing_field_raises_parse_error(self):
        with pytest.raises(ParseError):
            scenario_from_json(json.dumps({"nodes": []}))

    def test_resolve_builtin_and_path(self, tmp_path, network_a):
        assert resolve_scenario("network-a") == network_a
        path = tmp_path / "a.json"
        save_scenario(network_a, str(path))
        assert resolve_scenario(str(path)) == network_a


class TestValidation:
    def test_episode_step_not_multiple_of_sim_step(self, network_a):
        bad = dataclasses.replace(network_a, episode_step=100.0)
        with pytest.raises(ValidationError, match="episode_step"):
            validate_scenario(bad)

    def test_horizon_not_multiple_of_episode_step(self, network_a):
        bad = dataclasses.replace(network_a, horizon=3500.0)
        with pytest.raises(ValidationError, match="horizon"):
            validate_scenario(bad)

    def test_detector_on_unknown_section(self, network_a):
        bad = dataclasses.replace(
            network_a, detectors=network_a.detectors + (Detector("dx", "nope", 1.0),))
        with pytest.raises(ValidationError, match="unknown section"):
            validate_scenario(bad)

    def test_detector_position_outside_section(self, network_a):
        bad = dataclasses.replace(
            network_a, detectors=(Detector("dx", "in_w", 9999.0),))
        with pytest.raises(ValidationError, match="position"):
            validate_scenario(bad)

    def test_negative_section_length(self, network_a):
        secs = list(network_a.sections)
        secs[0] = dataclasses.replace(secs[0], length=-5.0)
        bad = dataclasses.replace(network_a, sections=tuple(secs))
        with pytest.raises(ValidationError, match="length"):
            validate_scenario(bad)

    def test_unroutable_demand(self):
        # two disconnected sections cannot serve a demand pair
        from trafficgrad.netgraph import (Centroid, DemandEntry, Scenario, Section)
        sc = Scenario(
            name="split", nodes=("a", "b", "c", "d"),
            sections=(Section("s1", 100.0, 1, 50.0, "a", "b"),
                      Section("s2", 100.0, 1, 50.0, "c", "d")),
            intersections=(), detectors=(),
            centroids=(Centroid("o", ("s1",), ()), Centroid("t", (), ("s2",))),
            demand=(DemandEntry("o", "t", 10.0),))
        with pytest.raises(ValidationError, match="no signal-permitted route"):
            validate_scenario(sc)

    def test_generated_scenarios_pass_validator(self, network_a, network_b):
        assert validate_scenario(network_a) is network_a
        assert validate_scenario(network_b) is network_b

    def test_cycle_arithmetic_every_intersection(self, network_b):
        for inter in network_b.intersections:
            expected = sum(p.base_duration for p in inter.phases) \
                + len(inter.phases) * inter.interphase
            assert inter.cycle == expected
