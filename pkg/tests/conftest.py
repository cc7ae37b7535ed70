import dataclasses

import numpy as np
import pytest

from trafficgrad.netgraph import (
    Centroid,
    DemandEntry,
    Detector,
    Intersection,
    Phase,
    Scenario,
    Section,
    generate_network_a,
    generate_network_b,
    validate_scenario,
)


@pytest.fixture(scope="session")
def network_a() -> Scenario:
    return generate_network_a()


@pytest.fixture(scope="session")
def network_b() -> Scenario:
    return generate_network_b()


def shorten(scenario: Scenario, horizon: float) -> Scenario:
    """Same scenario with a shorter run, for fast closed-loop tests."""
    return validate_scenario(dataclasses.replace(scenario, horizon=horizon))


@pytest.fixture(scope="session")
def network_a_short(network_a) -> Scenario:
    return shorten(network_a, 600.0)


def straight_road_scenario(max_speed: float = 50.0) -> Scenario:
    """Two sections in a line, no signals: a drag strip for kinematics."""
    sc = Scenario(
        name="straight",
        nodes=("a", "b", "c"),
        sections=(
            Section("s1", 1000.0, 1, max_speed, "a", "b"),
            Section("s2", 1000.0, 1, max_speed, "b", "c"),
        ),
        intersections=(),
        detectors=(Detector("d1", "s1", 600.0),),
        centroids=(
            Centroid("orig", sources=("s1",), sinks=()),
            Centroid("dest", sources=(), sinks=("s2",)),
        ),
        demand=(DemandEntry("orig", "dest", 0.0),),
    )
    return validate_scenario(sc)


def fd_gradients(net, x, w_out, h=1e-5):
    """Central finite differences of loss = sum(forward(net, x) * w_out)
    with respect to every parameter and the input batch."""
    from trafficgrad import nn

    def loss():
        out, _ = nn.forward(net, x, train=True)
        return float((out * w_out).sum())

    param_grads = []
    for layer in net.layers:
        layer_grads = []
        for p in layer.params():
            g = np.zeros_like(p)
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                lp = loss()
                flat[i] = old - h
                lm = loss()
                flat[i] = old
                gflat[i] = (lp - lm) / (2 * h)
            layer_grads.append(g)
        param_grads.append(layer_grads)
    gx = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = gx.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        lp = loss()
        flat[i] = old - h
        lm = loss()
        flat[i] = old
        gflat[i] = (lp - lm) / (2 * h)
    return param_grads, gx


def max_rel_err(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
