"""Traffic light timing workbench.

Deterministic microscopic traffic simulation with induction-loop detectors,
controlled in closed loop by a deep deterministic policy gradient agent with
per-detector rewards, benchmarked against multi-agent tabular Q-learning and
random timing.
"""

__version__ = "0.1.0"

from .netgraph import (  # noqa: F401
    Scenario,
    generate_network_a,
    generate_network_b,
    load_scenario,
    save_scenario,
    resolve_scenario,
)
from .control import PhaseLayout, layout_from_scenario  # noqa: F401
from .microsim import Simulation  # noqa: F401
