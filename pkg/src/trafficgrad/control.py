"""Action transform: unconstrained per-phase controller outputs to durations.

Every controller in the repo (the gradient agent, the tabular agents and
the random agent) emits one value per traffic-light phase. This module turns
those values into phase durations that (a) leave every intersection's cycle
length untouched and (b) never shrink a phase below 20% of its base duration.

The pipeline is: group the per-phase values by intersection, turn them into
positive weights (grouped softmax for raw real-valued outputs, plain
normalization for already-positive multipliers), combine the weights with the
base durations to get each phase's share of the cycle, and finally allocate
the adjustable 80% of the intersection's phase time by those shares on top of
the fixed 20% floors. A group-constant input therefore reproduces the base
signal plan exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netgraph import Scenario


class ActionError(ValueError):
    """Raised for non-finite inputs or cycle-violating durations."""


ADJUSTABLE_SHARE = 0.8  # fraction of each intersection's phase time that actions may move


@dataclass(frozen=True)
class PhaseLayout:
    """Static grouping of the global phase vector by intersection.

    Phases are ordered as in the scenario: intersections in declaration
    order, phases in plan order within each intersection. ``group_start``
    has one extra trailing entry equal to ``n_phases`` so that group g spans
    ``group_start[g]:group_start[g+1]``.
    """

    intersection_ids: tuple[str, ...]
    phase_ids: tuple[str, ...]
    group_of_phase: np.ndarray      # (np,) int
    group_start: np.ndarray         # (n_groups + 1,) int
    base: np.ndarray                # (np,) base durations, seconds
    floor: np.ndarray               # (np,) = 0.2 * base
    budget: np.ndarray              # (n_groups,) = 0.8 * sum(base) per group

    @property
    def n_phases(self) -> int:
        return len(self.phase_ids)

    @property
    def n_groups(self) -> int:
        return len(self.intersection_ids)

    def group_sizes(self) -> np.ndarray:
        return np.diff(self.group_start)

    def group_sum(self, values: np.ndarray) -> np.ndarray:
        """Per-group sums, broadcast back to phase positions."""
        sums = np.add.reduceat(values, self.group_start[:-1])
        return sums[self.group_of_phase]


def layout_from_scenario(sc: Scenario) -> PhaseLayout:
    inter_ids = []
    phase_ids = []
    group_of = []
    starts = [0]
    base = []
    for g, inter in enumerate(sc.intersections):
        inter_ids.append(inter.id)
        for ph in inter.phases:
            phase_ids.append(ph.id)
            group_of.append(g)
            base.append(ph.base_duration)
        starts.append(len(phase_ids))
    base_arr = np.asarray(base, dtype=np.float64)
    group_of_arr = np.asarray(group_of, dtype=np.intp)
    starts_arr = np.asarray(starts, dtype=np.intp)
    group_base_sum = np.add.reduceat(base_arr, starts_arr[:-1])
    # fifths written as divisions: exact for the usual multiple-of-5 durations
    return PhaseLayout(
        intersection_ids=tuple(inter_ids),
        phase_ids=tuple(phase_ids),
        group_of_phase=group_of_arr,
        group_start=starts_arr,
        base=base_arr,
        floor=base_arr / 5.0,
        budget=4.0 * group_base_sum / 5.0,
    )


def softmax_by_group(raw: np.ndarray, layout: PhaseLayout) -> np.ndarray:
    """Grouped softmax with max-subtraction so huge inputs cannot overflow."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (layout.n_phases,):
        raise ActionError(f"expected {layout.n_phases} action values, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ActionError("non-finite action value")
    group_max = np.maximum.reduceat(raw, layout.group_start[:-1])[layout.group_of_phase]
    e = np.exp(raw - group_max)
    return e / layout.group_sum(e)


def normalize_by_group(multipliers: np.ndarray, layout: PhaseLayout) -> np.ndarray:
    """Normalize nonnegative multipliers to per-group weights summing to 1.

    A group whose multipliers sum to zero falls back to uniform weights.
    """
    m = np.asarray(multipliers, dtype=np.float64)
    if m.shape != (layout.n_phases,):
        raise ActionError(f"expected {layout.n_phases} multipliers, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise ActionError("multipliers must be finite and nonnegative")
    sums = layout.group_sum(m)
    sizes = layout.group_sizes()[layout.group_of_phase]
    return np.where(sums > 0, m / np.where(sums > 0, sums, 1.0), 1.0 / sizes)


def base_weighted_ratios(weights: np.ndarray, layout: PhaseLayout) -> np.ndarray:
    """Turn per-phase weights into cycle shares.

    Each weight scales its own phase's base duration, and the products are
    renormalized within the intersection. Uniform weights in a group yield
    exactly the base-duration proportions, which is what makes a constant
    action reproduce the base plan.
    """
    scaled = weights * layout.base
    return scaled / layout.group_sum(scaled)


def adjust_durations(ratios: np.ndarray, layout: PhaseLayout) -> np.ndarray:
    """Allocate the adjustable budget by the given cycle shares.

    duration_i = 0.2 * base_i + ratio_i * (0.8 * sum of the group's bases).
    Per intersection the durations sum back to the base total.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    return layout.floor + ratios * layout.budget[layout.group_of_phase]


def phase_adjustment_matrix(layout: PhaseLayout) -> np.ndarray:
    """Block-diagonal 0/1 group-membership operator.

    Row i has ones exactly at the phases sharing intersection i's group, so
    M @ v computes per-group sums broadcast to every member (M @ ones gives
    each phase its group size, and group-constant vectors stay
    group-constant).
    """
    same = layout.group_of_phase[:, None] == layout.group_of_phase[None, :]
    return same.astype(np.float64)


def durations_from_raw(raw: np.ndarray, layout: PhaseLayout) -> np.ndarray:
    """Full transform for real-valued controller outputs."""
    return adjust_durations(base_weighted_ratios(softmax_by_group(raw, layout), layout), layout)


def durations_from_multipliers(multipliers: np.ndarray, layout: PhaseLayout) -> np.ndarray:
    """Full transform for positive timing multipliers (tabular/random agents)."""
    weights = normalize_by_group(multipliers, layout)
    return adjust_durations(base_weighted_ratios(weights, layout), layout)
