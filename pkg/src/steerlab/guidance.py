"""Attribute steering: latent directions from edited conditions, blended per step.

Inside a configured reverse-progress window the sampler's noise estimate is a
convex blend of the base conditional estimate and an attribute term.  The
attribute term for one attribute is the difference between noise estimates
under two edited conditions (value pinned to target vs. reference), which
points along the latent separation between those attribute values at the
current noise level.  Outside the window the base estimate passes through
untouched and no edited condition is ever evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .diffusion import LatentState, NoiseSchedule, analytic_epsilon
from .errors import NumericsError
from .world import Condition, MixtureWorld, conditional_components


@dataclass(frozen=True)
class GuidanceConfig:
    gamma: float = 0.7
    window: tuple[float, float] = (0.375, 0.625)
    attribute_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        lo, hi = self.window
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"window must satisfy 0 <= lo < hi <= 1, got {self.window}")
        if not self.attribute_scale > 0:
            raise ValueError(f"attribute_scale must be positive, got {self.attribute_scale}")


@dataclass(frozen=True)
class PlanEntry:
    """Steering directive for one attribute: push target, away from reference."""

    target: str
    reference: str
    scalar: int = 1

    def __post_init__(self):
        if self.target == self.reference:
            raise ValueError(f"target and reference must differ, both {self.target!r}")
        if self.scalar not in (1, -1):
            raise ValueError(f"scalar must be +1 or -1, got {self.scalar}")


@dataclass(frozen=True)
class GuidancePlan:
    """Per-attribute steering directives, keyed by attribute name."""

    entries: tuple[tuple[str, PlanEntry], ...]

    @classmethod
    def from_dict(cls, entries: dict[str, PlanEntry]) -> "GuidancePlan":
        return cls(tuple(entries.items()))

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[str, PlanEntry]:
        return dict(self.entries)


EMPTY_PLAN = GuidancePlan(())


def in_window(schedule: NoiseSchedule, t_index: int, config: GuidanceConfig) -> bool:
    """Window membership by reverse-progress fraction, half-open [lo, hi).

    Progress runs 0 at the first reverse step (t_index = steps-1) to 1 at the
    last; a window ending at 1.0 is treated as closed there so that the full
    window (0, 1) covers every step.
    """
    if not 0 <= t_index < schedule.steps:
        raise ValueError(f"t_index {t_index} outside schedule range [0, {schedule.steps})")
    if schedule.steps == 1:
        progress = 0.0
    else:
        progress = (schedule.steps - 1 - t_index) / (schedule.steps - 1)
    lo, hi = config.window
    return lo <= progress < hi or (hi >= 1.0 and progress == 1.0)


def edit_condition(world: MixtureWorld, cond: Condition, attribute: str, value: str) -> Condition:
    """Pin one attribute constraint; everything else (embedding included) unchanged."""
    world.schema.check_value(attribute, value)
    new = Condition(cond.concept, {**cond.constraints, attribute: value}, cond.embedding)
    conditional_components(world, new)  # raises InfeasibleConditionError if empty
    return new


def adaptive_latent_direction(
    world: MixtureWorld,
    schedule: NoiseSchedule,
    state: LatentState,
    cond: Condition,
    attribute: str,
    pair: tuple[str, str],
) -> np.ndarray:
    """Noise-space direction separating two values of one attribute.

    Computed as the difference of the analytic noise estimates under the two
    edited conditions; antisymmetric in the pair by construction.
    """
    value_i, value_j = pair
    eps_i = analytic_epsilon(world, schedule, state, edit_condition(world, cond, attribute, value_i))
    eps_j = analytic_epsilon(world, schedule, state, edit_condition(world, cond, attribute, value_j))
    return eps_i - eps_j


class GuidanceProbe:
    """Optional per-step diagnostics: cosine and norms of the blended terms."""

    def __init__(self):
        self.rows: list[tuple[int, float, float, float]] = []

    def record(self, t_index: int, base: np.ndarray, attr_term: np.ndarray) -> None:
        nb = float(np.linalg.norm(base))
        na = float(np.linalg.norm(attr_term))
        cosine = float(base @ attr_term) / (nb * na) if nb > 0 and na > 0 else 0.0
        self.rows.append((t_index, cosine, nb, na))


def combined_noise(
    world: MixtureWorld,
    schedule: NoiseSchedule,
    state: LatentState,
    cond: Condition,
    plan: GuidancePlan,
    config: GuidanceConfig,
    probe: GuidanceProbe | None = None,
) -> np.ndarray:
    """Blend the base noise estimate with the plan's attribute directions.

    gamma = 1 short-circuits to the base estimate bitwise; outside the window
    (or with an empty plan) the base estimate passes through and no edited
    condition is evaluated.
    """
    base = analytic_epsilon(world, schedule, state, cond)
    if config.gamma == 1.0 or len(plan) == 0 or not in_window(schedule, state.t_index, config):
        return base
    acc = np.zeros_like(base)
    for attribute, entry in plan.entries:
        acc += entry.scalar * adaptive_latent_direction(
            world, schedule, state, cond, attribute, (entry.target, entry.reference)
        )
    attr_term = config.attribute_scale * acc / len(plan)
    if probe is not None:
        probe.record(state.t_index, base, attr_term)
    out = config.gamma * base + (1.0 - config.gamma) * attr_term
    if not math.isfinite(float(out.sum())):
        raise NumericsError(f"non-finite steered noise at step {state.t_index}")
    return out
