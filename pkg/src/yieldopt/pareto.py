"""Dominance machinery and scalarizations for the yield/cost trade-off.

Orientation throughout: yield is maximized, cost is minimized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .problem import DesignVector


@dataclass(frozen=True)
class ObjectivePoint:
    yield_value: float
    cost: float
    design: DesignVector
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.yield_value <= 1.0:
            raise ValueError(f"yield must lie in [0, 1], got {self.yield_value}")


def dominates(a: ObjectivePoint, b: ObjectivePoint) -> bool:
    """True iff ``a`` is at least as good in both objectives and better in one."""
    if a.yield_value < b.yield_value or a.cost > b.cost:
        return False
    return a.yield_value > b.yield_value or a.cost < b.cost


def pareto_front(points) -> list[ObjectivePoint]:
    """All non-dominated points, in input order; objective-value ties are kept.

    Sort-and-sweep over (cost asc, yield desc): a point is dominated iff a
    strictly cheaper point has at least its yield, or an equal-cost point
    has strictly more.
    """
    points = list(points)
    if not points:
        return []
    cost = np.array([p.cost for p in points])
    yld = np.array([p.yield_value for p in points])
    order = np.lexsort((-yld, cost))
    keep = np.zeros(len(points), dtype=bool)
    best_cheaper = -np.inf  # max yield over strictly cheaper points
    i = 0
    while i < len(order):
        j = i
        group_max = -np.inf
        while j < len(order) and cost[order[j]] == cost[order[i]]:
            group_max = max(group_max, yld[order[j]])
            j += 1
        for k in order[i:j]:
            keep[k] = yld[k] > best_cheaper and yld[k] == group_max
        best_cheaper = max(best_cheaper, group_max)
        i = j
    return [p for k, p in enumerate(points) if keep[k]]


class ParetoArchive:
    """Accumulates objective points; ``front()`` is the non-dominated subset."""

    def __init__(self, points=()):
        self.points: list[ObjectivePoint] = list(points)

    def add(self, point: ObjectivePoint) -> None:
        self.points.append(point)

    def front(self) -> list[ObjectivePoint]:
        return pareto_front(self.points)

    def front_to_csv(self, path) -> None:
        write_points_csv(path, self.front())


def write_points_csv(path, points) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["yield", "cost", "d1", "d2", "d3", "s"])
        for p in points:
            writer.writerow(
                [repr(float(v)) for v in (p.yield_value, p.cost, p.design.d1, p.design.d2, p.design.d3, p.design.s)]
            )


def weighted_sum_objective(y: float, c: float, w: float) -> float:
    """Scalarized objective -y + w*c, minimized."""
    if w <= 0:
        raise ValueError(f"weight must be > 0, got {w}")
    return -y + w * c


def weighted_sum(values, weights) -> float:
    """General k-objective weighted sum (all objectives maximized)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise ValueError("values and weights must have matching shapes")
    if np.any(weights <= 0):
        raise ValueError("all weights must be > 0")
    return float(np.dot(weights, values))


def eps_feasible(c: float, c_max: float) -> bool:
    """Cost-constraint check of the epsilon-constraint formulation (non-strict)."""
    return c <= c_max
