"""Elitist non-dominated-sorting genetic algorithm for the yield/cost problem.

Standard NSGA-II machinery: fast non-dominated sorting, crowding distance,
binary tournament selection, simulated-binary crossover and polynomial
mutation bounded to the design box.  Designs violating the linear
constraints are never sent to the yield estimator; they receive yield 0 and
lose against any feasible individual (constraint domination).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .evaluator import YieldEvaluator, YieldProblem
from .montecarlo import derive_seed, latin_hypercube
from .pareto import ObjectivePoint, ParetoArchive, dominates
from .problem import DesignVector, check_constraints, cost


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    offspring: int = 50
    eval_budget: int = 1000
    crossover_prob: float = 0.9
    crossover_eta: float = 15.0
    mutation_prob: float = 0.25  # per variable
    mutation_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.offspring > self.population:
            raise ValueError("offspring count must not exceed the population size")
        if self.eval_budget < self.population:
            raise ValueError("evaluation budget must cover the initial population")


@dataclass(frozen=True)
class Individual:
    design: DesignVector
    yield_value: float
    cost: float
    violation: float
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


@dataclass(frozen=True)
class Generation:
    index: int
    individuals: tuple[Individual, ...]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["yield", "cost", "d1", "d2", "d3", "s", "rank", "crowding", "feasible"])
            for ind in self.individuals:
                writer.writerow(
                    [
                        repr(float(ind.yield_value)),
                        repr(float(ind.cost)),
                        repr(float(ind.design.d1)),
                        repr(float(ind.design.d2)),
                        repr(float(ind.design.d3)),
                        repr(float(ind.design.s)),
                        ind.rank,
                        repr(float(ind.crowding)),
                        int(ind.feasible),
                    ]
                )


def constrained_dominates(a: Individual, b: Individual) -> bool:
    """Feasible beats infeasible; ties fall back to objective dominance."""
    if a.feasible and not b.feasible:
        return True
    if not a.feasible and b.feasible:
        return False
    if not a.feasible and not b.feasible:
        return a.violation < b.violation
    return (a.yield_value >= b.yield_value and a.cost <= b.cost) and (
        a.yield_value > b.yield_value or a.cost < b.cost
    )


def non_dominated_sort(points, dominates_fn=dominates) -> list[list[int]]:
    """Fast non-dominated sort; returns index fronts, best first."""
    points = list(points)
    n = len(points)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    fronts: list[list[int]] = [[]]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if dominates_fn(points[i], points[j]):
                dominated_by[i].append(j)
            elif dominates_fn(points[j], points[i]):
                counts[i] += 1
        if counts[i] == 0:
            fronts[0].append(i)
    k = 0
    while fronts[k]:
        nxt: list[int] = []
        for i in fronts[k]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(nxt)
        k += 1
    return fronts[:-1]


def crowding_distance(front) -> np.ndarray:
    """Normalized neighbor-gap sums; boundary points get inf."""
    front = list(front)
    n = len(front)
    if n == 0:
        raise ValueError("front must be nonempty")
    objs = np.array([_objectives(p) for p in front])
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        lo, hi = objs[order[0], m], objs[order[-1], m]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        for k in range(1, n - 1):
            dist[order[k]] += (objs[order[k + 1], m] - objs[order[k - 1], m]) / (hi - lo)
    return dist


def _objectives(p) -> tuple[float, float]:
    if isinstance(p, Individual):
        return (p.yield_value, p.cost)
    if isinstance(p, ObjectivePoint):
        return (p.yield_value, p.cost)
    return (float(p[0]), float(p[1]))


def _rank_population(pop: list[Individual]) -> list[Individual]:
    fronts = non_dominated_sort(pop, constrained_dominates)
    ranked = list(pop)
    for r, front in enumerate(fronts, start=1):
        dists = crowding_distance([pop[i] for i in front])
        for pos, i in enumerate(front):
            ranked[i] = replace(pop[i], rank=r, crowding=float(dists[pos]))
    return ranked


def _tournament(pop: list[Individual], rng: np.random.Generator) -> Individual:
    i, j = rng.integers(0, len(pop), size=2)
    a, b = pop[int(i)], pop[int(j)]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if i <= j else b


def _sbx(a: np.ndarray, b: np.ndarray, lo, hi, cfg: GaConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    c1, c2 = a.copy(), b.copy()
    if rng.random() > cfg.crossover_prob:
        return c1, c2
    for j in range(a.shape[0]):
        if rng.random() > 0.5 or abs(a[j] - b[j]) < 1e-14:
            continue
        y1, y2 = min(a[j], b[j]), max(a[j], b[j])
        u = rng.random()
        beta = 1.0 + 2.0 * (y1 - lo[j]) / (y2 - y1)
        alpha = 2.0 - beta ** -(cfg.crossover_eta + 1.0)
        betaq = (
            (u * alpha) ** (1.0 / (cfg.crossover_eta + 1.0))
            if u <= 1.0 / alpha
            else (1.0 / (2.0 - u * alpha)) ** (1.0 / (cfg.crossover_eta + 1.0))
        )
        child1 = 0.5 * ((y1 + y2) - betaq * (y2 - y1))
        beta = 1.0 + 2.0 * (hi[j] - y2) / (y2 - y1)
        alpha = 2.0 - beta ** -(cfg.crossover_eta + 1.0)
        betaq = (
            (u * alpha) ** (1.0 / (cfg.crossover_eta + 1.0))
            if u <= 1.0 / alpha
            else (1.0 / (2.0 - u * alpha)) ** (1.0 / (cfg.crossover_eta + 1.0))
        )
        child2 = 0.5 * ((y1 + y2) + betaq * (y2 - y1))
        if rng.random() <= 0.5:
            child1, child2 = child2, child1
        c1[j] = min(max(child1, lo[j]), hi[j])
        c2[j] = min(max(child2, lo[j]), hi[j])
    return c1, c2


def _polynomial_mutation(x: np.ndarray, lo, hi, cfg: GaConfig, rng) -> np.ndarray:
    y = x.copy()
    for j in range(x.shape[0]):
        if rng.random() > cfg.mutation_prob:
            continue
        span = hi[j] - lo[j]
        if span <= 0:
            continue
        u = rng.random()
        delta1 = (y[j] - lo[j]) / span
        delta2 = (hi[j] - y[j]) / span
        mut_pow = 1.0 / (cfg.mutation_eta + 1.0)
        if u < 0.5:
            xy = 1.0 - delta1
            val = 2.0 * u + (1.0 - 2.0 * u) * xy ** (cfg.mutation_eta + 1.0)
            deltaq = val**mut_pow - 1.0
        else:
            xy = 1.0 - delta2
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy ** (cfg.mutation_eta + 1.0)
            deltaq = 1.0 - val**mut_pow
        y[j] = min(max(y[j] + deltaq * span, lo[j]), hi[j])
    return y


def nsga2_run(
    problem: YieldProblem,
    cfg: GaConfig,
    evaluator: YieldEvaluator | None = None,
) -> tuple[ParetoArchive, list[Generation]]:
    """Evolve until the yield-estimation budget is spent.

    Returns the archive of all feasible evaluated designs (its ``front()``
    is the result) and per-generation population snapshots.
    """
    ev = evaluator or YieldEvaluator(problem, cfg.seed)
    rng = np.random.Generator(np.random.Philox(key=derive_seed(cfg.seed, 11)))
    lo, hi = problem.constraints.feasible_box()
    anchor = 0.5 * (lo + hi)
    A, b = problem.constraints.as_matrix()
    estimates = 0
    archive = ParetoArchive()

    def make_individual(xarr: np.ndarray) -> Individual:
        nonlocal estimates
        x = DesignVector.from_array(xarr)
        report = check_constraints(x, problem.constraints)
        if not report.feasible:
            return Individual(x, 0.0, cost(x), violation=report.total_violation)
        y = ev.yield_at(x)
        estimates += 1
        ind = Individual(x, y, cost(x), violation=0.0)
        archive.add(ObjectivePoint(y, ind.cost, x, provenance={"n_estimate": estimates}))
        return ind

    def pull_feasible(xarr: np.ndarray) -> np.ndarray:
        d = xarr - anchor
        grow = A @ d
        s = b - A @ anchor
        t = 1.0
        for gr, sl in zip(grow, s):
            if gr > 1e-15:
                t = min(t, 0.999 * sl / gr)
        return anchor + max(t, 0.0) * d

    init = latin_hypercube(cfg.population, 4, derive_seed(cfg.seed, 12))
    pop = [make_individual(pull_feasible(lo + u * (hi - lo))) for u in init]
    pop = _rank_population(pop)
    snapshots = [Generation(0, tuple(pop))]

    gen = 0
    max_generations = max(1, 5 * cfg.eval_budget // max(1, cfg.offspring))
    while estimates < cfg.eval_budget and gen < max_generations:
        gen += 1
        children: list[Individual] = []
        while len(children) < cfg.offspring and estimates < cfg.eval_budget:
            p1, p2 = _tournament(pop, rng), _tournament(pop, rng)
            c1, c2 = _sbx(p1.design.as_array(), p2.design.as_array(), lo, hi, cfg, rng)
            for c in (c1, c2):
                if len(children) >= cfg.offspring or estimates >= cfg.eval_budget:
                    break
                children.append(make_individual(_polynomial_mutation(c, lo, hi, cfg, rng)))
        combined = pop + children
        fronts = non_dominated_sort(combined, constrained_dominates)
        next_pop: list[Individual] = []
        for front in fronts:
            members = [combined[i] for i in front]
            if len(next_pop) + len(members) <= cfg.population:
                next_pop.extend(members)
            else:
                dists = crowding_distance(members)
                order = sorted(range(len(members)), key=lambda k: (-dists[k], k))
                next_pop.extend(members[k] for k in order[: cfg.population - len(next_pop)])
                break
        pop = _rank_population(next_pop)
        snapshots.append(Generation(gen, tuple(pop)))
    return archive, snapshots
