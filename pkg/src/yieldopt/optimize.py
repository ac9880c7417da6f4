"""Derivative-free constrained optimization of scalarized yield problems.

The solver is a linear-interpolation trust-region method: it keeps a
simplex of evaluated designs, builds linear models of the objective and of
any nonlinear constraints from it, and takes steps by solving a small LP
inside an infinity-norm trust region.  Linear design constraints are hard
rows of the LP, so every accepted iterate satisfies them exactly;
nonlinear constraints enter through their linearizations and an exact
penalty on the residual violation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import constants
from .evaluator import ScalarizedObjective, YieldEvaluator, YieldProblem
from .montecarlo import derive_seed, latin_hypercube
from .problem import DesignConstraints, DesignVector, check_constraints, cost

TERMINATED_TRUST_REGION = "trust_region"
TERMINATED_DELTA_F = "delta_f"
TERMINATED_MAX_FEV = "max_fev"

DEFAULT_BUDGET = 100  # per-run cap on objective evaluations
RADIUS_INITIAL = 0.15  # in box-standardized coordinates
RADIUS_MIN = 1e-6  # final accuracy tracks ~10x this radius
DELTA_F_TOL = 1e-4
CONSTRAINT_TOL = 1e-8


class InfeasibleStartError(ValueError):
    pass


class BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class OptimRecord:
    n_fev: int
    design: DesignVector
    objective: float
    yield_value: float | None
    cost: float
    feasible: bool
    fidelity: str = "high"
    phase: str = "main"


@dataclass
class OptimRun:
    history: list[OptimRecord]
    best_design: DesignVector
    best_objective: float
    terminated_by: str
    n_fev: int
    evaluator: YieldEvaluator | None = None
    final_yield: float | None = None  # fresh estimate at best_design after the run
    final_cost: float | None = None

    def history_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_fev", "phase", "fidelity", "yield", "cost", "objective", "d1", "d2", "d3", "s"])
            for r in self.history:
                writer.writerow(
                    [
                        r.n_fev,
                        r.phase,
                        r.fidelity,
                        "" if r.yield_value is None else repr(float(r.yield_value)),
                        repr(float(r.cost)),
                        repr(float(r.objective)),
                        repr(float(r.design.d1)),
                        repr(float(r.design.d2)),
                        repr(float(r.design.d3)),
                        repr(float(r.design.s)),
                    ]
                )


def delta_f(history_tail) -> float:
    """Deviation of the newest value from the mean of the previous four."""
    vals = [float(v) for v in history_tail]
    if len(vals) < 5:
        raise ValueError("need at least 5 recorded objective values")
    vals = vals[-5:]
    return abs(sum(vals[:4]) / 4.0 - vals[4])


@dataclass
class MultiStartConfig:
    n_starts: int = 5
    exploration_fev: int = 12
    low_fidelity_mc: int = 100
    high_fidelity_mc: int = 2500
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.exploration_fev < 1:
            raise ValueError("exploration_fev must be >= 1")
        if not self.low_fidelity_mc < self.high_fidelity_mc:
            raise ValueError("low fidelity must use fewer samples than high fidelity")


class _Workspace:
    """Box-standardized view of the design polytope for one solver run."""

    def __init__(self, constraints: DesignConstraints, nonlinear_constraints):
        self.constraints = constraints
        self.nonlinear = list(nonlinear_constraints)
        self.lo, hi = constraints.feasible_box()
        self.span = hi - self.lo
        A, b = constraints.as_matrix()
        self.A = A * self.span  # rows act on z = (x - lo) / span
        self.b = b - A @ self.lo

    def to_x(self, z: np.ndarray) -> DesignVector:
        return DesignVector.from_array(self.lo + z * self.span)

    def to_z(self, x: DesignVector) -> np.ndarray:
        return (x.as_array() - self.lo) / self.span

    def slack(self, z: np.ndarray) -> np.ndarray:
        return self.b - self.A @ z

    def pull_inside(self, z_from: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Largest feasible step from a feasible point along d (caps rounding spill)."""
        grow = self.A @ d
        s = self.slack(z_from)
        t = 1.0
        for g, sl in zip(grow, s):
            if g > 1e-15:
                t = min(t, sl / g)
        return z_from + max(t, 0.0) * d

    def violation(self, x: DesignVector) -> float:
        return float(sum(max(0.0, fn(x)) for fn in self.nonlinear))


def dfo_minimize(
    objective,
    x0: DesignVector,
    constraints: DesignConstraints,
    nonlinear_constraints=(),
    budget: int = DEFAULT_BUDGET,
    initial_radius: float = RADIUS_INITIAL,
    min_radius: float = RADIUS_MIN,
    delta_f_tol: float = DELTA_F_TOL,
    phase: str = "main",
    fidelity: str = "high",
) -> OptimRun:
    """Minimize a blackbox objective over the design polytope.

    ``nonlinear_constraints`` are callables g(x) with g(x) <= 0 feasible.
    Terminates when the trust region collapses below ``min_radius``, when
    the trailing-five objective deviation drops below
    ``delta_f_tol * (1 + |f|)``, or when the evaluation budget is spent.
    """
    dim = 4
    if budget < 2 * dim + 1:
        raise ValueError(f"budget must be at least {2 * dim + 1}")
    ws = _Workspace(constraints, nonlinear_constraints)
    z0 = ws.to_z(x0)
    if ws.slack(z0).min() < -1e-9:
        raise InfeasibleStartError(f"starting design {x0} violates the linear constraints")

    history: list[OptimRecord] = []
    fvals: list[float] = []
    zvals: list[np.ndarray] = []

    def evaluate(z: np.ndarray) -> tuple[float, float]:
        if len(history) >= budget:
            raise BudgetExhausted
        x = ws.to_x(z)
        f = float(objective(x))
        fvals.append(f)
        zvals.append(z)
        metrics = getattr(objective, "last_metrics", None) or {}
        viol = ws.violation(x)
        history.append(
            OptimRecord(
                n_fev=len(history) + 1,
                design=x,
                objective=f,
                yield_value=metrics.get("yield"),
                cost=cost(x),
                feasible=check_constraints(x, constraints).feasible and viol <= CONSTRAINT_TOL,
                fidelity=fidelity,
                phase=phase,
            )
        )
        return f, viol

    def bisect_to_feasible(z_from: np.ndarray) -> np.ndarray | None:
        """Point on the segment toward the best feasible record where the
        nonlinear constraints just hold; None without a feasible anchor."""
        feas = [r for r in history if r.feasible]
        if not feas or ws.violation(ws.to_x(z_from)) <= 0.0:
            return None
        z_anchor = ws.to_z(min(feas, key=lambda r: r.objective).design)
        lo, hi = 0.0, 1.0  # infeasible at z_from, feasible at the anchor
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if ws.violation(ws.to_x(z_from + mid * (z_anchor - z_from))) > 0:
                lo = mid
            else:
                hi = mid
        return z_from + hi * (z_anchor - z_from)

    def restore_feasibility() -> None:
        """One extra evaluation just inside the nonlinear boundary.

        Iterates near a nonlinear constraint tend to land a curvature's
        width outside it (the LP sees only the linearization).  When the
        best point overall is such a near-miss, pull it toward the best
        feasible point until the constraint holds and evaluate there.
        """
        if not ws.nonlinear or len(history) >= budget:
            return
        feas = [r for r in history if r.feasible]
        infeas = [r for r in history if not r.feasible]
        if not feas or not infeas:
            return
        best_inf = min(infeas, key=lambda r: r.objective)
        if best_inf.objective >= min(feas, key=lambda r: r.objective).objective:
            return
        z_r = bisect_to_feasible(ws.to_z(best_inf.design))
        if z_r is None:
            return
        try:
            evaluate(z_r)
        except BudgetExhausted:
            pass

    def finish(reason: str) -> OptimRun:
        restore_feasibility()
        feasible_records = [r for r in history if r.feasible]
        pool = feasible_records if feasible_records else history
        best = min(pool, key=lambda r: r.objective)
        return OptimRun(
            history=history,
            best_design=best.design,
            best_objective=best.objective,
            terminated_by=reason,
            n_fev=len(history),
        )

    mu = 1.0  # exact-penalty weight on nonlinear violation

    points: list[tuple[np.ndarray, float, float]] = []  # every evaluation (z, f, violation)

    def evaluate_logged(z: np.ndarray) -> tuple[float, float]:
        f, v = evaluate(z)
        points.append((z.copy(), f, v))
        return f, v

    def nearby(z_b: np.ndarray, radius: float):
        """Most recent evaluations inside 3 trust radii of the incumbent."""
        sel = [
            (z, f, v)
            for z, f, v in reversed(points)
            if 1e-12 < np.abs(z - z_b).max() <= 3.0 * radius
        ]
        return sel[: 3 * dim]

    try:
        f_b, v_b = evaluate_logged(z0)
        z_b = z0
        rho = initial_radius  # resolution: only decreases, and only after failure at scale
        delta = initial_radius  # trust radius: delta >= rho always
        stall = 0

        fail_count = 0

        def contract() -> None:
            # Two consecutive failures at a scale before giving it up: one
            # failed step is weak evidence when estimates carry noise.
            nonlocal rho, delta, fail_count
            fail_count += 1
            if fail_count < 2:
                return
            fail_count = 0
            if delta > rho * 1.0000001:
                delta = max(delta * 0.5, rho)
            else:
                rho *= 0.5
                delta = rho

        def handle_stall() -> None:
            """After a non-improving outcome: restoration, then penalty growth."""
            nonlocal z_b, f_b, v_b, stall, mu
            stall += 1
            if stall < 2:
                return
            if ws.nonlinear and v_b > CONSTRAINT_TOL:
                z_r = bisect_to_feasible(z_b)
                if z_r is not None and not any(
                    np.abs(z_r - z).max() < 1e-9 for z, _, _ in points
                ):
                    f_r, v_r = evaluate_logged(z_r)
                    if f_r + mu * v_r < f_b + mu * v_b - 1e-12:
                        z_b, f_b, v_b = z_r, f_r, v_r
                        stall = 0
                        return
                if mu < 1e6:
                    mu *= 5.0
                stall = 0

        while True:
            if rho < min_radius:
                return finish(TERMINATED_TRUST_REGION)
            if (
                len(fvals) >= max(5, dim + 2)
                and delta_f(fvals) < delta_f_tol * (1.0 + abs(fvals[-1]))
                and _clustered(zvals, fvals, delta)
                and (
                    delta <= 20.0 * min_radius
                    or (_plateau(fvals) and rho <= initial_radius / 8.0)
                )
            ):
                return finish(TERMINATED_DELTA_F)

            sel = nearby(z_b, delta)
            M = np.array([z - z_b for z, _, _ in sel]).reshape(len(sel), dim)
            poll_dir = _degenerate_direction(M / delta)
            if poll_dir is not None:
                # The nearby set spans fewer than `dim` directions; spend one
                # evaluation restoring the geometry instead of stepping.
                cand = ws.pull_inside(z_b, delta * poll_dir)
                if np.abs(cand - z_b).max() < 1e-3 * delta:
                    cand = ws.pull_inside(z_b, -delta * poll_dir)
                if any(np.abs(cand - z).max() < 1e-9 for z, _, _ in points):
                    contract()
                    handle_stall()
                    continue
                f, v = evaluate_logged(cand)
                if f + mu * v < f_b + mu * v_b - 1e-12:
                    z_b, f_b, v_b = cand, f, v
                continue

            rhs_f = np.array([f - f_b for _, f, _ in sel])
            g = np.linalg.lstsq(M, rhs_f, rcond=None)[0]

            n_nl = len(ws.nonlinear)
            cons_vals = np.zeros(n_nl)
            cons_grads = np.zeros((n_nl, dim))
            if n_nl:
                x_b = ws.to_x(z_b)
                cons_vals = np.array([fn(x_b) for fn in ws.nonlinear])
                rhs_c = np.array([[fn(ws.to_x(z)) for fn in ws.nonlinear] for z, _, _ in sel]) - cons_vals
                cons_grads = np.linalg.lstsq(M, rhs_c, rcond=None)[0].T

            d = _trust_region_step(ws, z_b, g, cons_vals, cons_grads, delta, mu)
            if float(np.abs(d).max()) < 1e-3 * delta:
                contract()
                continue

            z_new = ws.pull_inside(z_b, d)
            if any(np.abs(z_new - z).max() < 1e-9 for z, _, _ in points):
                contract()  # proposal duplicates an evaluated point
                handle_stall()
                continue
            f_new, v_new = evaluate_logged(z_new)
            if f_new + mu * v_new < f_b + mu * v_b - 1e-12:
                z_b, f_b, v_b = z_new, f_new, v_new
                if float(np.abs(d).max()) >= 0.9 * delta:
                    delta = min(delta * 1.5, 0.5)
                stall = 0
                fail_count = 0
            else:
                contract()
                handle_stall()
    except BudgetExhausted:
        return finish(TERMINATED_MAX_FEV)


def _degenerate_direction(M_normalized: np.ndarray) -> np.ndarray | None:
    """Unit direction missing from the row space of M, or None if well posed."""
    dim = M_normalized.shape[1]
    if M_normalized.shape[0] < dim:
        if M_normalized.shape[0] == 0:
            e = np.zeros(dim)
            e[0] = 1.0
            return e
        _, s, vt = np.linalg.svd(M_normalized, full_matrices=True)
        return vt[-1]
    _, s, vt = np.linalg.svd(M_normalized, full_matrices=False)
    if s[-1] < 0.05:
        return vt[-1]
    return None


def _clustered(zvals, fvals, radius) -> bool:
    """True when the last five evaluations sit within 2*radius of the best one.

    Keeps the trailing-difference rule from firing while the solver still
    polls far apart; near convergence the evaluations collapse together and
    the rule regains its meaning as a stationarity signal.
    """
    tail_z = zvals[-5:]
    tail_f = fvals[-5:]
    z_best = tail_z[int(np.argmin(tail_f))]
    return all(np.abs(z - z_best).max() <= 2.0 * radius for z in tail_z)


def _plateau(fvals) -> bool:
    """Last five objective values numerically indistinguishable (flat region)."""
    tail = fvals[-5:]
    return max(tail) - min(tail) <= 1e-9 * (1.0 + abs(tail[-1]))


def _trust_region_step(ws, z_b, g, cons_vals, cons_grads, radius, mu) -> np.ndarray:
    """LP step: min g.d + mu*t s.t. linear rows hard, linearized nonlinear <= t."""
    dim = z_b.shape[0]
    n_nl = cons_vals.shape[0]
    slack = ws.slack(z_b)
    if n_nl:
        c = np.concatenate([g, [mu]])
        A_ub = np.vstack(
            [
                np.hstack([ws.A, np.zeros((ws.A.shape[0], 1))]),
                np.hstack([cons_grads, -np.ones((n_nl, 1))]),
            ]
        )
        b_ub = np.concatenate([slack, -cons_vals])
        bounds = [(-radius, radius)] * dim + [(0.0, None)]
    else:
        c = g
        A_ub = ws.A
        b_ub = slack
        bounds = [(-radius, radius)] * dim
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        return np.zeros(dim)
    return res.x[:dim]


def feasible_starts(constraints: DesignConstraints, n: int, seed: int, anchor: DesignVector | None = None):
    """Latin-hypercube starting designs, pulled inside the polytope toward an anchor."""
    lo, hi = constraints.feasible_box()
    if anchor is None:
        anchor = DesignVector.from_array(0.5 * (lo + hi))
        if not check_constraints(anchor, constraints).feasible:
            raise ValueError("box midpoint is infeasible; provide a feasible anchor design")
    A, b = constraints.as_matrix()
    za = anchor.as_array()
    out = []
    for u in latin_hypercube(n, 4, seed):
        x = lo + u * (hi - lo)
        d = x - za
        grow = A @ d
        s = b - A @ za
        t = 1.0
        for gr, sl in zip(grow, s):
            if gr > 1e-15:
                t = min(t, 0.999 * sl / gr)
        out.append(DesignVector.from_array(za + max(t, 0.0) * d))
    return out


def multi_start(
    objective_low,
    objective_high,
    starts,
    constraints: DesignConstraints,
    cfg: MultiStartConfig,
    nonlinear_constraints=(),
) -> OptimRun:
    """Short low-fidelity runs from every start, one long high-fidelity run from the best."""
    usable = [s for s in starts if check_constraints(s, constraints).feasible]
    if not usable:
        raise InfeasibleStartError("all starting designs violate the linear constraints")
    explorations = [
        dfo_minimize(
            objective_low,
            s,
            constraints,
            nonlinear_constraints,
            budget=cfg.exploration_fev,
            phase="exploration",
            fidelity="low",
        )
        for s in usable
    ]
    best_i = int(np.argmin([run.best_objective for run in explorations]))
    exploitation = dfo_minimize(
        objective_high,
        explorations[best_i].best_design,
        constraints,
        nonlinear_constraints,
        budget=cfg.budget,
        phase="exploitation",
        fidelity="high",
    )
    history: list[OptimRecord] = []
    for run in explorations + [exploitation]:
        for r in run.history:
            history.append(
                OptimRecord(
                    n_fev=len(history) + 1,
                    design=r.design,
                    objective=r.objective,
                    yield_value=r.yield_value,
                    cost=r.cost,
                    feasible=r.feasible,
                    fidelity=r.fidelity,
                    phase=r.phase,
                )
            )
    return OptimRun(
        history=history,
        best_design=exploitation.best_design,
        best_objective=exploitation.best_objective,
        terminated_by=exploitation.terminated_by,
        n_fev=len(history),
    )


def solve_eps_constraint(
    problem: YieldProblem,
    c_max: float,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    x0: DesignVector | None = None,
    evaluator: YieldEvaluator | None = None,
) -> OptimRun:
    """Maximize yield subject to cost(x) <= c_max and the linear design rows."""
    if c_max <= 0:
        raise ValueError("c_max must be > 0")
    ev = evaluator or YieldEvaluator(problem, seed)
    objective = ScalarizedObjective(ev, "eps")
    start = x0 or DesignVector(*constants.NOMINAL_DESIGN)
    run = dfo_minimize(
        objective,
        start,
        problem.constraints,
        nonlinear_constraints=[lambda x: cost(x) - c_max],
        budget=budget,
    )
    return _finalize(run, ev)


def solve_weighted_sum(
    problem: YieldProblem,
    w: float,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    x0: DesignVector | None = None,
    evaluator: YieldEvaluator | None = None,
) -> OptimRun:
    """Minimize -yield + w*cost; w = 0 degenerates to pure yield maximization."""
    if w < 0:
        raise ValueError("weight must be >= 0")
    ev = evaluator or YieldEvaluator(problem, seed)
    objective = ScalarizedObjective(ev, "ws", weight=w)
    start = x0 or DesignVector(*constants.NOMINAL_DESIGN)
    run = dfo_minimize(objective, start, problem.constraints, budget=budget)
    return _finalize(run, ev)


def solve_ws_multistart(
    problem: YieldProblem,
    w: float,
    cfg: MultiStartConfig,
    seed: int = 0,
    starts=None,
) -> OptimRun:
    """Weighted-sum optimization with the exploration/exploitation multi-start."""
    ev = YieldEvaluator(
        problem,
        seed,
        fidelities={"high": cfg.high_fidelity_mc, "low": cfg.low_fidelity_mc},
    )
    if starts is None:
        starts = feasible_starts(problem.constraints, cfg.n_starts, derive_seed(seed, 7))
    objective_low = ScalarizedObjective(ev, "ws", weight=w, fidelity="low")
    objective_high = ScalarizedObjective(ev, "ws", weight=w, fidelity="high")
    run = multi_start(objective_low, objective_high, starts, problem.constraints, cfg)
    return _finalize(run, ev)


def _finalize(run: OptimRun, ev: YieldEvaluator) -> OptimRun:
    """Attach a fresh high-fidelity estimate at the chosen design.

    The shared surrogate keeps learning during a run, so histories can hold
    stale yield values from its early state; the reported final yield is
    re-estimated with the surrogate as it stands at the end.
    """
    run.evaluator = ev
    run.final_yield = ev.yield_at(run.best_design, "high")
    run.final_cost = cost(run.best_design)
    return run
