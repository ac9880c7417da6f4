"""Runtime glue: a yield problem plus fixed sample sets and a shared surrogate.

Optimizers need the yield estimate to behave like a deterministic function
of the design, so one sample set per fidelity level is drawn up front and
reused for every estimate (common random numbers).  In hybrid mode a single
surrogate is trained once and then shared and updated across all estimates
of a run, which is what amortizes the blackbox cost over a whole
optimization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gpr
from .hybrid import HybridConfig, HybridReport, build_initial_training, estimate_yield_hybrid
from .montecarlo import SampleSet, YieldEstimate, derive_seed, mc_yield, sample_uniform
from .problem import (
    DesignConstraints,
    DesignVector,
    PerformanceSpec,
    QoiModel,
    SyntheticPmsm,
    UncertaintySpec,
    cost,
    default_pmsm_uncertainty,
)
from . import constants


@dataclass
class YieldProblem:
    model: QoiModel
    uncertainty: UncertaintySpec
    pfs: PerformanceSpec
    constraints: DesignConstraints
    estimator: str = "hybrid"  # "hybrid" or "mc"
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    training_case: str = "joint"
    # Training designs are drawn from a neighborhood of the anchor (this
    # fraction of the feasible box per side, clipped to the box) rather than
    # the whole polytope: the initial surrogate only needs to be good around
    # the starting design, online updates cover the rest.
    training_box_fraction: float = 0.1
    training_anchor: DesignVector | None = None

    def __post_init__(self):
        if self.estimator not in ("hybrid", "mc"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not 0.0 < self.training_box_fraction <= 1.0:
            raise ValueError("training_box_fraction must lie in (0, 1]")

    def training_box(self):
        lo, hi = self.constraints.feasible_box()
        anchor = (self.training_anchor or DesignVector(*constants.NOMINAL_DESIGN)).as_array()
        half = (hi - lo) * self.training_box_fraction / 2.0
        return np.clip(anchor - half, lo, hi), np.clip(anchor + half, lo, hi)


def default_problem(estimator: str = "hybrid", model: QoiModel | None = None, **hybrid_kwargs) -> YieldProblem:
    """The built-in synthetic machine with default tolerances and threshold."""
    return YieldProblem(
        model=model if model is not None else SyntheticPmsm(),
        uncertainty=default_pmsm_uncertainty(),
        pfs=PerformanceSpec(constants.TAU_PFS_DEFAULT, "at_least"),
        constraints=DesignConstraints(),
        estimator=estimator,
        hybrid=HybridConfig(**hybrid_kwargs),
    )


class YieldEvaluator:
    """Deterministic yield estimates at fixed fidelities with shared state.

    Seed streams are derived from the run seed: 1 for the training set (see
    build_initial_training), 100+k for the k-th fidelity sample set.
    """

    def __init__(self, problem: YieldProblem, seed: int, fidelities: dict[str, int] | None = None):
        self.problem = problem
        self.seed = seed
        if fidelities is None:
            fidelities = {"high": problem.hybrid.mc_samples}
        self.samples: dict[str, SampleSet] = {
            name: sample_uniform(problem.uncertainty, n, derive_seed(seed, 100 + k))
            for k, (name, n) in enumerate(sorted(fidelities.items()))
        }
        self.n_train = 0
        self.n_online = 0
        self.n_estimates: dict[str, int] = {name: 0 for name in self.samples}
        self.calls: list[tuple[str, DesignVector, float]] = []
        self.surrogate: gpr.GprModel | None = None
        self.last_report: HybridReport | None = None
        if problem.estimator == "hybrid":
            inputs, outputs = build_initial_training(
                problem.uncertainty,
                problem.constraints,
                problem.training_box(),
                problem.hybrid.n_train_initial,
                seed,
                problem.model,
                case=problem.training_case,
                x_fixed=None if problem.training_case == "joint" else nominal_from(problem),
            )
            self.n_train = problem.hybrid.n_train_initial
            self.surrogate = gpr.fit(inputs, outputs)

    def estimate(self, x: DesignVector, fidelity: str = "high") -> YieldEstimate:
        samples = self.samples[fidelity]
        if self.problem.estimator == "mc":
            est = mc_yield(self.problem.model, x, samples, self.problem.pfs)
            self.n_online += samples.n
        else:
            report = estimate_yield_hybrid(
                self.problem.model, self.surrogate, x, samples, self.problem.pfs, self.problem.hybrid
            )
            self.surrogate = report.surrogate
            self.n_online += report.n_online
            self.last_report = report
            est = report.estimate
        self.n_estimates[fidelity] += 1
        self.calls.append((fidelity, x, est.value))
        return est

    def yield_at(self, x: DesignVector, fidelity: str = "high") -> float:
        return self.estimate(x, fidelity).value

    @property
    def fe_offline(self) -> int:
        return self.n_train

    @property
    def fe_online(self) -> int:
        return self.n_online

    @property
    def fe_total(self) -> int:
        return self.n_train + self.n_online

    def accounting(self) -> str:
        """Blackbox usage in 'offline + online = total' form."""
        return f"{self.fe_offline} + {self.fe_online} = {self.fe_total}"


def nominal_from(problem: YieldProblem) -> DesignVector:
    return DesignVector(*constants.NOMINAL_DESIGN)


class ScalarizedObjective:
    """Design objective fed to the optimizer; remembers its last metrics.

    mode "ws": -yield + w*cost (weight may be 0 for pure yield maximization);
    mode "eps": -yield (the cost bound is handled as a constraint).
    """

    def __init__(self, evaluator: YieldEvaluator, mode: str, weight: float = 0.0, fidelity: str = "high"):
        if mode not in ("ws", "eps"):
            raise ValueError(f"unknown objective mode {mode!r}")
        if weight < 0:
            raise ValueError("weight must be >= 0")
        self.evaluator = evaluator
        self.mode = mode
        self.weight = weight
        self.fidelity = fidelity
        self.last_metrics: dict | None = None

    def __call__(self, x: DesignVector) -> float:
        y = self.evaluator.yield_at(x, self.fidelity)
        c = cost(x)
        value = -y if self.mode == "eps" else -y + self.weight * c
        self.last_metrics = {"yield": y, "cost": c, "fidelity": self.fidelity}
        return value
