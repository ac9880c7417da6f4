"""Surrogate-accelerated yield estimation.

Monte Carlo samples are classified on the GPR surrogate whenever its
confidence band clears the threshold; samples whose band straddles the
threshold ("critical" samples) are re-evaluated on the blackbox, and each
such evaluation is folded into the surrogate before the next sample is
looked at.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gpr import DuplicateInputError, GprModel
from .montecarlo import SampleSet, YieldEstimate, derive_seed, mc_sigma
from .problem import (
    DesignConstraints,
    DesignVector,
    PerformanceSpec,
    QoiModel,
    UncertaintySpec,
)

SURROGATE_ACCEPT = "surrogate-accept"
SURROGATE_REJECT = "surrogate-reject"
CRITICAL = "critical"


@dataclass(frozen=True)
class HybridConfig:
    gamma: float = 2.0
    n_train_initial: int = 20
    mc_samples: int = 2500
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("safety factor gamma must be > 0")


@dataclass(frozen=True)
class HybridReport:
    estimate: YieldEstimate
    n_train: int
    n_online: int
    n_gpr: int
    n_tot: int
    trace: tuple[tuple[int, str, float], ...]  # (sample index, decision, sigma_gpr)
    surrogate: GprModel

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "decision", "sigma_gpr", "cumulative_n_online"])
            online = 0
            for index, decision, sigma in self.trace:
                if decision == CRITICAL:
                    online += 1
                writer.writerow([index, decision, repr(float(sigma)), online])


class HybridEvaluationError(Exception):
    """Blackbox failure during a hybrid run; carries the partial trace."""

    def __init__(self, index: int, cause: Exception, trace):
        super().__init__(f"blackbox evaluation failed at sample index {index}: {cause}")
        self.index = index
        self.trace = tuple(trace)


def classify(pred_mean: float, pred_std: float, c: float, gamma: float) -> str:
    """Label one sample from the surrogate's confidence band (canonical <= form)."""
    if pred_std < 0:
        raise ValueError("predictive standard deviation must be >= 0")
    if gamma <= 0:
        raise ValueError("safety factor gamma must be > 0")
    if pred_mean + gamma * pred_std <= c:
        return SURROGATE_ACCEPT
    if pred_mean - gamma * pred_std >= c:
        return SURROGATE_REJECT
    return CRITICAL


def estimate_yield_hybrid(
    model: QoiModel,
    gpr0,
    x: DesignVector,
    samples: SampleSet,
    pfs: PerformanceSpec,
    cfg: HybridConfig,
) -> HybridReport:
    """Run the hybrid pass over ``samples`` in index order.

    ``gpr0`` may be any object with ``predict_batch`` and ``update``; the
    returned report carries the surrogate in its final (updated) state.
    """
    n = samples.n
    sign, c = pfs.canonical()
    Y = np.hstack([np.tile(x.as_array(), (n, 1)), samples.points])
    accepted = np.zeros(n, dtype=bool)
    trace: list[tuple[int, str, float]] = []
    surrogate = gpr0
    i = 0
    while i < n:
        means, stds = surrogate.predict_batch(Y[i:])
        canon = sign * means
        critical_at = None
        for k in range(n - i):
            decision = classify(float(canon[k]), float(stds[k]), c, cfg.gamma)
            if decision == CRITICAL:
                critical_at = i + k
                break
            trace.append((i + k, decision, float(stds[k])))
            accepted[i + k] = decision == SURROGATE_ACCEPT
        if critical_at is None:
            break
        j = critical_at
        try:
            q_true = model.evaluate(x, samples.points[j])
        except Exception as exc:
            raise HybridEvaluationError(j, exc, trace) from exc
        trace.append((j, CRITICAL, float(stds[j - i])))
        accepted[j] = pfs.is_satisfied(q_true)
        try:
            surrogate = surrogate.update(Y[j], q_true)
        except DuplicateInputError:
            pass  # keep the blackbox classification, skip the ill-conditioned update
        i = j + 1

    n_online = sum(1 for _, d, _ in trace if d == CRITICAL)
    n_acc = int(np.count_nonzero(accepted))
    value = n_acc / n
    estimate = YieldEstimate(
        value=value,
        n_samples=n,
        n_accepted=n_acc,
        sigma=mc_sigma(value, n),
        classifications=accepted,
        eval_accounting=(n_online, n - n_online),
    )
    return HybridReport(
        estimate=estimate,
        n_train=gpr0.n_train if hasattr(gpr0, "n_train") else 0,
        n_online=n_online,
        n_gpr=n - n_online,
        n_tot=(gpr0.n_train if hasattr(gpr0, "n_train") else 0) + n_online,
        trace=tuple(trace),
        surrogate=surrogate,
    )


def build_initial_training(
    spec: UncertaintySpec,
    constraints: DesignConstraints,
    x_box,
    n: int,
    seed: int,
    model: QoiModel,
    case: str = "joint",
    x_fixed: DesignVector | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``n`` training points on the blackbox.

    ``case="joint"`` draws both the design and the uncertain parameters
    uniformly over their boxes (the default, matching how designs move
    during optimization); ``case="nominal"`` keeps the design fixed at
    ``x_fixed`` and varies only the uncertain parameters.
    """
    if n < 2:
        raise ValueError("need at least 2 training points")
    if case not in ("joint", "nominal"):
        raise ValueError(f"unknown training case {case!r}")
    lo, hi = x_box if x_box is not None else constraints.feasible_box()
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("design box is infeasible (lower bound above upper bound)")
    rng = np.random.Generator(np.random.Philox(key=derive_seed(seed, 1)))
    if case == "joint":
        X = lo + rng.random((n, 4)) * (hi - lo)
    else:
        if x_fixed is None:
            raise ValueError("case='nominal' requires x_fixed")
        X = np.tile(x_fixed.as_array(), (n, 1))
    P = spec.means + (2.0 * rng.random((n, spec.dimension)) - 1.0) * spec.half_widths
    inputs = np.hstack([X, P])
    outputs = np.array(
        [model.evaluate(DesignVector.from_array(X[i]), P[i]) for i in range(n)]
    )
    return inputs, outputs
