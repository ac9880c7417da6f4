"""Uniform sampling, plain Monte Carlo yield estimation, and sample sizing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .problem import DesignVector, PerformanceSpec, QoiError, QoiModel, UncertaintySpec


class SampleEvaluationError(QoiError):
    """A QoI evaluation failed for one sample; carries the sample index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"QoI evaluation failed at sample index {index}: {cause}")
        self.index = index


def derive_seed(seed: int, stream: int) -> int:
    """Deterministic child seed for an independent sampling stream."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass(frozen=True)
class SampleSet:
    """A fixed, reproducible set of uncertain-parameter realizations."""

    seed: int
    points: np.ndarray
    labels: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.labels)
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @staticmethod
    def from_csv(path, seed: int = -1) -> "SampleSet":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            labels = tuple(next(reader))
            points = np.array([[float(v) for v in row] for row in reader])
        return SampleSet(seed=seed, points=points, labels=labels)


def sample_uniform(spec: UncertaintySpec, n: int, seed: int) -> SampleSet:
    """Draw ``n`` points, coordinate i uniform on [mean_i - r_i, mean_i + r_i].

    Uses the counter-based Philox generator, so the full point set is a pure
    function of (spec, n, seed) regardless of how it is later consumed.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((n, spec.dimension))
    points = spec.means + (2.0 * u - 1.0) * spec.half_widths
    return SampleSet(seed=seed, points=points, labels=tuple(spec.labels))


def latin_hypercube(n: int, dim: int, seed: int) -> np.ndarray:
    """(n, dim) Latin hypercube sample of the unit cube, one point per stratum."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((n, dim))
    out = np.empty((n, dim))
    for j in range(dim):
        out[:, j] = (rng.permutation(n) + u[:, j]) / n
    return out


@dataclass(frozen=True)
class YieldEstimate:
    """Fraction of samples inside the safe domain, with MC accounting."""

    value: float
    n_samples: int
    n_accepted: int
    sigma: float
    classifications: np.ndarray  # bool per sample, True = accepted
    eval_accounting: tuple[int, int]  # (n_blackbox, n_surrogate)


def mc_sigma(y: float, n: int) -> float:
    """Standard deviation of the MC yield estimator, sqrt(y(1-y)/n)."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"yield must lie in [0, 1], got {y}")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    return math.sqrt(y * (1.0 - y) / n)


def sample_size_for(sigma_target: float) -> int:
    """Samples needed so the worst-case estimator deviation 0.5/sqrt(n) meets the target."""
    if not 0.0 < sigma_target <= 0.5:
        raise ValueError(f"sigma target must lie in (0, 0.5], got {sigma_target}")
    return math.ceil(1.0 / (2.0 * sigma_target) ** 2)


def _evaluate_all(model: QoiModel, x: DesignVector, points: np.ndarray) -> np.ndarray:
    batch = getattr(model, "evaluate_batch", None)
    if batch is not None:
        try:
            return np.asarray(batch(x, points), dtype=float)
        except ValueError:
            raise
        except Exception:
            pass  # fall through to locate the offending sample
    out = np.empty(points.shape[0])
    for i, p in enumerate(points):
        try:
            out[i] = model.evaluate(x, p)
        except Exception as exc:
            raise SampleEvaluationError(i, exc) from exc
    return out


def mc_yield(model: QoiModel, x: DesignVector, samples: SampleSet, pfs: PerformanceSpec) -> YieldEstimate:
    """Classify every sample on the blackbox and return the acceptance fraction."""
    if samples.n < 1:
        raise ValueError("sample set is empty")
    q = _evaluate_all(model, x, samples.points)
    if pfs.direction == "at_most":
        accepted = q <= pfs.threshold
    else:
        accepted = q >= pfs.threshold
    n_acc = int(np.count_nonzero(accepted))
    value = n_acc / samples.n
    return YieldEstimate(
        value=value,
        n_samples=samples.n,
        n_accepted=n_acc,
        sigma=mc_sigma(value, samples.n),
        classifications=accepted,
        eval_accounting=(samples.n, 0),
    )
