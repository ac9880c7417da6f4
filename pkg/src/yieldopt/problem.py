"""Designs, uncertain parameters, performance specs, and QoI models."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import constants


class QoiError(Exception):
    """Base class for quantity-of-interest evaluation failures."""


@dataclass(frozen=True)
class UncertainParameter:
    mean: float
    half_width: float
    label: str

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be > 0, got {self.half_width} for {self.label!r}")


@dataclass(frozen=True)
class UncertaintySpec:
    """Per-parameter uniform distributions, each mean +- half_width."""

    entries: tuple[UncertainParameter, ...]

    @property
    def dimension(self) -> int:
        return len(self.entries)

    @property
    def means(self) -> np.ndarray:
        return np.array([e.mean for e in self.entries])

    @property
    def half_widths(self) -> np.ndarray:
        return np.array([e.half_width for e in self.entries])

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]


def default_pmsm_uncertainty() -> UncertaintySpec:
    """Magnet remanence and field-angle tolerances of the six magnets."""
    entries = [
        UncertainParameter(constants.BR_NOMINAL_T, constants.BR_HALF_WIDTH_T, f"br_{i + 1}")
        for i in range(constants.N_MAGNETS)
    ]
    entries += [
        UncertainParameter(0.0, constants.PHI_HALF_WIDTH_DEG, f"phi_{i + 1}")
        for i in range(constants.N_MAGNETS)
    ]
    return UncertaintySpec(tuple(entries))


@dataclass(frozen=True)
class DesignVector:
    """Deterministic design: magnet surface d1 x d2, depth d3 (mm), skew s (deg)."""

    d1: float
    d2: float
    d3: float
    s: float

    def __post_init__(self):
        for name in ("d1", "d2", "d3", "s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"design component {name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.d1, self.d2, self.d3, self.s])

    @staticmethod
    def from_array(a) -> "DesignVector":
        a = np.asarray(a, dtype=float)
        if a.shape != (4,):
            raise ValueError(f"design vector must have 4 components, got shape {a.shape}")
        return DesignVector(*(float(v) for v in a))


def nominal_design() -> DesignVector:
    return DesignVector(*constants.NOMINAL_DESIGN)


def cost(x: DesignVector) -> float:
    """Magnet surface d1*d2 in mm^2, the proxy for material cost."""
    return x.d1 * x.d2


@dataclass(frozen=True)
class DesignConstraints:
    """Componentwise bounds plus linear coupling rows over (d1, d2, d3, s).

    Every row is interpreted non-strictly; a design sitting exactly on a
    bound is feasible.
    """

    lower_bounds: tuple[float, float, float, float] = constants.DESIGN_LOWER_BOUNDS
    d3_upper: float = constants.D3_UPPER
    s_upper: float = constants.S_UPPER
    linear_rows: tuple[tuple[tuple[float, float, float, float], float], ...] = (
        ((0.0, 1.0, 1.0, 0.0), 15.0),
        ((3.0, 0.0, -2.0, 0.0), 50.0),
    )

    def as_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """All rows in ``A x <= b`` form (lower bounds become -x_i <= -lb_i)."""
        rows, rhs = [], []
        for i in range(4):
            e = np.zeros(4)
            e[i] = -1.0
            rows.append(e)
            rhs.append(-self.lower_bounds[i])
        e3 = np.zeros(4)
        e3[2] = 1.0
        rows.append(e3)
        rhs.append(self.d3_upper)
        e4 = np.zeros(4)
        e4[3] = 1.0
        rows.append(e4)
        rhs.append(self.s_upper)
        for coeffs, bound in self.linear_rows:
            rows.append(np.asarray(coeffs, dtype=float))
            rhs.append(bound)
        return np.array(rows), np.array(rhs)

    def feasible_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise extent of the feasible polytope.

        Lower bounds are given directly; each upper bound is found by a tiny
        LP maximizing that coordinate over the polytope.  Deterministic.
        """
        A, b = self.as_matrix()
        lo = np.array(self.lower_bounds)
        hi = np.empty(4)
        for i in range(4):
            c = np.zeros(4)
            c[i] = -1.0
            res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * 4, method="highs")
            if not res.success:
                raise ValueError(f"feasible set is empty or unbounded in coordinate {i}")
            hi[i] = res.x[i]
        return lo, hi


@dataclass(frozen=True)
class FeasibilityReport:
    """Per-row slack values; a design is feasible iff every slack >= 0."""

    rows: tuple[tuple[str, float], ...]

    @property
    def feasible(self) -> bool:
        return all(slack >= 0.0 for _, slack in self.rows)

    @property
    def min_slack(self) -> float:
        return min(slack for _, slack in self.rows)

    @property
    def total_violation(self) -> float:
        return sum(max(0.0, -slack) for _, slack in self.rows)


def check_constraints(x: DesignVector, c: DesignConstraints) -> FeasibilityReport:
    """Slack of every constraint row at ``x`` (>= 0 means satisfied)."""
    v = x.as_array()
    names = ["d1_lb", "d2_lb", "d3_lb", "s_lb"]
    rows = [(names[i], float(v[i] - c.lower_bounds[i])) for i in range(4)]
    rows.append(("d3_ub", float(c.d3_upper - x.d3)))
    rows.append(("s_ub", float(c.s_upper - x.s)))
    for k, (coeffs, bound) in enumerate(c.linear_rows):
        rows.append((f"row_{k}", float(bound - np.dot(coeffs, v))))
    return FeasibilityReport(tuple(rows))


@dataclass(frozen=True)
class PerformanceSpec:
    """One inequality requirement on the QoI: Q <= c or Q >= c."""

    threshold: float
    direction: str = "at_least"

    def __post_init__(self):
        if self.direction not in ("at_most", "at_least"):
            raise ValueError(f"direction must be 'at_most' or 'at_least', got {self.direction!r}")

    def is_satisfied(self, q: float) -> bool:
        if self.direction == "at_most":
            return q <= self.threshold
        return q >= self.threshold

    def canonical(self) -> tuple[float, float]:
        """(sign, c') such that the spec reads ``sign*Q <= c'``.

        An at-least requirement is folded into the canonical at-most form by
        negating both the QoI and the threshold.
        """
        if self.direction == "at_most":
            return 1.0, self.threshold
        return -1.0, -self.threshold


class QoiModel:
    """Deterministic blackbox Q(x, p) with an evaluation counter.

    Implementations must be safe to call from several workers at once;
    ``evaluation_count`` increments by exactly one per ``evaluate`` call.
    """

    def evaluate(self, x: DesignVector, p: np.ndarray) -> float:
        raise NotImplementedError

    @property
    def evaluation_count(self) -> int:
        raise NotImplementedError


class SyntheticPmsm(QoiModel):
    """Closed-form average-torque model; see ``constants`` for the formula.

    Stateless apart from the evaluation counter, so concurrent evaluation is
    safe.  ``evaluate_batch`` vectorizes over sample points and counts one
    evaluation per row.
    """

    def __init__(self, tau_nominal: float = constants.TAU_NOMINAL):
        self.tau_nominal = tau_nominal
        self._count = 0
        self._lock = threading.Lock()

    @property
    def evaluation_count(self) -> int:
        return self._count

    def evaluate(self, x: DesignVector, p: np.ndarray) -> float:
        p = np.asarray(p, dtype=float)
        if p.shape != (12,):
            raise ValueError(f"uncertain vector must have 12 components, got shape {p.shape}")
        with self._lock:
            self._count += 1
        return float(self._torque(x, p[np.newaxis, :])[0])

    def evaluate_batch(self, x: DesignVector, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[1] != 12:
            raise ValueError(f"sample array must have shape (n, 12), got {P.shape}")
        with self._lock:
            self._count += P.shape[0]
        return self._torque(x, P)

    def _torque(self, x: DesignVector, P: np.ndarray) -> np.ndarray:
        g = (x.d1 * x.d2) / (constants.NOMINAL_DESIGN[0] * constants.NOMINAL_DESIGN[1])
        ref = 1.0 - math.exp(-constants.NOMINAL_DESIGN[2] / constants.D3_SAT_MM)
        sat = (1.0 - math.exp(-x.d3 / constants.D3_SAT_MM)) / ref
        t = 0.5 * constants.N_PP * math.radians(x.s)
        skew = math.sin(t) / t if t != 0.0 else 1.0
        br = P[:, : constants.N_MAGNETS] / constants.BR_NOMINAL_T
        phi = np.deg2rad(P[:, constants.N_MAGNETS :])
        mf = np.mean(br * np.cos(phi), axis=1)
        return self.tau_nominal * g * sat * skew * mf
