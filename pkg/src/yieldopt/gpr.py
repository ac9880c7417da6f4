"""Gaussian process regression over joint (design, uncertainty) inputs.

Noise-free RBF-kernel regression with the training-output mean as prior
mean.  Inputs are standardized per coordinate (zero mean, unit range)
before distances are computed, since the coordinates mix mm, T, and
degrees.  A fitted model is immutable; ``update`` returns a new model with
the Cholesky factor extended by one rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

SNAPSHOT_VERSION = 1

# Near-duplicate threshold on standardized distances; closer pairs make the
# kernel matrix numerically singular.
DUPLICATE_TOL = 1e-9


class GprError(Exception):
    pass


class DuplicateInputError(GprError):
    """Two training inputs coincide after standardization."""


class FactorizationError(GprError):
    """Kernel matrix stayed indefinite beyond the maximum jitter."""


def rbf_kernel(y: np.ndarray, y2: np.ndarray, zeta: float, l: float) -> float:
    """Squared-exponential covariance zeta^2 * exp(-|y - y2|^2 / (2 l^2))."""
    if zeta <= 0 or l <= 0:
        raise ValueError("kernel hyperparameters must be positive")
    d2 = float(np.sum((np.asarray(y, dtype=float) - np.asarray(y2, dtype=float)) ** 2))
    return zeta**2 * math.exp(-d2 / (2.0 * l**2))


@dataclass(frozen=True)
class GprConfig:
    zeta: float | None = None  # fixed when given, otherwise selected by LML
    length_scale: float | None = None
    jitter_start_factor: float = 1e-10  # relative to zeta^2
    jitter_max_factor: float = 1e-4
    refresh_every: int = 10  # hyperparameter refit cadence during updates; 0 disables
    refresh_size_cap: int = 400  # beyond this many points, refit only on 25% growth
    center: np.ndarray | None = None  # fixed standardization, otherwise data-driven
    scale: np.ndarray | None = None
    grid_size: int = 7
    refine_rounds: int = 2


@dataclass(frozen=True)
class GprModel:
    train_inputs: np.ndarray
    train_outputs: np.ndarray
    prior_mean: float
    zeta: float
    length_scale: float
    jitter: float
    center: np.ndarray
    scale: np.ndarray
    factor: np.ndarray  # lower-triangular Cholesky factor of K + jitter*I
    alpha: np.ndarray  # (K + jitter*I)^-1 (q - prior_mean)
    config: GprConfig
    updates_since_refit: int = 0
    size_at_refit: int = 0

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    def standardize(self, Y: np.ndarray) -> np.ndarray:
        return (np.asarray(Y, dtype=float) - self.center) / self.scale

    def predict_batch(self, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Ks = self.zeta**2 * np.exp(
            -cdist(self.standardize(Y), self.standardize(self.train_inputs), "sqeuclidean")
            / (2.0 * self.length_scale**2)
        )
        mean = self.prior_mean + Ks @ self.alpha
        v = solve_triangular(self.factor, Ks.T, lower=True)
        var = self.zeta**2 - np.sum(v**2, axis=0)
        return mean, np.sqrt(np.clip(var, 0.0, None))

    def predict(self, y_star: np.ndarray) -> tuple[float, float]:
        mean, std = self.predict_batch(np.asarray(y_star, dtype=float)[np.newaxis, :])
        return float(mean[0]), float(std[0])

    def min_standardized_distance(self, y: np.ndarray) -> float:
        z = self.standardize(np.asarray(y, dtype=float))[np.newaxis, :]
        return float(cdist(z, self.standardize(self.train_inputs)).min())

    def update(self, y_new: np.ndarray, q_new: float) -> "GprModel":
        return update(self, y_new, q_new)

    def save(self, path) -> None:
        np.savez(
            path,
            version=SNAPSHOT_VERSION,
            train_inputs=self.train_inputs,
            train_outputs=self.train_outputs,
            zeta=self.zeta,
            length_scale=self.length_scale,
            jitter=self.jitter,
            center=self.center,
            scale=self.scale,
        )


def load(path, config: GprConfig | None = None) -> GprModel:
    """Rebuild a model from a snapshot; the factorization is recomputed."""
    with np.load(path) as data:
        if int(data["version"]) != SNAPSHOT_VERSION:
            raise GprError(f"unsupported snapshot version {int(data['version'])}")
        cfg = replace(
            config or GprConfig(),
            zeta=float(data["zeta"]),
            length_scale=float(data["length_scale"]),
            center=data["center"],
            scale=data["scale"],
        )
        return fit(data["train_inputs"], data["train_outputs"], cfg)


def _standardization(inputs: np.ndarray, config: GprConfig) -> tuple[np.ndarray, np.ndarray]:
    if config.center is not None and config.scale is not None:
        return np.asarray(config.center, dtype=float), np.asarray(config.scale, dtype=float)
    center = inputs.mean(axis=0)
    span = inputs.max(axis=0) - inputs.min(axis=0)
    span[span == 0.0] = 1.0
    return center, span


def _factorize(D2: np.ndarray, resid: np.ndarray, zeta: float, l: float, config: GprConfig):
    """Cholesky of K + jitter*I with jitter escalation; returns (L, alpha, jitter)."""
    K = zeta**2 * np.exp(-D2 / (2.0 * l**2))
    jitter = config.jitter_start_factor * zeta**2
    max_jitter = config.jitter_max_factor * zeta**2
    while True:
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > max_jitter:
                raise FactorizationError(
                    f"kernel matrix not positive definite up to jitter {max_jitter:g}"
                ) from None
    alpha = cho_solve((L, True), resid)
    return L, alpha, jitter


def _log_marginal_likelihood(D2, resid, zeta, l, config) -> float:
    try:
        L, alpha, _ = _factorize(D2, resid, zeta, l, config)
    except FactorizationError:
        return -np.inf
    n = resid.shape[0]
    return float(-0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi))


def _select_hyperparameters(D2: np.ndarray, resid: np.ndarray, config: GprConfig) -> tuple[float, float]:
    """Log-grid LML maximization followed by coordinate refinement.

    The length scale is capped at twice the data diameter: beyond that the
    evidence keeps rewarding ever-smoother fits on near-linear data, and the
    resulting model extrapolates with unjustified confidence.
    """
    q_scale = float(np.std(resid))
    if q_scale == 0.0:
        q_scale = max(1e-8, float(np.abs(resid).max()), 1.0)
    off_diag = D2[np.triu_indices_from(D2, k=1)]
    d_med = math.sqrt(float(np.median(off_diag))) if off_diag.size else 1.0
    d_max = math.sqrt(float(off_diag.max())) if off_diag.size else 1.0
    l_lo = max(1e-3, 0.1 * d_med)
    l_hi = max(2.0 * d_max, 2.0 * l_lo)
    zetas = np.geomspace(0.1 * q_scale, 10.0 * q_scale, config.grid_size)
    lengths = np.geomspace(l_lo, l_hi, config.grid_size)

    best = (-np.inf, zetas[0], lengths[0])
    for z in zetas:
        for l in lengths:
            lml = _log_marginal_likelihood(D2, resid, z, l, config)
            if lml > best[0]:
                best = (lml, z, l)
    _, z_best, l_best = best
    z_step = zetas[1] / zetas[0]
    l_step = lengths[1] / lengths[0]
    for _ in range(config.refine_rounds):
        z_step, l_step = z_step ** (1.0 / 3.0), l_step ** (1.0 / 3.0)
        for z in np.geomspace(z_best / z_step**3, z_best * z_step**3, 7):
            lml = _log_marginal_likelihood(D2, resid, z, l_best, config)
            if lml > best[0]:
                best = (lml, z, l_best)
        z_best = best[1]
        for l in np.clip(np.geomspace(l_best / l_step**3, l_best * l_step**3, 7), l_lo, l_hi):
            lml = _log_marginal_likelihood(D2, resid, z_best, l, config)
            if lml > best[0]:
                best = (lml, z_best, l)
        l_best = best[2]
    return best[1], best[2]


def fit(inputs, outputs, config: GprConfig | None = None) -> GprModel:
    """Fit a model; hyperparameters are LML-selected unless fixed in the config."""
    config = config or GprConfig()
    inputs = np.array(inputs, dtype=float)
    outputs = np.array(outputs, dtype=float).ravel()
    if inputs.ndim != 2 or inputs.shape[0] != outputs.shape[0]:
        raise ValueError("inputs must be (n, d) with one output per row")
    if inputs.shape[0] < 2:
        raise ValueError("need at least 2 training points")
    center, scale = _standardization(inputs, config)
    Z = (inputs - center) / scale
    D2 = cdist(Z, Z, "sqeuclidean")
    off = D2[np.triu_indices_from(D2, k=1)]
    if off.size and math.sqrt(float(off.min())) < DUPLICATE_TOL:
        raise DuplicateInputError("training inputs contain a standardized near-duplicate pair")

    prior_mean = float(outputs.mean())
    resid = outputs - prior_mean
    if config.zeta is not None and config.length_scale is not None:
        zeta, length_scale = config.zeta, config.length_scale
    else:
        zeta, length_scale = _select_hyperparameters(D2, resid, config)
        if config.zeta is not None:
            zeta = config.zeta
        if config.length_scale is not None:
            length_scale = config.length_scale
    L, alpha, jitter = _factorize(D2, resid, zeta, length_scale, config)
    return GprModel(
        train_inputs=inputs,
        train_outputs=outputs,
        prior_mean=prior_mean,
        zeta=zeta,
        length_scale=length_scale,
        jitter=jitter,
        center=center,
        scale=scale,
        factor=L,
        alpha=alpha,
        config=config,
        updates_since_refit=0,
        size_at_refit=inputs.shape[0],
    )


def predict(model: GprModel, y_star: np.ndarray) -> tuple[float, float]:
    """Posterior mean and standard deviation at one point."""
    return model.predict(y_star)


def _due_for_refresh(model: GprModel) -> bool:
    cadence = model.config.refresh_every
    if cadence <= 0:
        return False
    n = model.n_train + 1
    if n > model.config.refresh_size_cap:
        # Full refits grow as n^3; past the cap, refit only on 25% growth.
        return n >= 1.25 * model.size_at_refit
    return model.updates_since_refit + 1 >= cadence


def update(model: GprModel, y_new: np.ndarray, q_new: float) -> GprModel:
    """Fold one observation into the model.

    Extends the Cholesky factor by one rank and recomputes the prior mean
    and weights; hyperparameters are re-optimized every ``refresh_every``
    added points.  Raises DuplicateInputError for near-duplicate inputs
    (callers should skip the update instead).
    """
    y_new = np.asarray(y_new, dtype=float)
    if model.min_standardized_distance(y_new) < DUPLICATE_TOL:
        raise DuplicateInputError("update input is a near-duplicate of a training point")
    inputs = np.vstack([model.train_inputs, y_new])
    outputs = np.append(model.train_outputs, float(q_new))

    if _due_for_refresh(model):
        return fit(inputs, outputs, model.config)

    z_new = model.standardize(y_new)[np.newaxis, :]
    k_vec = model.zeta**2 * np.exp(
        -cdist(z_new, model.standardize(model.train_inputs), "sqeuclidean").ravel()
        / (2.0 * model.length_scale**2)
    )
    w = solve_triangular(model.factor, k_vec, lower=True)
    d2 = model.zeta**2 + model.jitter - float(w @ w)
    n = model.n_train
    if d2 <= model.jitter * 1e-3:
        # Extension is numerically degenerate; refactorize at fixed hyperparameters.
        Z = (inputs - model.center) / model.scale
        L, alpha, jitter = _factorize(
            cdist(Z, Z, "sqeuclidean"),
            outputs - outputs.mean(),
            model.zeta,
            model.length_scale,
            model.config,
        )
    else:
        jitter = model.jitter
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = model.factor
        L[n, :n] = w
        L[n, n] = math.sqrt(d2)
        alpha = cho_solve((L, True), outputs - outputs.mean())
    return replace(
        model,
        train_inputs=inputs,
        train_outputs=outputs,
        prior_mean=float(outputs.mean()),
        jitter=jitter,
        factor=L,
        alpha=alpha,
        updates_since_refit=model.updates_since_refit + 1,
    )
