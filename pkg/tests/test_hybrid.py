import numpy as np
import pytest

import yieldopt as yo
from yieldopt import gpr
from yieldopt.hybrid import (
    CRITICAL,
    SURROGATE_ACCEPT,
    SURROGATE_REJECT,
    HybridConfig,
    build_initial_training,
    classify,
    estimate_yield_hybrid,
)
from yieldopt.montecarlo import derive_seed, mc_yield, sample_uniform


class StubSurrogate:
    """Fake surrogate with controllable predictions for the true model."""

    def __init__(self, model, x, sigma):
        self.model = model
        self.x = x
        self.sigma = sigma
        self.n_train = 0
        self.updates = 0

    def predict_batch(self, Y):
        means = np.array([self.model.evaluate(self.x, y[4:]) for y in Y])
        return means, np.full(len(Y), self.sigma)

    def update(self, y, q):
        self.updates += 1
        return self


def test_classify_clear_margin():
    assert classify(9.0, 0.1, 10.0, 2.0) == SURROGATE_ACCEPT


def test_classify_boundary_with_uncertainty_is_critical():
    assert classify(10.0, 0.5, 10.0, 2.0) == CRITICAL


def test_classify_reject():
    assert classify(10.05, 0.02, 10.0, 2.0) == SURROGATE_REJECT


def test_classify_zero_sigma_tie_accepts():
    # Alg-style ordering: the accept test runs first, so an exact tie with
    # zero spread is accepted.
    assert classify(10.0, 0.0, 10.0, 2.0) == SURROGATE_ACCEPT


def test_classify_validates_inputs():
    with pytest.raises(ValueError):
        classify(1.0, -0.1, 0.0, 2.0)
    with pytest.raises(ValueError):
        classify(1.0, 0.1, 0.0, 0.0)


def test_gamma_monotonicity():
    rng = np.random.Generator(np.random.Philox(key=3))
    for _ in range(300):
        mean, std, c = rng.normal(), rng.uniform(0, 1), rng.normal()
        small = classify(mean, std, c, 1.0)
        large = classify(mean, std, c, 3.0)
        if small == CRITICAL:
            assert large == CRITICAL


def default_setup(seed=0, n_mc=400):
    problem = yo.default_problem()
    model = yo.SyntheticPmsm()
    samples = sample_uniform(problem.uncertainty, n_mc, derive_seed(seed, 100))
    return problem, model, samples


def test_perfect_oracle_surrogate_no_criticals():
    problem, model, samples = default_setup()
    x = yo.nominal_design()
    stub = StubSurrogate(yo.SyntheticPmsm(), x, sigma=0.0)
    report = estimate_yield_hybrid(model, stub, x, samples, problem.pfs, HybridConfig())
    assert report.n_online == 0
    assert report.n_gpr == samples.n
    mc = mc_yield(yo.SyntheticPmsm(), x, samples, problem.pfs)
    assert report.estimate.value == mc.value
    assert np.array_equal(report.estimate.classifications, mc.classifications)
    assert model.evaluation_count == 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_huge_sigma_degenerates_to_pure_mc(seed):
    problem, model, samples = default_setup(seed=seed)
    x = yo.nominal_design()
    stub = StubSurrogate(yo.SyntheticPmsm(), x, sigma=1e12)
    report = estimate_yield_hybrid(model, stub, x, samples, problem.pfs, HybridConfig())
    assert report.n_online == samples.n
    mc = mc_yield(yo.SyntheticPmsm(), x, samples, problem.pfs)
    assert report.estimate.value == mc.value
    assert np.array_equal(report.estimate.classifications, mc.classifications)


def test_accounting_invariants_and_trace():
    problem, model, samples = default_setup(seed=5)
    x = yo.nominal_design()
    inputs, outputs = build_initial_training(
        problem.uncertainty, problem.constraints, problem.training_box(), 20, 5, model
    )
    surrogate = gpr.fit(inputs, outputs)
    report = estimate_yield_hybrid(model, surrogate, x, samples, problem.pfs, HybridConfig())
    assert report.n_gpr + report.n_online == samples.n
    assert report.n_tot == report.n_train + report.n_online
    assert report.n_train == 20
    assert report.estimate.n_accepted + (samples.n - report.estimate.n_accepted) == samples.n
    assert len(report.trace) == samples.n
    indices = [t[0] for t in report.trace]
    assert indices == sorted(indices)
    # every critical decision in the trace matches direct classification
    oracle = yo.SyntheticPmsm()
    for idx, decision, sigma in report.trace:
        if decision == CRITICAL:
            q = oracle.evaluate(x, samples.points[idx])
            assert report.estimate.classifications[idx] == problem.pfs.is_satisfied(q)


def test_trace_csv(tmp_path):
    problem, model, samples = default_setup(seed=6, n_mc=120)
    x = yo.nominal_design()
    stub = StubSurrogate(yo.SyntheticPmsm(), x, sigma=1e12)
    report = estimate_yield_hybrid(model, stub, x, samples, problem.pfs, HybridConfig())
    path = tmp_path / "trace.csv"
    report.trace_to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,decision,sigma_gpr,cumulative_n_online"
    assert len(lines) == 121
    assert lines[-1].split(",")[-1] == "120"


def test_blackbox_failure_preserves_partial_trace():
    problem, _, samples = default_setup(seed=7, n_mc=50)
    x = yo.nominal_design()

    class FailingModel(yo.SyntheticPmsm):
        def evaluate(self, xx, p):
            if self.evaluation_count >= 3:
                raise RuntimeError("child died")
            return super().evaluate(xx, p)

    stub = StubSurrogate(yo.SyntheticPmsm(), x, sigma=1e12)
    with pytest.raises(yo.hybrid.HybridEvaluationError) as exc:
        estimate_yield_hybrid(FailingModel(), stub, x, samples, problem.pfs, HybridConfig())
    assert exc.value.index == 3
    assert len(exc.value.trace) == 3


def test_hybrid_tracks_pure_mc_with_real_surrogate():
    problem, model, _ = default_setup()
    x = yo.nominal_design()
    for seed in (0, 1):
        samples = sample_uniform(problem.uncertainty, 2500, derive_seed(seed, 100))
        inputs, outputs = build_initial_training(
            problem.uncertainty, problem.constraints, problem.training_box(), 20, seed, yo.SyntheticPmsm()
        )
        surrogate = gpr.fit(inputs, outputs)
        report = estimate_yield_hybrid(
            yo.SyntheticPmsm(), surrogate, x, samples, problem.pfs, HybridConfig(seed=seed)
        )
        mc = mc_yield(yo.SyntheticPmsm(), x, samples, problem.pfs)
        assert abs(report.estimate.value - mc.value) <= 2 * mc.sigma
        assert report.n_online <= 125


def test_build_initial_training_counts_and_box():
    problem = yo.default_problem()
    model = yo.SyntheticPmsm()
    box = problem.training_box()
    inputs, outputs = build_initial_training(
        problem.uncertainty, problem.constraints, box, 20, 3, model
    )
    assert model.evaluation_count == 20
    assert inputs.shape == (20, 16)
    assert outputs.shape == (20,)
    assert np.all(inputs[:, :4] >= box[0]) and np.all(inputs[:, :4] <= box[1])
    assert gpr.fit(inputs, outputs).n_train == 20


def test_build_initial_training_minimum():
    problem = yo.default_problem()
    inputs, outputs = build_initial_training(
        problem.uncertainty, problem.constraints, None, 2, 1, yo.SyntheticPmsm()
    )
    assert gpr.fit(inputs, outputs).n_train == 2
    with pytest.raises(ValueError):
        build_initial_training(problem.uncertainty, problem.constraints, None, 1, 1, yo.SyntheticPmsm())


def test_build_initial_training_nominal_case():
    problem = yo.default_problem()
    x = yo.nominal_design()
    inputs, _ = build_initial_training(
        problem.uncertainty,
        problem.constraints,
        None,
        10,
        2,
        yo.SyntheticPmsm(),
        case="nominal",
        x_fixed=x,
    )
    assert np.all(inputs[:, :4] == x.as_array())
    spec = problem.uncertainty
    assert np.all(inputs[:, 4:] >= spec.means - spec.half_widths)
    assert np.all(inputs[:, 4:] <= spec.means + spec.half_widths)


def test_build_initial_training_infeasible_box():
    problem = yo.default_problem()
    with pytest.raises(ValueError):
        build_initial_training(
            problem.uncertainty,
            problem.constraints,
            (np.array([5.0, 5, 5, 5]), np.array([1.0, 1, 1, 1])),
            5,
            1,
            yo.SyntheticPmsm(),
        )
