import numpy as np
import pytest

import yieldopt as yo
from yieldopt.montecarlo import latin_hypercube, mc_sigma, mc_yield, sample_size_for, sample_uniform
from yieldopt.problem import DesignVector, PerformanceSpec, QoiModel


class CoordinateModel(QoiModel):
    """Q(x, p) = p[index]; the classic analytically-known test model."""

    def __init__(self, index=0):
        self.index = index
        self._count = 0

    @property
    def evaluation_count(self):
        return self._count

    def evaluate(self, x, p):
        self._count += 1
        return float(p[self.index])

    def evaluate_batch(self, x, P):
        self._count += P.shape[0]
        return np.asarray(P)[:, self.index].astype(float)


def test_samples_stay_inside_box():
    spec = yo.default_pmsm_uncertainty()
    s = sample_uniform(spec, 5000, seed=4)
    assert np.all(s.points >= spec.means - spec.half_widths)
    assert np.all(s.points <= spec.means + spec.half_widths)


def test_same_seed_reproduces():
    spec = yo.default_pmsm_uncertainty()
    a = sample_uniform(spec, 100, seed=9)
    b = sample_uniform(spec, 100, seed=9)
    assert np.array_equal(a.points, b.points)
    c = sample_uniform(spec, 100, seed=10)
    assert not np.array_equal(a.points, c.points)


def test_sample_mean_close_to_distribution_mean():
    spec = yo.default_pmsm_uncertainty()
    n = 10**5
    s = sample_uniform(spec, n, seed=123)
    se = spec.half_widths / np.sqrt(3 * n)
    assert np.all(np.abs(s.points.mean(axis=0) - spec.means) <= 3 * se)


def test_zero_samples_rejected():
    with pytest.raises(ValueError):
        sample_uniform(yo.default_pmsm_uncertainty(), 0, seed=1)


def test_csv_round_trip(tmp_path):
    spec = yo.default_pmsm_uncertainty()
    s = sample_uniform(spec, 50, seed=3)
    path = tmp_path / "samples.csv"
    s.to_csv(path)
    loaded = yo.SampleSet.from_csv(path)
    assert loaded.labels == s.labels
    assert np.array_equal(loaded.points, s.points)


def test_mc_sigma_values():
    assert mc_sigma(0.5, 2500) == pytest.approx(0.01, abs=1e-15)
    assert mc_sigma(0.0428, 2500) == pytest.approx(0.00405, abs=5e-6)
    assert mc_sigma(0.0, 100) == 0.0
    with pytest.raises(ValueError):
        mc_sigma(1.2, 100)


def test_sample_size_for():
    assert sample_size_for(0.01) == 2500
    assert sample_size_for(0.5) == 1
    assert sample_size_for(0.005) == 10000
    with pytest.raises(ValueError):
        sample_size_for(0.0)
    with pytest.raises(ValueError):
        sample_size_for(0.6)


def test_sample_size_inverts_sigma():
    for n in (2500, 10000):
        assert sample_size_for(mc_sigma(0.5, n)) == n


def _uniform_spec():
    return yo.UncertaintySpec((yo.UncertainParameter(0.0, 1.0, "u"),))


def test_mc_yield_empty_and_full_safe_domain():
    spec = _uniform_spec()
    s = sample_uniform(spec, 500, seed=8)
    model = CoordinateModel()
    x = yo.nominal_design()
    assert mc_yield(model, x, s, PerformanceSpec(2.0, "at_least")).value == 0.0
    assert mc_yield(model, x, s, PerformanceSpec(-2.0, "at_least")).value == 1.0


def test_mc_yield_symmetric_threshold():
    spec = _uniform_spec()
    s = sample_uniform(spec, 10**5, seed=21)
    est = mc_yield(CoordinateModel(), yo.nominal_design(), s, PerformanceSpec(0.0, "at_least"))
    assert abs(est.value - 0.5) <= 0.005
    assert est.n_accepted == round(est.value * est.n_samples)
    assert est.sigma == pytest.approx(mc_sigma(est.value, est.n_samples))
    assert est.eval_accounting == (est.n_samples, 0)


def test_mc_yield_is_k_over_n_and_permutation_invariant():
    spec = _uniform_spec()
    s = sample_uniform(spec, 997, seed=5)
    est = mc_yield(CoordinateModel(), yo.nominal_design(), s, PerformanceSpec(0.3, "at_least"))
    assert est.value == est.n_accepted / 997
    perm = np.random.Generator(np.random.Philox(key=2)).permutation(997)
    shuffled = yo.SampleSet(seed=5, points=s.points[perm], labels=s.labels)
    est2 = mc_yield(CoordinateModel(), yo.nominal_design(), shuffled, PerformanceSpec(0.3, "at_least"))
    assert est2.value == est.value


def test_mc_three_sigma_coverage_over_200_seeds():
    spec = _uniform_spec()
    n = 2500
    failures = 0
    for seed in range(200):
        s = sample_uniform(spec, n, seed=seed)
        est = mc_yield(CoordinateModel(), yo.nominal_design(), s, PerformanceSpec(0.0, "at_least"))
        if abs(est.value - 0.5) > 3 * mc_sigma(0.5, n):
            failures += 1
    assert failures <= 2  # >= 99% of seeds inside the 3-sigma band


def test_mc_failure_carries_sample_index():
    class Flaky(QoiModel):
        def __init__(self):
            self._count = 0

        @property
        def evaluation_count(self):
            return self._count

        def evaluate(self, x, p):
            self._count += 1
            if p[0] > 0.9:
                raise RuntimeError("boom")
            return float(p[0])

    spec = _uniform_spec()
    s = sample_uniform(spec, 300, seed=17)
    bad = int(np.argmax(s.points[:, 0] > 0.9))
    with pytest.raises(yo.montecarlo.SampleEvaluationError) as exc:
        mc_yield(Flaky(), yo.nominal_design(), s, PerformanceSpec(0.0, "at_least"))
    assert exc.value.index == bad


def test_latin_hypercube_stratification():
    n, dim = 64, 4
    pts = latin_hypercube(n, dim, seed=6)
    assert pts.shape == (n, dim)
    for j in range(dim):
        strata = np.floor(pts[:, j] * n).astype(int)
        assert sorted(strata) == list(range(n))
    assert np.array_equal(pts, latin_hypercube(n, dim, seed=6))
