import numpy as np
import pytest
from scipy import stats

from cesarolab.kernel import GridStochastic, ShrinkingUniform, SquaringMap
from cesarolab.measure import HybridMeasure, TestFamily, integrate, monomial
from cesarolab.montecarlo import (
    SimConfig,
    comparison_csv,
    empirical_cesaro,
    mc_vs_operator,
    open_uniforms,
    replica_generator,
    sample_measure,
    sample_step,
    trajectories,
    trajectory_csv,
)
from oracles import cesaro_mean_of_y, product_uniform_cdf

SU, SQ = ShrinkingUniform(), SquaringMap()
M = 100_000


@pytest.fixture(scope="module")
def paths_from_one():
    return trajectories(SimConfig(SU, 5, M, seed=20240601, x0=1.0))


def test_sample_step_examples():
    rng = replica_generator(1, 0)
    assert sample_step(SU, 0.0, rng)[0] == 1.0
    assert sample_step(SQ, 0.5, rng)[0] == 0.25
    assert sample_step(SQ, 1.0, rng)[0] == 0.0


def test_sample_step_mean():
    rng = replica_generator(99, 0)
    draws = np.array([sample_step(SU, 1.0, rng)[0] for _ in range(M)])
    assert abs(draws.mean() - 0.5) <= 0.005
    assert np.all((draws > 0) & (draws < 1))


def test_sample_step_is_deterministic_given_stream():
    a = [sample_step(SU, 0.7, replica_generator(5, 3))[0] for _ in range(2)]
    assert a[0] == a[1]


def test_open_uniforms_reject_zero():
    class Stub:
        def __init__(self):
            self.calls = 0

        def random(self, size):
            self.calls += 1
            return np.zeros(size) if self.calls == 1 else np.full(size, 0.25)

    u = open_uniforms(Stub(), 4)
    assert np.all(u == 0.25)


def test_empirical_cesaro_examples(grid):
    m = empirical_cesaro(SimConfig(SQ, 3, 1, 0, x0=0.5), grid)
    assert m.atoms == [(0.00390625, pytest.approx(1 / 3)), (0.0625, pytest.approx(1 / 3)),
                       (0.25, pytest.approx(1 / 3))]
    m = empirical_cesaro(SimConfig(SU, 1, 17, 4, x0=0.0), grid)
    assert m.atoms == [(1.0, 1.0)]


def test_empirical_cesaro_mean(grid):
    m = empirical_cesaro(SimConfig(SU, 100, M, 7, x0=1.0), grid)
    assert abs(m.total_mass - 1.0) <= 1e-12
    assert integrate(m, monomial(1)) == pytest.approx(cesaro_mean_of_y(100), abs=1e-3)


def test_block_size_does_not_change_results(grid):
    cfg = SimConfig(SU, 20, 3000, 11, x0=1.0)
    a = trajectories(cfg, block=3000)
    b = trajectories(cfg, block=7)
    assert np.array_equal(a, b)
    ma, mb = empirical_cesaro(cfg, grid, block=3000), empirical_cesaro(cfg, grid, block=128)
    assert np.array_equal(ma.bins, mb.bins) and ma.near_zero_mass == mb.near_zero_mass


def test_seeds_reproduce_and_differ():
    cfg = SimConfig(SU, 10, 50, 123, x0=1.0)
    assert np.array_equal(trajectories(cfg), trajectories(cfg))
    other = SimConfig(SU, 10, 50, 124, x0=1.0)
    assert not np.array_equal(trajectories(cfg), trajectories(other))


def test_paths_strictly_decrease_and_stay_positive():
    paths = trajectories(SimConfig(SU, 200, 2000, 5, x0=1.0))
    assert np.all(paths > 0)
    assert np.all(np.diff(paths, axis=1) < 0)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_product_law_ks(paths_from_one, k):
    x = paths_from_one[:, k - 1]
    ks = stats.kstest(x, lambda t: product_uniform_cdf(k, t))
    assert ks.statistic < stats.kstwo.ppf(0.999, x.size)


def test_mc_vs_operator_shrinking_uniform(grid, family):
    rows = mc_vs_operator(SimConfig(SU, 100, M, 2024, x0=1.0), family, grid)
    assert [r.name for r in rows] == family.names
    assert all(abs(r.z) <= 4 for r in rows)
    const = rows[0]
    assert const.mc_value == pytest.approx(1.0, abs=1e-12) and const.operator_value == pytest.approx(1.0, abs=1e-12)


def test_mc_vs_operator_deterministic_kernel(grid, family):
    rows = mc_vs_operator(SimConfig(SQ, 40, 25, 3, x0=0.8), family, grid)
    for r in rows:
        assert abs(r.mc_value - r.operator_value) <= 1e-12
        assert r.z == 0.0


def test_mc_vs_operator_initial_measure(grid):
    eta = HybridMeasure.uniform(grid)
    rows = mc_vs_operator(SimConfig(SU, 10, 20000, 8, x0=None, initial=eta), TestFamily.monomials(3), grid)
    assert all(abs(r.z) <= 5 for r in rows)


def test_mc_grid_kernel(small_grid):
    n = small_grid.bin_count
    i = np.arange(n)
    p = np.exp(-((i[:, None] - i[None, :]) / 4.0) ** 2)
    k = GridStochastic(small_grid, p / p.sum(axis=1, keepdims=True))
    rows = mc_vs_operator(SimConfig(k, 15, 20000, 9, x0=0.5), TestFamily.monomials(3), small_grid)
    assert all(abs(r.z) <= 5 for r in rows)


def test_sample_measure_inverse_cdf(grid):
    mu = HybridMeasure(grid, [(0.5, 0.5)], bins=0.5 * HybridMeasure.uniform(grid).bins)
    rng = np.random.default_rng(0)
    x = sample_measure(mu, rng.random((50000, 2)))
    assert np.mean(x == 0.5) == pytest.approx(0.5, abs=0.01)
    assert np.mean(x[x != 0.5] < 0.25) == pytest.approx(0.25, abs=0.01)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(SU, 0, 10, 1)
    with pytest.raises(ValueError):
        SimConfig(SU, 10, 0, 1)
    with pytest.raises(ValueError):
        SimConfig(SU, 10, 10, -1)
    with pytest.raises(ValueError):
        SimConfig(SU, 10, 10, 1, x0=1.5)
    with pytest.raises(ValueError):
        SimConfig(SU, 10, 10, 1, x0=None)


def test_csv_dumps():
    text = trajectory_csv(np.array([[0.5, 0.25]]))
    assert text.splitlines() == ["replica,k,x", "0,1,0.5", "0,2,0.25"]
    from cesarolab.montecarlo import Comparison

    line = comparison_csv([Comparison("monomial(1)", 0.5, 0.5, 0.0, 0.0)]).splitlines()
    assert line == ["function_name,mc_value,operator_value,std_error,z", "monomial(1),0.5,0.5,0.0,0.0"]
