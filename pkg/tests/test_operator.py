import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cesarolab.kernel import ShrinkingUniform, SquaringMap
from cesarolab.measure import HybridMeasure, TestFamily, cosine, integrate, mix, monomial, random_measure
from cesarolab.operator import (
    IterationState,
    apply_A,
    apply_T,
    cesaro_csv,
    cesaro_integrals,
    cesaro_integrals_batch,
    duality_gap,
    integrate_T,
    iterate,
    step,
)
from oracles import cesaro_mean_of_y, product_uniform_cdf, squaring_orbit

SU, SQ = ShrinkingUniform(), SquaringMap()


def test_apply_A_examples(grid, uniform):
    assert apply_A(SU, HybridMeasure.dirac(0.0, grid)).atoms == [(1.0, 1.0)]
    one = apply_A(SU, HybridMeasure.dirac(1.0, grid))
    assert np.allclose(one.bins, uniform.bins, atol=1e-15)


def test_apply_A_uniform_gives_log_density(grid, uniform):
    mu = apply_A(SU, uniform)
    anti = lambda y: y - y * np.log(y)  # noqa: E731
    e = grid.edges
    assert np.allclose(mu.bins, anti(e[1:]) - anti(e[:-1]), rtol=1e-9, atol=1e-16)


def test_apply_A_uniform_against_sampled_products(grid, uniform):
    # oracle: U1 * U2 has CDF t(1 - ln t); compare the grid CDF by KS distance
    mu = apply_A(SU, uniform)
    rng = np.random.default_rng(11)
    sample = np.sort(rng.random(20000) * rng.random(20000))
    grid_cdf = np.interp(sample, grid.edges, np.concatenate([[mu.near_zero_mass],
                                                             mu.near_zero_mass + np.cumsum(mu.bins)]))
    ks = stats.kstest(sample, lambda t: product_uniform_cdf(2, t))
    assert ks.pvalue > 1e-3
    emp = np.arange(1, sample.size + 1) / sample.size
    assert np.max(np.abs(grid_cdf - emp)) < stats.kstwo.ppf(0.999, sample.size)


def test_apply_T_examples():
    assert apply_T(SU, monomial(1), 0.0) == 1.0
    x = np.array([1e-9, 0.1, 0.5, 0.99])
    assert np.allclose(apply_T(SU, monomial(1), x), x / 2, rtol=1e-14)
    assert np.all(apply_T(SU, monomial(0), np.linspace(0, 1, 11)) == 1.0)
    assert apply_T(SQ, monomial(1), 0.5) == 0.25
    assert apply_T(SQ, monomial(1), 1.0) == 0.0


def test_apply_T_generic_function_uses_quadrature():
    from cesarolab.measure import custom
    from oracles import quad_mean

    f = custom("sq_sin", lambda y: np.sin(3 * np.asarray(y)) ** 2, bound=1.0)
    for x in (1e-8, 0.3, 1.0):
        assert apply_T(SU, f, x) == pytest.approx(quad_mean(f, 0.0, x), abs=1e-10)


def test_duality_examples(grid):
    d1 = HybridMeasure.dirac(1.0, grid)
    assert duality_gap(SU, monomial(1), d1) <= 1e-9
    assert integrate_T(SU, monomial(1), d1) == pytest.approx(0.5, abs=1e-15)
    d = HybridMeasure.dirac(0.5, grid)
    assert duality_gap(SQ, monomial(2), d) == 0.0
    assert integrate_T(SQ, monomial(2), d) == 0.0625
    rng = np.random.default_rng(3)
    for _ in range(5):
        mu = random_measure(grid, rng)
        for k in (SU, SQ):
            assert duality_gap(k, monomial(0), mu) <= 1e-12


def test_duality_grid_route_measures_projection(grid):
    mu = random_measure(grid, np.random.default_rng(8))
    exact = duality_gap(SU, cosine(3), mu)
    projected = duality_gap(SU, cosine(3), mu, route="grid")
    assert exact <= 1e-10
    assert projected < 1e-4
    with pytest.raises(ValueError):
        duality_gap(SU, cosine(3), mu, route="other")


def test_step_examples(grid, uniform):
    s0 = IterationState.start(SU, HybridMeasure.dirac(0.0, grid))
    s1 = step(s0)
    assert s1.n == 1 and s1.current.atoms == [(1.0, 1.0)] and s1.cesaro.atoms == [(1.0, 1.0)]
    s2 = step(s1)
    assert np.allclose(s2.current.bins, uniform.bins, atol=1e-15)
    assert s2.cesaro.atoms == [(1.0, 0.5)]
    assert np.allclose(s2.cesaro.bins, 0.5 * uniform.bins, atol=1e-15)
    assert s0.n == 0 and s0.cesaro is None  # states are values
    assert [s.n for s in iterate(SU, uniform, 7)] == list(range(1, 8))


def test_cesaro_integrals_examples(grid):
    rows = cesaro_integrals(SU, HybridMeasure.dirac(1.0, grid), 10, TestFamily.default())
    y = {n: v for n, name, v in rows if name == "monomial(1)"}
    assert y[10] == pytest.approx(cesaro_mean_of_y(10), abs=1e-6)
    assert y[1] == pytest.approx(0.5, abs=1e-12)
    assert all(v == pytest.approx(1.0, abs=1e-12) for _, name, v in rows if name == "monomial(0)")
    rows = cesaro_integrals(SQ, HybridMeasure.dirac(0.5, grid), 3, TestFamily.monomials(2))
    y = {n: v for n, name, v in rows if name == "monomial(1)"}
    assert y[3] == 27 / 256
    assert y[3] == pytest.approx(np.mean(squaring_orbit(0.5, 3)), abs=0)


def test_cesaro_matches_stored_iterates(grid):
    eta = random_measure(grid, np.random.default_rng(5))
    iterates, state = [], IterationState.start(SU, eta)
    for _ in range(6):
        state = step(state)
        iterates.append(state.current)
    stored = mix([(1 / 6, m) for m in iterates])
    for f in TestFamily.default():
        assert abs(integrate(state.cesaro, f) - integrate(stored, f)) <= 1e-10


def test_simplex_and_positivity(grid):
    eta = random_measure(grid, np.random.default_rng(6))
    for k in (SU, SQ):
        for s in iterate(k, eta, 60):
            assert abs(s.current.total_mass - 1.0) <= max(s.n, 1) * 1e-12
            assert np.all(s.current.bins >= 0) and np.all(s.current.atom_w >= 0)
            assert s.current.near_zero_mass >= 0


def test_shrinking_uniform_never_puts_mass_on_zero(grid, uniform):
    for eta in (HybridMeasure.dirac(1.0, grid), uniform):
        assert all(s.cesaro.atom_mass(0.0) == 0.0 for s in iterate(SU, eta, 50))


def test_batch_preserves_input_order(grid):
    etas = [HybridMeasure.dirac(x, grid) for x in (1.0, 0.5, 0.25)]
    fam = TestFamily.monomials(2)
    batch = cesaro_integrals_batch(SU, etas, 5, fam, max_workers=3)
    assert batch == [cesaro_integrals(SU, e, 5, fam) for e in etas]


def test_cesaro_csv():
    text = cesaro_csv([(1, "monomial(1)", 0.5), (2, "monomial(1)", 0.375)])
    assert text.splitlines() == ["n,function_name,value", "1,monomial(1),0.5", "2,monomial(1),0.375"]


def test_cesaro_integrals_rejects_zero_steps(grid):
    with pytest.raises(ValueError):
        cesaro_integrals(SU, HybridMeasure.dirac(1.0, grid), 0, TestFamily.default())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duality_random_measures(grid, seed):
    mu = random_measure(grid, np.random.default_rng(seed))
    for k in (SU, SQ):
        for f in (monomial(1), monomial(8), cosine(4)):
            assert duality_gap(k, f, mu) <= 1e-10
