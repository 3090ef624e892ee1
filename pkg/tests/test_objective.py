import numpy as np
import pytest

from eitsample.conductivity import Basis, CircleSample, rasterize
from eitsample.objective import BudgetExhausted, NoiseSpec, Objective, add_noise, cost, evaluate_basis


def test_cost_basics(rng):
    a = rng.normal(size=(16, 16))
    assert cost(a, a) == 0
    b = a.copy()
    b[3, 4] += 0.25
    assert cost(b, a) == pytest.approx(0.0625)
    c = rng.normal(size=(16, 16))
    assert cost(a, c) == cost(c, a) > 0
    with pytest.raises(ValueError):
        cost(a, a[:4])


def test_noise():
    clean = np.linspace(-1, 1, 256).reshape(16, 16) + 2.0
    np.testing.assert_array_equal(add_noise(clean, NoiseSpec(level=0)), clean)
    noisy = add_noise(clean, NoiseSpec(level=0.005, seed=11))
    rel = noisy / clean - 1
    assert np.std(rel) == pytest.approx(0.005, rel=0.3)
    np.testing.assert_array_equal(noisy, add_noise(clean, NoiseSpec(level=0.005, seed=11)))
    assert not np.array_equal(noisy, add_noise(clean, NoiseSpec(level=0.005, seed=12)))
    with pytest.raises(ValueError):
        NoiseSpec(level=-0.1)


def test_counter_and_budget(coarse_model, patterns):
    sigma = np.full(coarse_model.mesh.n_elements, 0.2)
    obj = Objective(coarse_model, patterns, coarse_model.measure(sigma, patterns), max_evaluations=3)
    assert obj(sigma) == 0
    assert obj.n_evaluations == 1
    obj(sigma)
    # a cache hit is still an evaluation, but not a solve
    assert (obj.n_evaluations, obj.n_solves) == (2, 1)
    obj(sigma * 1.1)
    assert obj.remaining == 0
    with pytest.raises(BudgetExhausted):
        obj(sigma)
    assert obj.n_evaluations == 3


def test_observed_shape_checked(coarse_model, patterns):
    with pytest.raises(ValueError, match="shape"):
        Objective(coarse_model, patterns, np.zeros((16, 15)))


def test_basis_evaluation_matches_direct(coarse_model, patterns, rng):
    s = CircleSample(((0.02, -0.01, 0.03), (-0.04, 0.0, 0.015)))
    obs = coarse_model.measure(rng.uniform(0.2, 0.4, coarse_model.mesh.n_elements), patterns)
    direct = cost(coarse_model.measure(rasterize(s, coarse_model.mesh), patterns), obs)
    obj = Objective(coarse_model, patterns, obs)
    J = evaluate_basis(Basis((s,), np.ones(1)), coarse_model, patterns, obs, objective=obj)
    assert J == direct >= 0
    assert obj.n_evaluations == 1
