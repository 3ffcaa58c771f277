import numpy as np
import pytest
from hypothesis import given, strategies as st

from fluxmech.fitting import (FitError, FitProblem, finite_difference_jacobian,
                              least_squares, weighted_linear_fit)


def line(p, x):
    return p[0] + p[1] * x


def expo(p, x):
    return p[0] * np.exp(-x / p[1]) + p[2]


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_linear_noiseless_exact(a, b):
    x = np.linspace(0, 3, 12)
    out = least_squares(FitProblem(line, x, a + b * x, [0.3, 0.7]))
    assert np.allclose(out.params, [a, b], atol=1e-10)


def test_exponential_stderr_coverage():
    truth = np.array([1.0, 2.0, 0.1])
    x = np.linspace(0, 10, 50)
    inside = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = expo(truth, x) + rng.normal(0, 0.02, x.size)
        out = least_squares(FitProblem(expo, x, y, [0.8, 1.5, 0.0]))
        assert out.converged
        inside.append(abs(out.params[1] - truth[1]) < out.stderr[1])
    assert np.mean(inside) == pytest.approx(0.683, abs=0.1)


def test_absolute_sigma_matches_known_noise():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 10, 400)
    y = expo([1.0, 2.0, 0.1], x) + rng.normal(0, 0.05, x.size)
    a = least_squares(FitProblem(expo, x, y, [0.8, 1.5, 0.0], sigma=0.05, absolute_sigma=True))
    b = least_squares(FitProblem(expo, x, y, [0.8, 1.5, 0.0]))
    assert a.stderr == pytest.approx(b.stderr, rel=0.15)


def test_unidentifiable_parameter_not_converged():
    # the second parameter never enters the model
    out = least_squares(FitProblem(lambda p, x: p[0] + 0 * p[1] * x, np.arange(5.0), np.ones(5), [0.0, 1.0]))
    assert not out.converged
    assert np.all(np.isnan(out.covariance))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_problem_validation():
    with pytest.raises(ValueError):
        FitProblem(line, [], [], [0, 0])
    with pytest.raises(ValueError):
        FitProblem(line, [1, 2], [1, 2], [0, 0], bounds=([1, 1], [0, 2]))
    with pytest.raises(ValueError):
        FitProblem(line, [1, 2], [1, 2], [0, 0], sigma=[1, 0])
    with pytest.raises(FitError):
        least_squares(FitProblem(lambda p, x: np.log(p[0]) * x, [1.0, 2.0], [1.0, 2.0], [-1.0]))


def test_weighted_linear_two_points_exact():
    out = weighted_linear_fit([1.0, 3.0], [2.0, 6.0])
    assert np.allclose(out.params, [0.0, 2.0])


def test_weighted_linear_coverage():
    x = np.linspace(0, 4, 8)
    sig = np.full(x.size, 0.1)
    hits = []
    for seed in range(200):
        y = 0.5 + 1.5 * x + np.random.default_rng(seed).normal(0, 0.1, x.size)
        out = weighted_linear_fit(x, y, sig)
        hits.append(abs(out.params[0] - 0.5) < out.stderr[0])
    assert np.mean(hits) == pytest.approx(0.683, abs=0.08)


def test_weighted_linear_duplicate_x():
    with pytest.raises(np.linalg.LinAlgError):
        weighted_linear_fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        weighted_linear_fit([1.0], [1.0])


def test_jacobian_respects_bounds():
    calls = []

    def f(p):
        calls.append(p.copy())
        if p[0] < 0:
            raise AssertionError("evaluated outside bounds")
        return np.array([p[0] ** 2, np.sqrt(p[0]) + p[1]])

    p = np.array([0.0, 1.0])
    jac = finite_difference_jacobian(f, p, (np.array([0.0, -np.inf]), np.array([np.inf, np.inf])))
    assert jac[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert jac[1, 1] == pytest.approx(1.0)
    p = np.array([2.0, 1.0])
    jac = finite_difference_jacobian(f, p, (np.array([0.0, -np.inf]), np.array([2.0, np.inf])))
    assert jac[0, 0] == pytest.approx(4.0, rel=1e-6)
