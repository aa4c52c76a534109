import itertools
import math

import numpy as np
import pytest

from dpinfer import optim
from dpinfer.errors import InvalidParameter
from dpinfer.mechanisms import PrivacyBudget

OFF = PrivacyBudget(epsilon=math.inf)


def toy(n=300, p=4, seed=70):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, p))
    y = np.where(rng.random(n) < 1 / (1 + np.exp(-X @ np.linspace(0.4, -0.2, p))), 1.0, -1.0)
    return optim.LabeledDataset(X, y)


def test_logistic_loss_examples():
    d = toy()
    assert optim.logistic_loss(np.zeros(d.p), d) == pytest.approx(math.log(2))
    X = np.array([[1.0], [-1.0]])
    sep = optim.LabeledDataset(X, np.array([1.0, -1.0]))
    assert optim.logistic_loss(np.array([50.0]), sep) < 1e-20


def test_gradient_matches_finite_differences():
    d = toy(p=5)
    rng = np.random.default_rng(71)
    for _ in range(10):
        w = rng.normal(size=5)
        g = optim.logistic_gradient(w, d)
        h = 1e-5
        fd = [(optim.logistic_loss(w + h * e, d) - optim.logistic_loss(w - h * e, d)) / (2 * h) for e in np.eye(5)]
        assert np.abs(g - fd).max() <= 1e-6


def test_compress_preserves_loss():
    z = np.random.default_rng(72).choice([-1.0, 1.0], size=(500, 3))
    d = optim.node_regression_data(z, 0)
    c = d.compress()
    assert c.n == d.n and c.features.shape[0] <= 8
    w = np.array([0.1, -0.3, 0.2])
    assert optim.logistic_loss(w, c) == pytest.approx(optim.logistic_loss(w, d), rel=1e-12)


def test_frank_wolfe_iterates_stay_in_ball():
    d = toy()
    rng = np.random.default_rng(73)
    res = optim.private_frank_wolfe(d, optim.L1Constraint(0.7), PrivacyBudget(rho=0.1), 50, rng, record=True)
    assert np.abs(res.w).sum() <= 0.7 + 1e-12
    assert len(res.risks) == 51


def test_frank_wolfe_noiseless_improves():
    d = toy()
    a = optim.private_frank_wolfe(d, optim.L1Constraint(1.0), OFF, 20)
    b = optim.private_frank_wolfe(d, optim.L1Constraint(1.0), OFF, 200)
    assert a.noise_scale == 0 and optim.logistic_loss(b.w, d) <= optim.logistic_loss(a.w, d)


def test_frank_wolfe_private_risk_bound():
    rng = np.random.default_rng(74)
    from dpinfer.harness import _synthetic_logistic
    from dpinfer.constants import DEFAULT_CONSTANTS
    n, p = 10_000, 5
    d = _synthetic_logistic(n, p, rng)
    best = optim.logistic_loss(optim.private_frank_wolfe(d, optim.L1Constraint(1.0), OFF, 2000).w, d)
    res = optim.private_frank_wolfe(d, optim.L1Constraint(1.0), PrivacyBudget(rho=1.0), rng=rng)
    gap = optim.logistic_loss(res.w, d) - best
    assert gap <= optim.fw_risk_bound(n, p, 1.0, 1.0, DEFAULT_CONSTANTS.mult_fw) * 1.5


def test_gibbs_independent_spins():
    rng = np.random.default_rng(75)
    m = optim.IsingModel(np.zeros((3, 3)), np.zeros(3))
    z = optim.ising_gibbs(m, 20_000, rng=rng, chains=100)
    assert np.all(np.abs(z.mean(axis=0)) <= 3 / math.sqrt(z.shape[0]) * 1.5)


def test_gibbs_matches_exact_law_p3():
    rng = np.random.default_rng(76)
    m = optim.IsingModel(np.array([[0, 0.5, -0.3], [0.5, 0, 0.2], [-0.3, 0.2, 0]]), np.array([0.1, 0.0, -0.2]))
    law = optim.gibbs_visit_law(m, 1_000_000, rng)
    states = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    w = np.exp([s @ np.triu(m.A, 1) @ s + s @ m.theta for s in states])
    assert 0.5 * np.abs(law - w / w.sum()).sum() <= 0.02


def test_pair_probability_mc():
    rng = np.random.default_rng(77)
    eta = 1.0
    m = optim.IsingModel.matched_pairs(2, eta / 2)
    z = optim.ising_gibbs(m, 100_000, rng=rng, chains=200)
    assert np.mean((z[:, 0] > 0) & (z[:, 1] > 0)) == pytest.approx(optim.pair_probability(eta), abs=0.01)


def test_ising_model_validation():
    with pytest.raises(InvalidParameter):
        optim.IsingModel(np.array([[0, 1.0], [0.5, 0]]), np.zeros(2))
    assert optim.IsingModel.matched_pairs(4, 0.3).width == pytest.approx(0.3)


def test_learn_ising_null_and_budget_split():
    rng = np.random.default_rng(78)
    m = optim.IsingModel(np.zeros((4, 4)), np.zeros(4))
    z = optim.ising_exact_sample(m, 100_000, rng)
    est = optim.learn_ising_private(z, 0.5, OFF, rng, T=300)
    assert np.abs(est.A_hat).max() <= 0.1
    est = optim.learn_ising_private(z, 0.5, PrivacyBudget(rho=2.0), rng, T=50)
    assert sum(b.rho for b in est.node_budgets) == pytest.approx(2.0)
    assert np.allclose(est.symmetrized(), est.symmetrized().T)


def test_learn_ising_recovers_pairs():
    rng = np.random.default_rng(79)
    m = optim.IsingModel.matched_pairs(4, 0.4)
    z = optim.ising_exact_sample(m, 200_000, rng)
    est = optim.learn_ising_private(z, 0.5, OFF, rng, T=500)
    assert np.abs(est.A_hat - m.A).max() <= 0.1
