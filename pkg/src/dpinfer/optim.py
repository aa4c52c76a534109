"""Private Frank-Wolfe over the l1 ball, sparse logistic regression, Ising Gibbs
sampling and node-wise private Ising parameter learning."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import EmptyDataset, InvalidBudget, InvalidParameter
from .mechanisms import PrivacyBudget, laplace_noise

LIPSCHITZ_L1 = 2.0


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None  # multiplicities after compression

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise InvalidParameter("features and labels differ in length")
        if y.size and not np.all(np.isin(y, (-1.0, 1.0))):
            raise InvalidParameter("labels must be +-1")
        if X.size and np.abs(X).max() > 1:
            raise InvalidParameter("features must satisfy |x|_inf <= 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def n(self) -> int:
        return int(self.labels.size if self.weights is None else self.weights.sum())

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    def compress(self) -> "LabeledDataset":
        """Merge identical (x, y) rows; the loss and its gradient are unchanged."""
        if self.weights is not None:
            return self
        rows = np.column_stack([self.features, self.labels])
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        return LabeledDataset(uniq[:, :-1], uniq[:, -1], counts.astype(float))


def _w(data: LabeledDataset) -> np.ndarray:
    return np.ones(data.labels.size) if data.weights is None else data.weights


def logistic_loss(w, data: LabeledDataset) -> float:
    if data.labels.size == 0:
        raise EmptyDataset("empty dataset")
    margins = data.labels * (data.features @ np.asarray(w, dtype=float))
    wt = _w(data)
    return float((wt * np.logaddexp(0.0, -margins)).sum() / wt.sum())


def logistic_gradient(w, data: LabeledDataset) -> np.ndarray:
    if data.labels.size == 0:
        raise EmptyDataset("empty dataset")
    margins = data.labels * (data.features @ np.asarray(w, dtype=float))
    wt = _w(data)
    coef = -wt * data.labels * expit(-margins)
    return data.features.T @ coef / wt.sum()


@dataclass(frozen=True)
class L1Constraint:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParameter("radius must be positive")

    def vertices(self, p: int) -> np.ndarray:
        return np.vstack([self.radius * np.eye(p), -self.radius * np.eye(p)])

    def contains(self, w, tol: float = 1e-12) -> bool:
        return float(np.abs(w).sum()) <= self.radius * (1 + tol)


def fw_noise_scale(n: int, radius: float, budget: PrivacyBudget, T: int) -> float:
    """Laplace scale for each vertex score, keyed to the active budget mode."""
    if budget.is_infinite:
        return 0.0
    if budget.mode == "zcdp":
        if budget.rho <= 0:
            raise InvalidBudget("rho must be positive")
        return LIPSCHITZ_L1 * radius * math.sqrt(T) / (n * math.sqrt(budget.rho))
    if budget.mode == "approx":
        if budget.epsilon <= 0:
            raise InvalidBudget("epsilon must be positive")
        return LIPSCHITZ_L1 * radius * math.sqrt(8 * T * math.log(1 / budget.delta)) / (n * budget.epsilon)
    raise InvalidBudget("Frank-Wolfe needs an (eps, delta>0) or rho budget")


def fw_default_iterations(n: int, radius: float, budget: PrivacyBudget) -> int:
    if budget.is_infinite:
        raise InvalidParameter("pass T explicitly when noise is off")
    scale = math.sqrt(budget.rho) if budget.mode == "zcdp" else budget.epsilon
    return max(1, int(round(radius ** (2 / 3) * (n * scale) ** (2 / 3))))


@dataclass
class FWResult:
    w: np.ndarray
    T: int
    noise_scale: float
    risks: list = field(default_factory=list)


def private_frank_wolfe(
    dataset: LabeledDataset,
    constraint: L1Constraint,
    budget: PrivacyBudget,
    T: int | None = None,
    rng=None,
    record: bool = False,
) -> FWResult:
    """Frank-Wolfe with Laplace-perturbed vertex selection (report noisy min)."""
    n = dataset.n
    if n == 0:
        raise EmptyDataset("empty dataset")
    T = fw_default_iterations(n, constraint.radius, budget) if T is None else int(T)
    if T < 1:
        raise InvalidParameter("T must be >= 1")
    scale = fw_noise_scale(n, constraint.radius, budget, T)
    data = dataset.compress()
    p = data.p
    lam = constraint.radius
    w = np.zeros(p)
    risks = [logistic_loss(w, data)] if record else []
    for t in range(T):
        g = logistic_gradient(w, data)
        scores = np.concatenate([lam * g, -lam * g])
        if scale > 0:
            scores = scores + laplace_noise(scale, rng, scores.size)
        j = int(np.argmin(scores))
        vertex = np.zeros(p)
        vertex[j % p] = lam if j < p else -lam
        mu = 2.0 / (t + 2)
        w = (1 - mu) * w + mu * vertex
        if not constraint.contains(w):
            raise AssertionError("iterate left the l1 ball")
        if record:
            risks.append(logistic_loss(w, data))
    return FWResult(w, T, scale, risks)


def fw_risk_bound(n: int, p: int, radius: float, rho: float, mult: float = 1.0) -> float:
    """mult * lambda^{4/3} ln(n p) / (n sqrt(rho))^{2/3}."""
    return mult * radius ** (4 / 3) * math.log(n * p) / (n * math.sqrt(rho)) ** (2 / 3)


# ------------------------------------------------------------------- Ising


@dataclass(frozen=True)
class IsingModel:
    A: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        th = np.array(self.theta, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != th.size:
            raise InvalidParameter("A must be p x p and theta length p")
        if not np.allclose(A, A.T, atol=0, rtol=0) or np.any(np.diag(A) != 0):
            raise InvalidParameter("A must be symmetric with zero diagonal")
        A.setflags(write=False)
        th.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "theta", th)

    @property
    def p(self) -> int:
        return int(self.theta.size)

    @property
    def width(self) -> float:
        return float((np.abs(self.A).sum(axis=1) + np.abs(self.theta)).max())

    def energy(self, z: np.ndarray) -> np.ndarray:
        """sum_{i<j} A_ij z_i z_j + sum_i theta_i z_i, rowwise."""
        z = np.atleast_2d(z)
        return 0.5 * np.einsum("ni,ij,nj->n", z, self.A, z) + z @ self.theta

    @classmethod
    def matched_pairs(cls, p: int, eta: float) -> "IsingModel":
        A = np.zeros((p, p))
        for i in range(0, p - 1, 2):
            A[i, i + 1] = A[i + 1, i] = eta
        return cls(A, np.zeros(p))


def all_spin_states(p: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=p)))


def ising_exact_law(model: IsingModel) -> tuple[np.ndarray, np.ndarray]:
    states = all_spin_states(model.p)
    e = model.energy(states)
    w = np.exp(e - e.max())
    return states, w / w.sum()


def state_index(z: np.ndarray) -> np.ndarray:
    """Index into :func:`all_spin_states` (first coordinate most significant)."""
    bits = (np.atleast_2d(z) > 0).astype(np.int64)
    p = bits.shape[1]
    return bits @ (1 << np.arange(p - 1, -1, -1))


def pair_probability(eta: float) -> float:
    """P(Z1 = Z2 = 1) for an isolated pair when the pair term is eta*z1*z2/2 with no field."""
    return math.exp(eta) / (2 * (math.exp(eta) + 1))


def ising_gibbs(
    model: IsingModel,
    n: int,
    burnin: int | None = None,
    thin: int | None = None,
    rng=None,
    chains: int = 1,
) -> np.ndarray:
    """Systematic-scan single-site Gibbs sampling.

    ``burnin`` and ``thin`` count sweeps (p site updates each); the defaults are
    100p and p. Independent chains run side by side and their draws are
    interleaved into an ``(n, p)`` array of +-1 spins.
    """
    p = model.p
    burnin = 100 * p if burnin is None else burnin
    thin = p if thin is None else thin
    per_chain = -(-n // chains)
    z = rng.choice(np.array([-1.0, 1.0]), size=(chains, p))
    A2, th2 = 2 * model.A, 2 * model.theta
    out = np.empty((per_chain, chains, p))

    def sweep():
        for i in range(p):
            field_i = z @ A2[i] + th2[i]
            z[:, i] = np.where(rng.random(chains) < expit(field_i), 1.0, -1.0)

    for _ in range(burnin):
        sweep()
    for s in range(per_chain):
        for _ in range(max(thin, 1)):
            sweep()
        out[s] = z
    return out.reshape(-1, p)[:n]


def gibbs_visit_law(model: IsingModel, steps: int, rng, burnin: int = 1000) -> np.ndarray:
    """Empirical state law of one chain recorded after every single-site update."""
    p = model.p
    z = rng.choice(np.array([-1.0, 1.0]), size=p)
    A2, th2 = 2 * model.A, 2 * model.theta
    weights = 1 << np.arange(p - 1, -1, -1)
    idx = int(((z > 0).astype(np.int64) * weights).sum())
    counts = np.zeros(2**p, dtype=np.int64)
    u = rng.random(burnin + steps)
    for s in range(burnin + steps):
        i = s % p
        prob = 1.0 / (1.0 + math.exp(-(float(z @ A2[i]) + th2[i])))
        new = 1.0 if u[s] < prob else -1.0
        if new != z[i]:
            idx += int(weights[i]) if new > 0 else -int(weights[i])
            z[i] = new
        if s >= burnin:
            counts[idx] += 1
    return counts / steps


def ising_exact_sample(model: IsingModel, n: int, rng) -> np.ndarray:
    states, law = ising_exact_law(model)
    return states[rng.choice(law.size, size=n, p=law)]


@dataclass
class IsingEstimate:
    A_hat: np.ndarray
    theta_hat: np.ndarray
    node_budgets: list
    weights: list

    def symmetrized(self) -> np.ndarray:
        return 0.5 * (self.A_hat + self.A_hat.T)


def node_regression_data(samples: np.ndarray, i: int) -> LabeledDataset:
    z = np.asarray(samples, dtype=float)
    X = np.column_stack([np.delete(z, i, axis=1), np.ones(z.shape[0])])
    return LabeledDataset(X, z[:, i])


def learn_ising_private(
    samples: np.ndarray,
    lambda_bound: float,
    budget: PrivacyBudget,
    rng=None,
    T: int | None = None,
    symmetrize: bool = False,
) -> IsingEstimate:
    """Node-wise l1-constrained logistic regression with private Frank-Wolfe.

    Each node gets an equal share of the budget (rho/p under zCDP, (eps/p, delta/p)
    otherwise). Row i of the estimate is half the fitted weights.
    """
    z = np.asarray(samples, dtype=float)
    if z.ndim != 2 or z.shape[0] == 0:
        raise EmptyDataset("need a non-empty (n, p) sample array")
    p = z.shape[1]
    node_budget = budget if budget.is_infinite else budget.split(p)
    A_hat = np.zeros((p, p))
    theta_hat = np.zeros(p)
    ws = []
    for i in range(p):
        data = node_regression_data(z, i)
        res = private_frank_wolfe(data, L1Constraint(2 * lambda_bound), node_budget, T, rng)
        others = [j for j in range(p) if j != i]
        A_hat[i, others] = 0.5 * res.w[:-1]
        theta_hat[i] = 0.5 * res.w[-1]
        ws.append(res.w)
    if symmetrize:
        A_hat = 0.5 * (A_hat + A_hat.T)
    return IsingEstimate(A_hat, theta_hat, [node_budget] * p, ws)
