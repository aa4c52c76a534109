"""Approximate maximum selection with adversarial comparators, Scheffe tests and
locally private hypothesis selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dist import DiscreteDistribution, sample_symbols
from .errors import EmptyInput, GroupTooSmall, InvalidParameter
from .mechanisms import laplace_noise, randomized_response, rr_debias


class RoundViolation(RuntimeError):
    """A query was issued while another round was still being answered."""


# ------------------------------------------------------------------- oracle


@dataclass(frozen=True)
class ItemSet:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ids(self) -> list[int]:
        return list(range(self.values.size))

    @property
    def k(self) -> int:
        return int(self.values.size)


class ComparatorOracle:
    """Comparison channel over hidden values.

    Pairs whose values differ by more than one are answered with the larger item.
    Close pairs are answered by the policy:

    * ``honest``: the larger value (lower id on equal values);
    * ``random``: a fair coin from the oracle's own stream;
    * ``greedy``: against whichever item has more wins in earlier rounds;
    * ``scripted``: ``script(i, j, history)`` returning the winner.

    All queries of a round are submitted together through :meth:`query_round`,
    and every answer is computed from the values and the log of earlier rounds
    before any answer is returned.
    """

    POLICIES = ("honest", "random", "greedy", "scripted")

    def __init__(self, values, policy: str = "honest", seed=None, script: Callable | None = None):
        if policy not in self.POLICIES:
            raise InvalidParameter(f"unknown policy {policy!r}")
        if policy == "scripted" and script is None:
            raise InvalidParameter("scripted policy needs a script")
        self.items = values if isinstance(values, ItemSet) else ItemSet(values)
        self.policy = policy
        self.script = script
        self.rng = np.random.default_rng(seed)
        self.query_log: list[tuple[int, int, int, int]] = []  # (i, j, winner, round)
        self.round_log: list[int] = []
        self._open = False
        self._wins: dict[int, int] = {}

    @property
    def values(self) -> np.ndarray:
        return self.items.values

    @property
    def total_queries(self) -> int:
        return len(self.query_log)

    def _answer(self, i: int, j: int, history) -> int:
        v = self.values
        if abs(v[i] - v[j]) > 1:
            return i if v[i] > v[j] else j
        if self.policy == "honest":
            if v[i] == v[j]:
                return min(i, j)
            return i if v[i] > v[j] else j
        if self.policy == "random":
            return i if self.rng.random() < 0.5 else j
        if self.policy == "greedy":
            wi, wj = self._wins.get(i, 0), self._wins.get(j, 0)
            if wi != wj:
                return j if wi > wj else i
            return i if v[i] < v[j] else j
        w = self.script(i, j, history)
        if w not in (i, j):
            raise InvalidParameter("script must return one of the compared items")
        return w

    def query_round(self, pairs: Sequence[tuple[int, int]]) -> list[int]:
        if self._open:
            raise RoundViolation("a round is already being answered")
        self._open = True
        try:
            rnd = len(self.round_log)
            history = tuple(self.query_log)
            answers = [self._answer(int(i), int(j), history) for i, j in pairs]
        finally:
            self._open = False
        for (i, j), w in zip(pairs, answers):
            self.query_log.append((int(i), int(j), w, rnd))
            self._wins[w] = self._wins.get(w, 0) + 1
        self.round_log.append(len(pairs))
        return answers


@dataclass
class Transcript:
    rounds: int
    total_queries: int
    per_round: list[int]
    winner: int
    winner_value: float = float("nan")
    gap: float = float("nan")
    survivors_last_round: int = 0
    extra: dict = field(default_factory=dict)


def _finish(cmp, winner: int, per_round: list[int], last: int) -> Transcript:
    vals = getattr(cmp, "values", None)
    wv = float(vals[winner]) if vals is not None else float("nan")
    gap = float(vals.max() - wv) if vals is not None else float("nan")
    return Transcript(len(per_round), sum(per_round), per_round, winner, wv, gap, last)


def _ids(items) -> list[int]:
    ids = items.ids if isinstance(items, ItemSet) else [int(i) for i in items]
    if not ids:
        raise EmptyInput("no items")
    return ids


def _group_winners(groups: list[list[int]], cmp, per_round: list[int]) -> list[int]:
    """One round of all-pairs comparisons inside each group; most wins, lowest id on ties."""
    pairs = [p for g in groups for p in itertools.combinations(g, 2)]
    if pairs:
        answers = cmp.query_round(pairs)
        per_round.append(len(pairs))
    else:
        answers = []
    wins: dict[int, int] = {}
    for w in answers:
        wins[w] = wins.get(w, 0) + 1
    return [min(g, key=lambda x: (-wins.get(x, 0), x)) for g in groups]


def round_robin(items, cmp) -> Transcript:
    ids = _ids(items)
    per_round: list[int] = []
    (winner,) = _group_winners([ids], cmp, per_round)
    return _finish(cmp, winner, per_round, len(ids))


def stage_group_size(k: int, s: int) -> int:
    """ceil(k^{1/(2^s - 1)}) computed in integers."""
    e = 2**s - 1
    g = max(1, int(round(k ** (1.0 / e))))
    while g**e < k:
        g += 1
    while g > 1 and (g - 1) ** e >= k:
        g -= 1
    return g


def _partition(ids: list[int], g: int) -> list[list[int]]:
    return [ids[i:i + g] for i in range(0, len(ids), g)]


def _run_stages(ids: list[int], t: int, cmp, per_round: list[int], stop_before_last: bool) -> list[int]:
    survivors = list(ids)
    for s in range(t, 1, -1):
        g = stage_group_size(len(survivors), s)
        survivors = _group_winners(_partition(survivors, g), cmp, per_round)
    if stop_before_last:
        return survivors
    return _group_winners([survivors], cmp, per_round)


def multi_round(items, t: int, cmp) -> Transcript:
    """t-round tournament: stage s splits survivors into groups of ceil(k_s^{1/(2^s-1)})."""
    if t < 1:
        raise InvalidParameter("t must be >= 1")
    ids = _ids(items)
    per_round: list[int] = []
    last = _run_stages(ids, t, cmp, per_round, True)
    (winner,) = _group_winners([last], cmp, per_round)
    return _finish(cmp, winner, per_round, len(last))


def multi_round_query_count(k: int, t: int) -> int:
    """Queries issued by :func:`multi_round` on k items (with remainder groups)."""
    total = 0
    for s in range(t, 1, -1):
        g = stage_group_size(k, s)
        full, rem = divmod(k, g)
        total += full * math.comb(g, 2) + math.comb(rem, 2)
        k = full + (1 if rem else 0)
    return total + math.comb(k, 2)


def survivors_exponent(t: int) -> float:
    return 2 ** (t - 1) / (2**t - 1)


def better_multi_round(items, t: int, cmp, rng, h_const: float = 100.0) -> Transcript:
    """Multi-round halted before its last round, then round robin on survivors plus a random subset."""
    if t < 1:
        raise InvalidParameter("t must be >= 1")
    ids = _ids(items)
    k = len(ids)
    per_round: list[int] = []
    if t == 1:
        (winner,) = _group_winners([ids], cmp, per_round)
        return _finish(cmp, winner, per_round, k)
    perm = [ids[i] for i in rng.permutation(k)]
    L = _run_stages(perm, t, cmp, per_round, True)
    h_size = min(k, int(math.ceil(h_const * k ** survivors_exponent(t))))
    H = [ids[i] for i in rng.choice(k, size=h_size, replace=False)]
    final = sorted(set(L) | set(H))
    (winner,) = _group_winners([final], cmp, per_round)
    tr = _finish(cmp, winner, per_round, len(final))
    tr.extra.update(L=len(L), H=h_size)
    return tr


# ------------------------------------------------------------------- Scheffe


def scheffe_set(q1, q2) -> np.ndarray:
    a, b = np.asarray(_p(q1)), np.asarray(_p(q2))
    return a > b


def _p(q):
    return q.probs if isinstance(q, DiscreteDistribution) else np.asarray(q, dtype=float)


def _scheffe_decide(p_hat_S: float, q1, q2, S: np.ndarray) -> int:
    d1 = abs(_p(q1)[S].sum() - p_hat_S)
    d2 = abs(_p(q2)[S].sum() - p_hat_S)
    # strict comparison: ties go to the second hypothesis
    return 0 if d1 < d2 else 1


def scheffe(samples, q1, q2) -> int:
    """Index (0 or 1) of the hypothesis whose mass on {q1 > q2} is closer to the empirical one."""
    sym = np.asarray(getattr(samples, "symbols", samples))
    S = scheffe_set(q1, q2)
    p_hat = float(S[sym].mean()) if sym.size else 0.0
    return _scheffe_decide(p_hat, q1, q2, S)


def ldp_scheffe_messages(user_samples, q1, q2, epsilon: float, rng) -> np.ndarray:
    """One randomized-response bit per user: the report of 1{X in S}."""
    sym = np.asarray(getattr(user_samples, "symbols", user_samples))
    bits = scheffe_set(q1, q2)[sym].astype(np.int64)
    if math.isinf(epsilon):
        return bits
    return np.atleast_1d(randomized_response(bits, epsilon, rng))


def ldp_scheffe(user_samples, q1, q2, epsilon: float, rng) -> int:
    msgs = ldp_scheffe_messages(user_samples, q1, q2, epsilon, rng)
    if msgs.size == 0:
        raise GroupTooSmall("no users")
    mean = float(msgs.mean())
    est = mean if math.isinf(epsilon) else float(rr_debias(mean, epsilon))
    return _scheffe_decide(est, q1, q2, scheffe_set(q1, q2))


class LDPScheffeComparator:
    """Comparator answering each query with an LDP Scheffe test on a fresh user group."""

    def __init__(self, Q, user_samples, epsilon: float, group_size: int, rng):
        self.Q = list(Q)
        self.users = np.asarray(getattr(user_samples, "symbols", user_samples))
        self.epsilon = epsilon
        self.group_size = int(group_size)
        self.rng = rng
        self.next_user = 0
        self.usage = np.zeros(self.users.size, dtype=np.int64)
        self.round_log: list[int] = []
        self.query_log: list[tuple[int, int, int, int]] = []
        self.values = None
        self._open = False

    def query_round(self, pairs):
        if self._open:
            raise RoundViolation("a round is already being answered")
        self._open = True
        try:
            answers = []
            for i, j in pairs:
                lo, hi = self.next_user, self.next_user + self.group_size
                if hi > self.users.size:
                    raise GroupTooSmall("ran out of users for the tournament")
                self.usage[lo:hi] += 1
                self.next_user = hi
                pick = ldp_scheffe(self.users[lo:hi], self.Q[i], self.Q[j], self.epsilon, self.rng)
                w = (i, j)[pick]
                answers.append(w)
                self.query_log.append((i, j, w, len(self.round_log)))
        finally:
            self._open = False
        self.round_log.append(len(pairs))
        return answers


class _CountingComparator:
    """Data-free comparator used to count the queries a tournament will issue."""

    def __init__(self):
        self.values = None
        self.n = 0

    def query_round(self, pairs):
        self.n += len(pairs)
        return [min(p) for p in pairs]


def default_rounds(k: int) -> int:
    return max(1, math.ceil(math.log2(max(math.log2(max(k, 2)), 1.0))))


@dataclass
class LDPSelection:
    index: int
    transcript: Transcript
    group_size: int
    usage: np.ndarray
    rounds: int


def ldp_select_tournament(
    Q,
    user_samples,
    epsilon: float,
    t: int | None = None,
    rng=None,
    group_size: int | None = None,
    h_const: float = 100.0,
) -> LDPSelection:
    """Better multi-round tournament whose comparisons are LDP Scheffe tests.

    The query count depends only on k and t, so it is computed up front and the
    users are split into that many disjoint groups (or ``group_size`` each).
    """
    k = len(Q)
    if k == 0:
        raise EmptyInput("no hypotheses")
    t = default_rounds(k) if t is None else t
    users = np.asarray(getattr(user_samples, "symbols", user_samples))
    counter = _CountingComparator()
    seed = int(rng.integers(2**63))
    better_multi_round(list(range(k)), t, counter, np.random.default_rng(seed), h_const)
    n_queries = counter.n
    if group_size is None:
        group_size = users.size // max(n_queries, 1)
    if group_size < 1 or group_size * n_queries > users.size:
        raise GroupTooSmall(f"{users.size} users cannot fill {n_queries} groups of {group_size}")
    cmp = LDPScheffeComparator(Q, users, epsilon, group_size, rng)
    tr = better_multi_round(list(range(k)), t, cmp, np.random.default_rng(seed), h_const)
    return LDPSelection(tr.winner, tr, group_size, cmp.usage, len(cmp.round_log))


# ----------------------------------------------------------------- flattening


@dataclass(frozen=True)
class Flattening:
    """Randomized map phi = (phi' + uniform)/2 from [size] to [n_prime] buckets."""

    N: int
    buckets: tuple[int, ...]  # |S_a| = ceil(M(a) N)
    starts: tuple[int, ...]
    n_prime: int

    def pushforward(self, q) -> list:
        """Exact masses of phi(q); entries are Fractions when q holds Fractions."""
        q = list(q)
        half = Fraction(1, 2) if isinstance(q[0], Fraction) else 0.5
        unif = half / self.n_prime
        out = [unif] * self.n_prime
        for a, qa in enumerate(q):
            if qa == 0:
                continue
            m = self.buckets[a]
            share = half * qa / m
            for b in range(self.starts[a], self.starts[a] + m):
                out[b] = out[b] + share
        return out

    def apply(self, symbols, rng) -> np.ndarray:
        sym = np.asarray(symbols, dtype=np.int64)
        buckets = np.asarray(self.buckets)
        starts = np.asarray(self.starts)
        u = rng.random(sym.size)
        own = buckets[sym]
        local = starts[sym] + np.floor(rng.random(sym.size) * np.maximum(own, 1)).astype(np.int64)
        anywhere = rng.integers(0, self.n_prime, size=sym.size)
        use_own = (u < 0.5) & (own > 0)
        return np.where(use_own, local, anywhere)


def flatten(Q, N: int | None = None) -> tuple[Flattening, list]:
    """Flatten hypotheses over a common domain; returns the map and the pushforwards.

    Works on floats or on exact Fractions. ``N`` defaults to the domain size,
    which keeps N' <= (len(Q) + 1) N.
    """
    rows = [list(_p(q)) if not isinstance(q, (list, tuple)) else list(q) for q in Q]
    if not rows:
        raise EmptyInput("no hypotheses")
    size = len(rows[0])
    N = size if N is None else int(N)
    if N < size:
        raise InvalidParameter("N must be at least the domain size")
    buckets = []
    for a in range(size):
        M = max(r[a] for r in rows)
        # float products like 0.3 * 10 can land a hair above an integer
        buckets.append(int(math.ceil(M * N - 1e-9)) if not isinstance(M, Fraction) else -((-M.numerator * N) // M.denominator))
    starts = tuple(int(s) for s in np.concatenate(([0], np.cumsum(buckets)[:-1])))
    fl = Flattening(N, tuple(buckets), starts, int(sum(buckets)))
    return fl, [fl.pushforward(r) for r in rows]


@dataclass
class LoglikSelection:
    index: int
    scores: np.ndarray
    L: float
    messages: np.ndarray
    group_of_user: np.ndarray


def ldp_loglik_select(Q, user_samples, epsilon: float, L: float | None = None, rng=None, min_group: int = 1) -> LoglikSelection:
    """Non-interactive selection by noisy log-likelihood ratios against uniform.

    Hypotheses are flattened, each user maps their sample through the flattening
    and sends one message log(gamma(X)/q_i(X)) + Laplace(L/eps) for the
    hypothesis i assigned to their group. ``L`` defaults to the exact range of the
    log ratio, which bounds the change of one message.
    """
    k = len(Q)
    users = np.asarray(getattr(user_samples, "symbols", user_samples))
    groups = np.array_split(np.arange(users.size), k)
    if min(len(g) for g in groups) < max(min_group, 1):
        raise GroupTooSmall(f"{users.size} users cannot fill {k} groups")
    fl, flat = flatten(Q)
    flat = np.array([[float(x) for x in row] for row in flat])
    logratio = np.log(1.0 / fl.n_prime) - np.log(flat)
    if L is None:
        L = float(logratio.max() - logratio.min())
    mapped = fl.apply(users, rng)
    msgs = np.empty(users.size)
    group_of_user = np.empty(users.size, dtype=np.int64)
    scores = np.empty(k)
    for i, g in enumerate(groups):
        z = logratio[i, mapped[g]]
        if not math.isinf(epsilon):
            z = z + laplace_noise(L / epsilon, rng, z.size)
        msgs[g] = z
        group_of_user[g] = i
        scores[i] = z.mean()
    return LoglikSelection(int(np.argmin(scores)), scores, L, msgs, group_of_user)


def draw_separated_hypotheses(k: int, domain: int, min_tv: float, rng, conc: float = 0.3, max_tries: int = 100000):
    """Random hypotheses over [domain] with pairwise TV at least ``min_tv``."""
    out: list[np.ndarray] = []
    for _ in range(max_tries):
        cand = rng.dirichlet(np.full(domain, conc))
        if all(0.5 * np.abs(cand - q).sum() >= min_tv for q in out):
            out.append(cand)
            if len(out) == k:
                return [DiscreteDistribution(q / q.sum()) for q in out]
    raise InvalidParameter("could not draw separated hypotheses; enlarge the domain")


def sample_users(p: DiscreteDistribution, n: int, rng) -> np.ndarray:
    return sample_symbols(p.probs, n, rng)
