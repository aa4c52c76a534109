"""Command-line entry point: ``dpinfer <subcommand>``.

Results are JSON (CSV for ``experiment`` and ``ising-sample``), written to
``--out`` or stdout, with every number at 12 significant digits. Errors exit
with status 2 and a JSON diagnostic on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import couplings, estimation, harness, optim, properties, selection, testing
from .constants import DEFAULT_CONSTANTS, Constants
from .dist import DiscreteDistribution, SampleSet, make_distribution, paninski, sample
from .errors import ConfigError, DPInferError
from .mechanisms import PrivacyBudget


class State:
    def __init__(self, seed, out, trials, constants, config_path, config_text):
        self.seed = seed
        self.out = out
        self.trials = trials
        self.constants = constants
        self.config_path = config_path
        self.config_text = config_text

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))

    def emit(self, obj) -> None:
        text = json.dumps(harness.rounded(obj), indent=2, sort_keys=True) + "\n"
        self.write(text)

    def write(self, text: str) -> None:
        if self.out:
            Path(self.out).write_text(text)
        else:
            click.echo(text, nl=False)


def _fail(exc: Exception, code: int = 2):
    diag = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("field", "line"):
        v = getattr(exc, attr, None)
        if v is not None:
            diag[attr] = v
    click.echo(json.dumps(diag), err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except DPInferError as exc:
            _fail(exc)

    return wrapper


def budget_options(fn):
    fn = click.option("--rho", type=float, default=None, help="zCDP budget (overrides epsilon)")(fn)
    fn = click.option("--delta", type=float, default=0.0, show_default=True)(fn)
    fn = click.option("--epsilon", type=float, default=1.0, show_default=True, help="use 'inf' for no privacy")(fn)
    return fn


def make_budget(epsilon, delta, rho) -> PrivacyBudget:
    if rho is not None:
        return PrivacyBudget(rho=rho)
    return PrivacyBudget(epsilon=epsilon, delta=delta)


def _samples(path, k) -> SampleSet:
    return harness.read_sample_file(path, k)


def _dist(kind: str, k: int, rng, **kw) -> DiscreteDistribution:
    return make_distribution(kind, k=k, rng=rng, **kw)


def _probs_file(path) -> DiscreteDistribution:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, field=str(path), line=exc.lineno) from exc
    return DiscreteDistribution.from_weights(np.asarray(data, dtype=float))


# ------------------------------------------------------------------ group


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="root seed for all randomness")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="experiment config, or per-command option defaults keyed by subcommand")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None, help="output file (default stdout)")
@click.option("--trials", type=int, default=None, help="Monte Carlo trials for synthetic runs")
@click.option("--constants-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON constants record from 'dpinfer calibrate'")
@click.pass_context
def main(ctx, seed, config_path, out, trials, constants_file):
    """Private distribution testing, estimation and selection tools."""
    try:
        constants = Constants.load(constants_file) if constants_file else DEFAULT_CONSTANTS
        text = Path(config_path).read_text() if config_path else None
        if text is not None:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc.msg}", field="config", line=exc.lineno) from exc
            if isinstance(data, dict) and "task" not in data:
                ctx.default_map = data
    except DPInferError as exc:
        _fail(exc)
    if trials is not None and trials < 1:
        _fail(ConfigError("--trials must be positive", field="trials"))
    ctx.obj = State(seed, out, trials, constants, config_path, text)


pass_state = click.pass_obj


# ---------------------------------------------------------------- testers


def _tester_cfg(state, k, alpha, epsilon, delta, rho, poisson):
    return testing.TesterConfig(k, alpha, make_budget(epsilon, delta, rho), state.constants, poisson)


def _outcome(o: testing.TestOutcome, n: int) -> dict:
    return {"decision": o.decision, "statistic": o.statistic_value, "released_bit": o.released_bit, "n": n}


@main.command("test-uniformity")
@click.option("--k", type=int, required=True)
@click.option("--alpha", type=float, required=True)
@budget_options
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), help="1-based symbol file")
@click.option("--n", type=int, default=None, help="synthetic sample size (default: calibrated sample complexity)")
@click.option("--truth", type=click.Choice(["uniform", "far"]), default="uniform", help="synthetic source")
@click.option("--poisson", is_flag=True)
@pass_state
@guarded
def test_uniformity(state, k, alpha, epsilon, delta, rho, samples, n, truth, poisson):
    """Private uniformity test on a file or on synthetic draws."""
    cfg = _tester_cfg(state, k, alpha, epsilon, delta, rho, poisson)
    rng = state.rng()
    if samples:
        s = _samples(samples, k)
        state.emit(_outcome(testing.uniformity_test(s, cfg, rng), s.n))
        return
    n = n or testing.sample_complexity("UT", k, alpha, cfg.budget, state.constants)
    trials = state.trials or 100
    acc = []
    for _ in range(trials):
        p = DiscreteDistribution.uniform(k) if truth == "uniform" else paninski(k, alpha, np.where(rng.random(k // 2) < 0.5, -1, 1))
        acc.append(testing.uniformity_test(sample(p, n, rng), cfg, rng).accepted)
    state.emit({"truth": truth, "n": n, "trials": trials, "accept_rate": float(np.mean(acc))})


@main.command("test-identity")
@click.option("--q", "q_path", type=click.Path(exists=True, dir_okay=False), help="JSON list of reference weights")
@click.option("--q-dist", default="zipf", show_default=True, help="named reference family when --q is absent")
@click.option("--k", type=int, required=True)
@click.option("--alpha", type=float, required=True)
@budget_options
@click.option("--samples", type=click.Path(exists=True, dir_okay=False))
@click.option("--n", type=int, default=None)
@click.option("--truth", type=click.Choice(["reference", "far"]), default="reference")
@pass_state
@guarded
def test_identity(state, q_path, q_dist, k, alpha, epsilon, delta, rho, samples, n, truth):
    """Private identity test against a known reference distribution."""
    rng = state.rng()
    q = _probs_file(q_path) if q_path else _dist(q_dist, k, rng)
    if q.k != k:
        raise ConfigError(f"reference has {q.k} symbols, expected {k}", field="q")
    cfg = _tester_cfg(state, k, alpha, epsilon, delta, rho, False)
    if samples:
        s = _samples(samples, k)
        state.emit(_outcome(testing.identity_test(q, s, cfg, rng), s.n))
        return
    n = n or testing.sample_complexity("IT", k, alpha, cfg.budget, state.constants)
    src = q if truth == "reference" else harness.far_distribution(q, alpha)
    trials = state.trials or 100
    acc = [testing.identity_test(q, sample(src, n, rng), cfg, rng).accepted for _ in range(trials)]
    state.emit({"truth": truth, "n": n, "trials": trials, "accept_rate": float(np.mean(acc))})


@main.command("test-closeness")
@click.option("--k", type=int, required=True)
@click.option("--alpha", type=float, required=True)
@budget_options
@click.option("--samples-p", type=click.Path(exists=True, dir_okay=False))
@click.option("--samples-q", type=click.Path(exists=True, dir_okay=False))
@click.option("--n", type=int, default=None, help="synthetic samples per source")
@click.option("--truth", type=click.Choice(["same", "far"]), default="same")
@click.option("--poisson", is_flag=True)
@pass_state
@guarded
def test_closeness(state, k, alpha, epsilon, delta, rho, samples_p, samples_q, n, truth, poisson):
    """Private two-sample closeness test."""
    cfg = _tester_cfg(state, k, alpha, epsilon, delta, rho, poisson)
    rng = state.rng()
    if samples_p or samples_q:
        if not (samples_p and samples_q):
            raise ConfigError("give both --samples-p and --samples-q", field="samples")
        sp, sq = _samples(samples_p, k), _samples(samples_q, k)
        o = testing.closeness_test(sp, sq, cfg, rng)
        state.emit(_outcome(o, min(sp.n, sq.n)))
        return
    n = n or testing.sample_complexity("CT", k, alpha, cfg.budget, state.constants)
    U = DiscreteDistribution.uniform(k)
    trials = state.trials or 100
    acc = []
    for _ in range(trials):
        other = U if truth == "same" else paninski(k, alpha, np.where(rng.random(k // 2) < 0.5, -1, 1))
        acc.append(testing.closeness_test(sample(U, n, rng), sample(other, n, rng), cfg, rng).accepted)
    state.emit({"truth": truth, "n": n, "trials": trials, "accept_rate": float(np.mean(acc))})


# -------------------------------------------------------------- estimators


def _source(state, samples, k, dist, n, rng):
    if samples:
        return _samples(samples, k), None
    if n is None:
        raise ConfigError("give --samples or --n for a synthetic run", field="n")
    p = _dist(dist, k, rng)
    return sample(p, n, rng), p


@main.command("estimate-entropy")
@click.option("--k", type=int, required=True)
@budget_options
@click.option("--method", type=click.Choice(["poly", "empirical"]), default="poly", show_default=True)
@click.option("--lam", type=float, default=0.5, show_default=True, help="noise-floor exponent of the poly estimator")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", default="uniform", show_default=True)
@click.option("--n", type=int, default=None)
@pass_state
@guarded
def estimate_entropy(state, k, epsilon, delta, rho, method, lam, samples, dist, n):
    """Private Shannon entropy (nats)."""
    rng = state.rng()
    budget = make_budget(epsilon, delta, rho)
    s, p = _source(state, samples, k, dist, n, rng)
    if method == "poly":
        est = properties.entropy_private_poly(s, k, 0.1, budget, lam, rng)
    else:
        est = properties.entropy_private_empirical(s, budget, rng)
    out = {"estimate": est.value, "noise_scale": est.noise_scale, "sensitivity": est.sensitivity, "method": method, "n": s.n}
    if p is not None:
        out["truth"] = p.entropy()
    state.emit(out)


@main.command("estimate-coverage")
@click.option("--k", type=int, required=True)
@click.option("--m", type=int, required=True, help="number of future draws")
@click.option("--alpha", type=float, default=0.1, show_default=True)
@budget_options
@click.option("--r-mode", type=click.Choice(["theory", "experiment"]), default="theory", show_default=True)
@click.option("--samples", type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", default="uniform", show_default=True)
@click.option("--n", type=int, default=None)
@pass_state
@guarded
def estimate_coverage(state, k, m, alpha, epsilon, delta, rho, r_mode, samples, dist, n):
    """Private expected number of distinct symbols in m draws."""
    rng = state.rng()
    s, p = _source(state, samples, k, dist, n, rng)
    est = properties.coverage_private(s, k, m, alpha, make_budget(epsilon, delta, rho), rng, r_mode)
    out = {"estimate": est.value, "noise_scale": est.noise_scale, "regime": est.regime, "sensitivity": est.sensitivity, "n": s.n}
    if p is not None:
        out["truth"] = properties.coverage_expected(p.probs, m)
    state.emit(out)


@main.command("estimate-support")
@click.option("--k", type=int, required=True, help="1/k lower-bounds every nonzero mass")
@click.option("--alpha", type=float, default=0.1, show_default=True)
@budget_options
@click.option("--samples", type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", default="uniform", show_default=True)
@click.option("--n", type=int, default=None)
@pass_state
@guarded
def estimate_support(state, k, alpha, epsilon, delta, rho, samples, dist, n):
    """Private support size."""
    rng = state.rng()
    s, p = _source(state, samples, k, dist, n, rng)
    est = properties.support_size_private(s, k, alpha, make_budget(epsilon, delta, rho), rng)
    out = {"estimate": est.value, "noise_scale": est.noise_scale, "regime": est.regime, "n": s.n}
    if p is not None:
        out["truth"] = p.support_size()
    state.emit(out)


@main.command("estimate-distribution")
@click.option("--k", type=int, required=True)
@budget_options
@click.option("--samples", type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", default="uniform", show_default=True)
@click.option("--n", type=int, default=None)
@pass_state
@guarded
def estimate_distribution(state, k, epsilon, delta, rho, samples, dist, n):
    """Private k-ary distribution estimate, projected onto the simplex."""
    rng = state.rng()
    s, p = _source(state, samples, k, dist, n, rng)
    budget = make_budget(epsilon, delta, rho)
    est = estimation.estimate_kary_private(s, k, budget, rng)
    out = {"probs": est.probs.tolist(), "n": s.n}
    if p is not None:
        out["tv_error"] = float(0.5 * np.abs(est.probs - p.probs).sum())
    state.emit(out)


# ---------------------------------------------------------------- couplings


@main.command("coupling-verify")
@click.option("--kind", type=click.Choice(["coin", "maximal", "paninski"]), required=True)
@click.option("--n", type=int, required=True, help="dataset length")
@click.option("--b1", type=float, default=0.4)
@click.option("--b2", type=float, default=0.6)
@click.option("--k", type=int, default=10)
@click.option("--alpha", type=float, default=0.1)
@click.option("--path", type=click.Choice(["auto", "max", "monotone"]), default="auto")
@pass_state
@guarded
def coupling_verify(state, kind, n, b1, b2, k, alpha, path):
    """Monte Carlo mean Hamming distance of a coupling against its bound."""
    rng = state.rng()
    if kind == "coin":
        c = couplings.coin_coupling(b1, b2, n)
    elif kind == "maximal":
        c = couplings.maximal_coupling(paninski(k, alpha, np.ones(k // 2)), DiscreteDistribution.uniform(k), n)
    else:
        c = couplings.paninski_coupling(k, alpha, n, path, state.constants)
    est = couplings.expected_hamming_mc(c, state.trials or 10000, rng)
    state.emit({"kind": kind, "mean_hamming": est.mean, "stderr": est.stderr, "bound": est.bound, "violated": bool(est.violated)})


@main.command("codes-gv")
@click.option("--k", type=int, required=True, help="code length")
@click.option("--weight", type=int, required=True)
@click.option("--min-dist", type=int, default=None, help="default weight/4")
@click.option("--list", "show", is_flag=True, help="include the codewords")
@pass_state
@guarded
def codes_gv(state, k, weight, min_dist, show):
    """Greedy constant-weight code and the size guarantees it is compared with."""
    d = max(1, weight // 4) if min_dist is None else min_dist
    code = couplings.gv_constant_weight_code(k, weight, d)
    out = {"size": code.size, "length": k, "weight": weight, "min_distance": d,
           "greedy_floor": couplings.gv_greedy_floor(k, weight, d), "size_lower_bound": couplings.gv_size_lower_bound(k, weight)}
    if show:
        out["codewords"] = code.as_array().tolist()
    state.emit(out)


# ---------------------------------------------------------------- selection


@main.command("select-tournament")
@click.option("--k", type=int, required=True)
@click.option("--t", "rounds", type=int, default=2, show_default=True)
@click.option("--algorithm", type=click.Choice(["round_robin", "multi_round", "better_multi_round"]), default="better_multi_round")
@click.option("--policy", type=click.Choice(["honest", "random", "greedy"]), default="random")
@click.option("--values", "values_path", type=click.Path(exists=True, dir_okay=False), help="JSON list of item values")
@pass_state
@guarded
def select_tournament(state, k, rounds, algorithm, policy, values_path):
    """Maximum selection with an adversarial comparator."""
    rng = state.rng()
    trials = state.trials or 1
    results = []
    for _ in range(trials):
        vals = np.asarray(json.loads(Path(values_path).read_text()), float) if values_path else rng.uniform(0, k / 4, size=k)
        cmp = selection.ComparatorOracle(vals, policy, seed=int(rng.integers(2**63)))
        if algorithm == "round_robin":
            tr = selection.round_robin(range(len(vals)), cmp)
        elif algorithm == "multi_round":
            tr = selection.multi_round(range(len(vals)), rounds, cmp)
        else:
            tr = selection.better_multi_round(range(len(vals)), rounds, cmp, rng)
        results.append(tr)
    last = results[-1]
    state.emit({
        "winner": last.winner, "gap": last.gap, "rounds": last.rounds,
        "per_round": last.per_round, "total_queries": last.total_queries,
        "trials": trials, "mean_gap": float(np.mean([r.gap for r in results])),
    })


@main.command("select-ldp")
@click.option("--k", type=int, required=True, help="number of hypotheses")
@click.option("--domain", type=int, default=8, show_default=True)
@click.option("--users", type=int, required=True)
@click.option("--epsilon", type=float, default=1.0, show_default=True)
@click.option("--min-tv", type=float, default=0.3, show_default=True)
@click.option("--method", type=click.Choice(["loglik", "tournament"]), default="loglik")
@pass_state
@guarded
def select_ldp(state, k, domain, users, epsilon, min_tv, method):
    """Locally private hypothesis selection on synthetic hypotheses."""
    rng = state.rng()
    trials = state.trials or 10
    hits = []
    for _ in range(trials):
        Q = selection.draw_separated_hypotheses(k, domain, min_tv, rng)
        truth = int(rng.integers(k))
        data = selection.sample_users(Q[truth], users, rng)
        if method == "loglik":
            pick = selection.ldp_loglik_select(Q, data, epsilon, rng=rng).index
        else:
            pick = selection.ldp_select_tournament(Q, data, epsilon, rng=rng).index
        hits.append(pick == truth)
    state.emit({"method": method, "trials": trials, "success_rate": float(np.mean(hits))})


# ---------------------------------------------------------------- optimization


@main.command("ising-sample")
@click.option("--p", "p_nodes", type=int, required=True)
@click.option("--eta", type=float, default=0.5, show_default=True, help="pair weight of the matched-pairs model")
@click.option("--n", type=int, required=True)
@click.option("--method", type=click.Choice(["gibbs", "exact"]), default="gibbs", show_default=True)
@pass_state
@guarded
def ising_sample(state, p_nodes, eta, n, method):
    """Draw +-1 spin vectors; one CSV row per sample."""
    rng = state.rng()
    model = optim.IsingModel.matched_pairs(p_nodes, eta)
    z = optim.ising_gibbs(model, n, rng=rng) if method == "gibbs" else optim.ising_exact_sample(model, n, rng)
    state.write("\n".join(",".join(str(int(v)) for v in row) for row in z) + "\n")


def _read_matrix(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", field=str(path)) from exc


@main.command("ising-learn")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), required=True, help="CSV of +-1 rows")
@click.option("--lambda-bound", type=float, required=True, help="width bound of the model")
@budget_options
@click.option("--T", "iters", type=int, default=None, help="Frank-Wolfe iterations per node")
@pass_state
@guarded
def ising_learn(state, samples, lambda_bound, epsilon, delta, rho, iters):
    """Private Ising interaction-matrix estimate."""
    z = _read_matrix(samples)
    budget = make_budget(epsilon, delta, rho)
    if budget.is_infinite and iters is None:
        iters = 500
    est = optim.learn_ising_private(z, lambda_bound, budget, state.rng(), iters, symmetrize=True)
    state.emit({"A_hat": est.A_hat.tolist(), "theta_hat": est.theta_hat.tolist()})


@main.command("fw-run")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), help="CSV rows: features..., label in {-1, 1}")
@click.option("--n", type=int, default=1000, show_default=True, help="synthetic size when --data is absent")
@click.option("--p", "p_dim", type=int, default=5, show_default=True)
@click.option("--radius", type=float, default=1.0, show_default=True)
@budget_options
@click.option("--T", "iters", type=int, default=None)
@pass_state
@guarded
def fw_run(state, data, n, p_dim, radius, epsilon, delta, rho, iters):
    """Private Frank-Wolfe logistic regression over an l1 ball."""
    rng = state.rng()
    if data:
        m = _read_matrix(data)
        ds = optim.LabeledDataset(m[:, :-1], m[:, -1])
    else:
        ds = harness._synthetic_logistic(n, p_dim, rng, radius)
    budget = make_budget(epsilon, delta, rho)
    if budget.is_infinite and iters is None:
        iters = 1000
    res = optim.private_frank_wolfe(ds, optim.L1Constraint(radius), budget, iters, rng)
    state.emit({"w": res.w.tolist(), "T": res.T, "noise_scale": res.noise_scale, "risk": optim.logistic_loss(res.w, ds)})


# ---------------------------------------------------------------- harness


@main.command("calibrate")
@click.option("--quick", is_flag=True, help="fewer Monte Carlo repetitions for the slow stages")
@pass_state
@guarded
def calibrate(state, quick):
    """Recompute the constants record; pass it back in with --constants-file."""
    trials = state.trials or harness.CalibrationConfig.trials
    res = harness.calibrate_constants(harness.CalibrationConfig(seed=state.seed, trials=trials, quick=quick))
    text = json.dumps(harness.rounded(res.constants.to_dict()), indent=2, sort_keys=True) + "\n"
    state.write(text)
    click.echo(json.dumps(harness.rounded({"diagnostics": {k: v for k, v in res.diagnostics.items() if not isinstance(v, dict)}})), err=True)


@main.command("experiment")
@click.argument("config", required=False, type=click.Path(exists=True, dir_okay=False))
@pass_state
@guarded
def experiment(state, config):
    """Run a grid experiment from a JSON config; writes CSV."""
    path = config or state.config_path
    if path is None:
        raise ConfigError("experiment needs a config file (argument or --config)", field="config")
    cfg = harness.load_config(path)
    if state.trials is not None:
        cfg = harness.ExperimentConfig(**{**cfg.__dict__, "trials": state.trials})
    table = harness.run_experiment(cfg, state.constants)
    text = table.to_csv()
    out = state.out or cfg.output
    if out:
        Path(out).write_text(text)
        Path(str(out) + ".constants.json").write_text(json.dumps(table.constants.to_dict(), indent=2, sort_keys=True) + "\n")
    else:
        click.echo(text, nl=False)
        click.echo(json.dumps({"constants": harness.rounded(table.constants.to_dict())}), err=True)


if __name__ == "__main__":
    main()
