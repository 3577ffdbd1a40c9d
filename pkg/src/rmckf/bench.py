"""Monte Carlo benchmark harness for the two built-in tracking problems."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bandwidth import _choose
from .config import BandwidthGrid, FilterConfig
from .diagnostics import grammians, risk_positivity_audit, stability_condition
from .exceptions import ObservabilityDegenerate
from .filter import FAMILY, run_filter
from .noise import GaussianMixture
from .system import UncertainLinearModel, simulate

__all__ = [
    "BenchReport",
    "Experiment",
    "FilterResult",
    "builtin_problem",
    "describe_problem",
    "run_experiment",
    "write_report",
]

PROBLEMS = ("problem1", "problem2")
FILTER_NAMES = ("kf", "rskf", "mckf", "rmckf-fk", "mckf-sk", "rmckf-sk")
RMSE_DEFINITION = "sqrt(mean over valid runs of squared error) per step; avg = mean over steps"


# -- problem definitions -------------------------------------------------------

def _problem1_delta(delta):
    return np.array([[0.0, delta], [0.0, 0.0]])


def _problem2_delta(delta, T=0.1, delta1_bound=0.005):
    d1 = math.copysign(delta1_bound, delta)
    return np.array([[0.0, 0.0, d1 * T**2], [0.0, 0.0, delta * T], [0.0, 0.0, 0.0]])


def _problem1_model():
    return UncertainLinearModel(
        F=[[0.99, 0.01], [0.0, 0.99]],
        deltaF=np.zeros((2, 2)),
        G=[[5.0], [1.0]],
        H=[[1.0, -1.0]],
        q_mix=GaussianMixture.scalar([(0.8, 0.01), (0.2, 1.0)]),
        r_mix=GaussianMixture.scalar([(0.8, 1.0), (0.2, 1000.0)]),
    )


def _problem2_model(T=0.1):
    F = np.array([[1.0, T, 0.5 * T**2], [0.0, 1.0, T], [0.0, 0.0, 1.0]])
    q = GaussianMixture.scalar([(0.9, 0.0005), (0.1, 0.05)])
    return UncertainLinearModel(
        F=F,
        deltaF=np.zeros((3, 3)),
        G=np.eye(3),
        H=[[1.0, 1.0, 0.0]],
        q_mix=GaussianMixture.independent(q, 3),
        r_mix=GaussianMixture.scalar([(0.8, 0.005), (0.2, 50.0)]),
    )


_BUILTIN = {
    "problem1": dict(
        model=_problem1_model,
        perturb=_problem1_delta,
        x0=[10.0, 20.0],
        P0=np.diag([35.0**2, 70.0**2]),
        steps=500,
        deltas=(0.0, 0.3, 0.5),
        states=("x1", "x2"),
        groups=(("x2", 1),),
        sigma=5.0,
    ),
    "problem2": dict(
        model=_problem2_model,
        perturb=_problem2_delta,
        x0=[50.0, 4.0, 1.0],
        P0=np.diag([0.5**2, 0.5**2, 0.1**2]),
        steps=200,
        deltas=(0.0, 0.05),
        states=("position", "velocity", "acceleration"),
        groups=(("position", 0), ("velocity", 1)),
        sigma=5.0,
    ),
}


# -- experiment ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Experiment:
    """Everything needed to reproduce one benchmark run.

    ``perturb`` maps a sweep value to ``dF``; ``groups`` names the
    ``(label, state index)`` pairs reported in the averaged table.
    """

    model: UncertainLinearModel
    x0: np.ndarray
    P0: np.ndarray
    steps: int
    runs: int
    filters: tuple  # of (name, FilterConfig)
    delta_sweep: tuple
    seed: int
    perturb: object
    problem: str = "custom"
    states: tuple = ()
    groups: tuple = ()
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 1 or self.runs < 1:
            raise ValueError("steps and runs must be >= 1")
        names = [name for name, _ in self.filters]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate filter names in {names}")
        n = self.model.n_states
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(n))
        object.__setattr__(self, "P0", np.asarray(self.P0, dtype=float).reshape(n, n))
        object.__setattr__(self, "delta_sweep", tuple(float(d) for d in self.delta_sweep))
        if not self.states:
            object.__setattr__(self, "states", tuple(f"x{i + 1}" for i in range(n)))
        if not self.groups:
            object.__setattr__(self, "groups", tuple((s, i) for i, s in enumerate(self.states)))


DEFAULTS = dict(runs=100, seed=0, mu1=0.01, mu2=1.0, grid=(0.5, 50.0, 25), sigma_c=1.0,
                epsilon=1e-6, t_max=100, risk_ceiling=0.02, filters=FILTER_NAMES,
                include_past_errors=False)


def filter_config(name, *, mu1, mu2, sigma, grid, epsilon, t_max, risk_ceiling,
                  include_past_errors=False) -> FilterConfig:
    try:
        robust, kind = FAMILY[name]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose from {', '.join(FILTER_NAMES)}") from None
    bandwidth = {"inf": np.inf, "fixed": float(sigma), "select": grid}[kind]
    return FilterConfig(mu1=mu1 if robust else 0.0, mu2=mu2, bandwidth=bandwidth,
                        epsilon=epsilon, t_max=t_max, include_past_errors=include_past_errors,
                        on_risk="halve", risk_ceiling=risk_ceiling)


def builtin_problem(name: str, overrides: dict | None = None) -> Experiment:
    """The exact parameterization of a built-in problem, with optional overrides.

    Recognized override keys: ``delta``, ``runs``, ``steps``, ``seed``,
    ``filters``, ``sigma``, ``grid`` (``(lo, hi, count)``), ``sigma_c``,
    ``mu1``, ``mu2``, ``epsilon``, ``t_max``, ``risk_ceiling``,
    ``include_past_errors``.
    """
    if name not in _BUILTIN:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    base = _BUILTIN[name]
    s = dict(DEFAULTS, steps=base["steps"], sigma=base["sigma"], delta=base["deltas"])
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(s)
    if unknown:
        raise ValueError(f"unknown setting(s): {', '.join(sorted(unknown))}")
    s.update(overrides)
    lo, hi, count = s["grid"]
    grid = BandwidthGrid.logspace(float(lo), float(hi), int(count), float(s["sigma_c"]))
    filters = tuple(
        (f, filter_config(f, mu1=float(s["mu1"]), mu2=float(s["mu2"]), sigma=float(s["sigma"]),
                          grid=grid, epsilon=float(s["epsilon"]), t_max=int(s["t_max"]),
                          risk_ceiling=float(s["risk_ceiling"]),
                          include_past_errors=bool(s["include_past_errors"])))
        for f in s["filters"])
    s["filters"] = tuple(s["filters"])
    s["delta"] = tuple(float(d) for d in s["delta"])
    return Experiment(
        model=base["model"](), x0=base["x0"], P0=base["P0"], steps=int(s["steps"]),
        runs=int(s["runs"]), filters=filters, delta_sweep=s["delta"], seed=int(s["seed"]),
        perturb=base["perturb"], problem=name, states=base["states"], groups=base["groups"],
        settings=s)


def _fmt_matrix(a):
    return "[" + "; ".join(" ".join(f"{v:g}" for v in row) for row in np.atleast_2d(a)) + "]"


def _fmt_mixture(mix):
    parts = [f"{w:g}*N(0, {_fmt_matrix(c) if c.size > 1 else f'{c.item():g}'})"
             for w, c in zip(mix.weights, mix.covariances)]
    return " + ".join(parts)


def describe_problem(name: str) -> str:
    """Human-readable parameterization of a built-in problem."""
    exp = builtin_problem(name)
    m = exp.model
    lines = [
        f"problem: {name}",
        f"F = {_fmt_matrix(m.F)}",
        f"G = {_fmt_matrix(m.G)}",
        f"H = {_fmt_matrix(m.H)}",
    ]
    if name == "problem1":
        lines += ["dF(delta) = [0 delta; 0 0]",
                  "q = " + _fmt_mixture(m.q_mix)]
    else:
        lines += ["dF(delta) = [0 0 delta1*T^2; 0 0 delta*T; 0 0 0], T = 0.1, "
                  "delta1 = copysign(0.005, delta)",
                  "q_i = 0.9*N(0, 0.0005) + 0.1*N(0, 0.05), i = 1..3, independent"]
    lines += [
        "r = " + _fmt_mixture(m.r_mix),
        f"Q (equivalent) = {_fmt_matrix(m.Q)}",
        f"R (equivalent) = {_fmt_matrix(m.R)}",
        f"x0 = {_fmt_matrix(exp.x0)}",
        f"P0 = {_fmt_matrix(exp.P0)}",
        f"default steps = {exp.steps}, runs = {exp.runs}, delta sweep = "
        + ", ".join(f"{d:g}" for d in exp.delta_sweep),
        "reported states = " + ", ".join(label for label, _ in exp.groups),
    ]
    return "\n".join(lines)


# -- running -------------------------------------------------------------------

@dataclass(eq=False)
class FilterResult:
    """Outcome of one filter at one sweep value."""

    name: str
    delta: float
    means: np.ndarray  # (M, K, n)
    covariances: np.ndarray  # (M, K, n, n)
    sigmas: np.ndarray  # (M, K)
    mu1: np.ndarray  # (M, K) effective risk parameter
    halvings: np.ndarray  # (M, K)
    iterations: np.ndarray  # (M, K)
    failed: np.ndarray  # (M,)
    failure: list
    candidate_jkb: np.ndarray | None
    candidate_failed: np.ndarray | None
    selects: bool
    grid: np.ndarray | None
    rmse: np.ndarray | None = None  # (K, n) over valid runs
    avg_rmse: np.ndarray | None = None  # (n,)


@dataclass(eq=False)
class BenchReport:
    experiment: Experiment
    truth: dict  # delta index -> (M, K+1, n)
    results: dict  # (delta index, filter name) -> FilterResult
    valid: dict  # delta index -> (M,) bool
    table: list  # rows (delta, filter, avg_rmse, state_group)
    audit: dict
    diagnostics: dict

    def result(self, delta, name) -> FilterResult:
        return self.results[(self.experiment.delta_sweep.index(float(delta)), name)]

    def avg_rmse(self, delta, name, state) -> float:
        exp = self.experiment
        j = state if isinstance(state, int) else exp.states.index(state)
        return float(self.result(delta, name).avg_rmse[j])


def _simulate_runs(exp: Experiment, delta):
    model = exp.model.with_delta(exp.perturb(delta))
    chol = np.linalg.cholesky(exp.P0)
    X, Y = [], []
    for run in range(exp.runs):
        rng = np.random.default_rng([exp.seed, run])
        x_init = exp.x0 + chol @ rng.standard_normal(exp.model.n_states)
        traj = simulate(model, x_init, exp.steps, rng)
        X.append(traj.states)
        Y.append(traj.measurements)
    return np.array(X), np.array(Y)


def _run_unit(exp: Experiment, name, config, delta, Y):
    m = exp.model
    run = run_filter(Y, m.F, m.H, m.Q, m.R, exp.x0, exp.P0, config,
                     record_candidates=config.selects_bandwidth)
    return FilterResult(
        name=name, delta=delta, means=run.means, covariances=run.covariances,
        sigmas=run.sigmas, mu1=run.mu1, halvings=run.halvings, iterations=run.iterations,
        failed=run.failed, failure=run.failure, candidate_jkb=run.candidate_jkb,
        candidate_failed=run.candidate_failed, selects=config.selects_bandwidth,
        grid=config.bandwidth.values if config.selects_bandwidth else None)


def _ordered_mean(values, axis):
    """Mean along ``axis`` that does not depend on the order of the entries."""
    return np.sort(values, axis=axis).sum(axis=axis) / values.shape[axis]


def _rmse(err2):
    """RMSE series from squared errors ``(runs, K, n)`` plus its time average."""
    series = np.sqrt(_ordered_mean(err2, axis=0))
    avg = np.array([math.fsum(series[:, j]) / series.shape[0] for j in range(series.shape[1])])
    return series, avg


def _audit_selection(res: FilterResult, valid):
    """Count steps where the recorded bandwidth is not the best surviving candidate."""
    if not res.selects or res.candidate_jkb is None:
        return 0, 0
    scores = res.candidate_jkb[valid]
    sig = res.sigmas[valid]
    best = res.grid[_choose(scores, res.grid)]
    return int(np.sum(best != sig)), int(sig.size)


def _audit_covariances(exp: Experiment, res: FilterResult, valid, tol=1e-10):
    C = res.covariances[valid]
    asym = float(np.max(np.abs(C - np.swapaxes(C, -1, -2)), initial=0.0))
    min_eig = float(np.min(np.linalg.eigvalsh(C), initial=np.inf))
    # the covariance a predict call starts from: P0, then each posterior
    prev = np.concatenate([np.broadcast_to(exp.P0, C[:, :1].shape), C[:, :-1]], axis=1)
    mu1 = res.mu1[valid]
    ok = risk_positivity_audit(prev, mu1)
    halved = res.halvings[valid] > 0
    return dict(max_asymmetry=asym, min_eigenvalue=min_eig,
                symmetric=asym <= tol, psd=min_eig > -tol,
                positivity_violations=int(np.sum(~ok & ~halved)),
                halving_events=int(np.sum(halved)),
                halvings_total=int(np.sum(res.halvings[valid])))


def _diagnostics(exp: Experiment, delta, window=5):
    model = exp.model.with_delta(exp.perturb(delta))
    out = {}
    g = grammians(model, l=window)
    out["grammian_window"] = window
    out["observability_bounds"] = g.observability_bounds
    out["controllability_bounds"] = g.controllability_bounds
    try:
        holds, radius = stability_condition(model, l=window)
        out["stability_holds"] = holds
        out["stability_radius"] = radius
    except ObservabilityDegenerate as err:
        out["stability_holds"] = f"undetermined ({err})"
    return out


def run_experiment(exp: Experiment, workers: int = 1) -> BenchReport:
    """Run every filter on shared noise realizations for each sweep value.

    Work is split into (sweep value, filter) units; results do not depend on
    ``workers``. A run that fails in any filter is excluded for all filters
    at that sweep value, and the exclusion is counted.
    """
    truth, measurements = {}, {}
    for i, delta in enumerate(exp.delta_sweep):
        truth[i], measurements[i] = _simulate_runs(exp, delta)
    units = [(i, name, cfg) for i in range(len(exp.delta_sweep)) for name, cfg in exp.filters]
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_unit, exp, name, cfg, exp.delta_sweep[i], measurements[i])
                       for i, name, cfg in units]
            outputs = [f.result() for f in futures]
    else:
        outputs = [_run_unit(exp, name, cfg, exp.delta_sweep[i], measurements[i])
                   for i, name, cfg in units]
    results = {(i, name): res for (i, name, _), res in zip(units, outputs)}

    valid, table, audit, diagnostics = {}, [], {}, {}
    for i, delta in enumerate(exp.delta_sweep):
        ok = np.ones(exp.runs, dtype=bool)
        for name, _ in exp.filters:
            ok &= ~results[(i, name)].failed
        valid[i] = ok
        diagnostics[i] = _diagnostics(exp, delta)
        if not ok.any():
            continue
        X = truth[i][ok, 1:]
        for name, _ in exp.filters:
            res = results[(i, name)]
            res.rmse, res.avg_rmse = _rmse((res.means[ok] - X) ** 2)
            for label, j in exp.groups:
                table.append((delta, name, float(res.avg_rmse[j]), label))
            wrong, total = _audit_selection(res, ok)
            audit[(i, name)] = dict(_audit_covariances(exp, res, ok),
                                    selection_mismatches=wrong, selection_steps=total,
                                    failed_runs=int(res.failed.sum()))
    return BenchReport(exp, truth, results, valid, table, audit, diagnostics)


def contraction_instance(exp: Experiment, delta=None, run=0, step=0, beta=None):
    """Whitened rows ``(D, W)`` of the first update of one benchmark run.

    Useful for evaluating :func:`contraction_bounds` on a realistic instance.
    """
    from .core import build_augmented, predict

    delta = exp.delta_sweep[-1] if delta is None else delta
    X, Y = _simulate_runs(exp, delta)
    m = exp.model
    mean, cov = predict(exp.x0, exp.P0, m.F, m.Q)
    f = build_augmented(mean, cov, m.R, m.H, Y[run, step])
    if beta is None:
        beta = float(np.abs(f.D).sum())
    return f.D, f.W, beta


# -- output --------------------------------------------------------------------

def _f(x) -> str:
    return format(float(x), ".17g")


def _write(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err


def manifest_items(report: BenchReport) -> list[tuple[str, str]]:
    """Key/value pairs of the run manifest.

    Plain keys echo the configuration and can be fed back through
    ``--config``; ``result.`` and ``diag.`` keys are informational.
    """
    exp = report.experiment
    s = exp.settings
    items = [("problem", exp.problem)]
    if s:
        items += [
            ("delta", ",".join(_f(d) for d in exp.delta_sweep)),
            ("runs", str(exp.runs)),
            ("steps", str(exp.steps)),
            ("seed", str(exp.seed)),
            ("filters", ",".join(name for name, _ in exp.filters)),
            ("sigma", _f(s["sigma"])),
            ("grid", ",".join([_f(s["grid"][0]), _f(s["grid"][1]), str(int(s["grid"][2]))])),
            ("sigma_c", _f(s["sigma_c"])),
            ("mu1", _f(s["mu1"])),
            ("mu2", _f(s["mu2"])),
            ("epsilon", _f(s["epsilon"])),
            ("t_max", str(int(s["t_max"]))),
            ("risk_ceiling", _f(s["risk_ceiling"])),
            ("include_past_errors", "true" if s["include_past_errors"] else "false"),
        ]
    items.append(("result.rmse_definition", RMSE_DEFINITION))
    items.append(("result.noise", "paired: every filter sees the same realizations per run"))
    items.append(("result.run_seed", "numpy default_rng([seed, run])"))
    for i, delta in enumerate(exp.delta_sweep):
        key = f"delta{i}"
        items.append((f"result.{key}.value", _f(delta)))
        items.append((f"result.{key}.valid_runs", str(int(report.valid[i].sum()))))
        items.append((f"result.{key}.excluded_runs", str(int((~report.valid[i]).sum()))))
        for name, _ in exp.filters:
            a = report.audit.get((i, name))
            res = report.results[(i, name)]
            pre = f"result.{key}.{name}"
            items.append((f"{pre}.failed_runs", str(int(res.failed.sum()))))
            if a is None:
                continue
            items += [
                (f"{pre}.halving_events", str(a["halving_events"])),
                (f"{pre}.halvings_total", str(a["halvings_total"])),
                (f"{pre}.positivity_violations", str(a["positivity_violations"])),
                (f"{pre}.cov_max_asymmetry", _f(a["max_asymmetry"])),
                (f"{pre}.cov_min_eigenvalue", _f(a["min_eigenvalue"])),
            ]
            if res.selects:
                items.append((f"{pre}.selection_mismatches", str(a["selection_mismatches"])))
        for k, v in report.diagnostics[i].items():
            if isinstance(v, tuple):
                v = ",".join(_f(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = _f(v)
            items.append((f"diag.{key}.{k}", str(v)))
    return items


def write_report(report: BenchReport, out_dir) -> dict:
    """Write ``rmse.csv``, ``table.csv``, ``sigma.csv`` and ``manifest.txt``.

    ``rmse.csv`` and ``sigma.csv`` carry trailing ``filter``/``delta``
    columns so one file covers the whole sweep. Returns the written paths.
    """
    exp = report.experiment
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create {out_dir}: {err.strerror or err}") from err
    paths = {k: os.path.join(out_dir, f) for k, f in
             (("rmse", "rmse.csv"), ("table", "table.csv"), ("sigma", "sigma.csv"),
              ("manifest", "manifest.txt"))}

    def rmse_rows():
        for i, delta in enumerate(exp.delta_sweep):
            for name, _ in exp.filters:
                res = report.results[(i, name)]
                if res.rmse is None:
                    continue
                for k in range(exp.steps):
                    for j, state in enumerate(exp.states):
                        yield [str(k + 1), name, state, _f(res.rmse[k, j]), _f(delta)]

    def sigma_rows():
        for i, delta in enumerate(exp.delta_sweep):
            for name, _ in exp.filters:
                res = report.results[(i, name)]
                if not res.selects:
                    continue
                for run in range(exp.runs):
                    if not report.valid[i][run]:
                        continue
                    for k in range(exp.steps):
                        yield [str(k + 1), str(run), _f(res.sigmas[run, k]), name, _f(delta)]

    _write(paths["rmse"], ["step", "filter", "state", "rmse", "delta"], rmse_rows())
    _write(paths["table"], ["delta", "filter", "avg_rmse", "state_group"],
           ([_f(d), name, _f(v), group] for d, name, v, group in report.table))
    _write(paths["sigma"], ["step", "run", "sigma", "filter", "delta"], sigma_rows())
    try:
        with open(paths["manifest"], "w") as fh:
            for key, value in manifest_items(report):
                fh.write(f"{key}={value}\n")
    except OSError as err:
        raise OSError(f"cannot write {paths['manifest']}: {err.strerror or err}") from err
    return paths
