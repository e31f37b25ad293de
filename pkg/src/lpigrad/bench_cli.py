"""Configuration-driven benchmark harness.

A JSON experiment config names a synthetic problem, an interpolation setup
and a list of methods whose hyperparameters may be lists; every combination
is one *cell*. Each cell writes a trace CSV; all cells together write one
summary CSV. See ``lpigrad --print-defaults`` for the reference config.

Subcommands
-----------
run <config>            first value of every list-valued hyperparameter
search <config>         the full Cartesian product
weights-cache <config>  precompute and persist interpolation weights
check                   quick invariant suite

Exit codes: 0 success, 1 config error, 2 at least one failed cell.
"""

import argparse
import csv
import itertools
import json
import math
import os
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, LpiGradError
from .lpi_core import InterpolationConfig
from .oracles import LPIGradient, dataset_weights
from .optimizers import catalyst_run, fgm_run, gd_run, lpi_gd_run, sgd_run
from .problems import LABEL_RULES, generate_linear_regression

METHODS = ("gd", "sgd", "lpi_gd", "catalyst_lpi", "fgm_lpi")
LPI_METHODS = ("lpi_gd", "catalyst_lpi", "fgm_lpi")
CACHE_ENV = "LPIGRAD_CACHE_DIR"

PROBLEM_DEFAULTS = {"n": 1000, "margin": 0.01, "noise_std": 0.05, "seed": 3, "label_rule": "noiseless_model"}
INTERP_DEFAULTS = {"h": 0.01, "l": 1, "kernel": "rectangular", "grid_convention": "upper", "ridge": 0.0}
# per-method hyperparameters and their defaults; lists expand into cells
METHOD_DEFAULTS = {
    "gd": {"init": 0.4, "step": 1.0},
    "sgd": {"init": 0.4, "step": 1.0, "batch_size": 500},
    "lpi_gd": {"init": 0.4, "step": 1.0, "cardinality": 500},
    "catalyst_lpi": {
        "init": 0.4,
        "step": 1.0,
        "cardinality": 500,
        "mode": "fixed_beta",
        "beta": 0.99,
        "inner_budget": 1,
        "kappa": None,
    },
    "fgm_lpi": {"init": 0.4, "step": 1.0, "cardinality": 500, "mode": "fixed_momentum", "momentum": 0.2},
}
TOP_KEYS = {"problem", "interpolation", "methods", "iterations", "threshold_rel", "seed", "out"}

SUMMARY_HEADER = [
    "method",
    "cardinality",
    "init",
    "params",
    "final_objective",
    "iters_to_threshold",
    "oracle_calls",
    "status",
    "wallclock_s",
]


@dataclass
class MethodSpec:
    name: str
    params: dict


@dataclass
class ExperimentConfig:
    problem: dict
    interpolation: dict
    methods: list
    iterations: int = 200
    threshold_rel: float = 1e-3
    seed: int = 0
    out: str = "lpigrad_out"


@dataclass
class Cell:
    index: int
    method: str
    params: dict

    @property
    def cardinality(self):
        return self.params.get("cardinality")

    @property
    def init(self):
        return self.params["init"]

    def tag(self):
        parts = [self.method]
        if self.cardinality is not None:
            parts.append(f"m{self.cardinality}")
        parts.append(f"w{self.init:g}")
        return f"{self.index:03d}_" + "_".join(parts)

    def extra_params(self):
        """Hyperparameters other than cardinality and init, as a stable string."""
        rest = {k: v for k, v in sorted(self.params.items()) if k not in ("cardinality", "init")}
        return ";".join(f"{k}={v}" for k, v in rest.items())


@dataclass
class SummaryRow:
    method: str
    cardinality: int | None
    init: float
    params: str
    final_objective: float
    iters_to_threshold: int | None
    oracle_calls: int
    status: str = "ok"
    wallclock: float = 0.0

    def sort_key(self):
        return (self.method, -1 if self.cardinality is None else self.cardinality, self.init, self.params)

    def as_csv_row(self):
        return [
            self.method,
            "" if self.cardinality is None else str(self.cardinality),
            repr(float(self.init)),
            self.params,
            f"{self.final_objective:.17g}",
            "" if self.iters_to_threshold is None else str(self.iters_to_threshold),
            str(self.oracle_calls),
            self.status,
            f"{self.wallclock:.6f}",
        ]


@dataclass
class ExperimentResult:
    traces: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    @property
    def failed(self):
        return [r for r in self.rows if r.status != "ok"]


# ---------------------------------------------------------------- config


def reference_config_text():
    return resources.files("lpigrad").joinpath("data/reference_config.json").read_text()


def _check_keys(section, allowed, where):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _merge(defaults, given, where):
    if not isinstance(given, dict):
        raise ConfigError(f"{where} must be a JSON object")
    _check_keys(given, defaults, where)
    out = dict(defaults)
    out.update(given)
    return out


def config_from_dict(doc):
    """Validate a decoded config document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(doc, TOP_KEYS, "config")
    problem = _merge(PROBLEM_DEFAULTS, doc.get("problem", {}), "problem")
    if problem["label_rule"] not in LABEL_RULES:
        raise ConfigError(f"unknown label_rule {problem['label_rule']!r}")
    interp = _merge(INTERP_DEFAULTS, doc.get("interpolation", {}), "interpolation")
    raw_methods = doc.get("methods")
    if not raw_methods or not isinstance(raw_methods, list):
        raise ConfigError("config needs a non-empty 'methods' list")
    methods = []
    for i, entry in enumerate(raw_methods):
        if isinstance(entry, str):
            entry = {"name": entry}
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"methods[{i}] needs a 'name'")
        name = entry["name"]
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
        params = {k: v for k, v in entry.items() if k != "name"}
        params = _merge(METHOD_DEFAULTS[name], params, f"methods[{i}] ({name})")
        cards = params.get("cardinality")
        for c in cards if isinstance(cards, list) else [cards]:
            if c is not None and (not isinstance(c, int) or isinstance(c, bool) or c < 1):
                raise ConfigError(f"methods[{i}] ({name}): grid cardinality must be a positive integer, got {c!r}")
        methods.append(MethodSpec(name, params))
    iterations = doc.get("iterations", 200)
    if not isinstance(iterations, int) or iterations < 0:
        raise ConfigError(f"'iterations' must be a non-negative integer, got {iterations!r}")
    return ExperimentConfig(
        problem=problem,
        interpolation=interp,
        methods=methods,
        iterations=iterations,
        threshold_rel=float(doc.get("threshold_rel", 1e-3)),
        seed=int(doc.get("seed", 0)),
        out=str(doc.get("out", "lpigrad_out")),
    )


def parse_config_text(text, source="<config>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path):
    """Read and validate a JSON experiment config.

    Raises
    ------
    ConfigError
        On malformed JSON (with line number), unknown keys or methods.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


# ---------------------------------------------------------------- cells


def expand_cells(config, full_grid=True):
    """One cell per hyperparameter combination (or per method when ``full_grid`` is false)."""
    cells = []
    for spec in config.methods:
        keys = sorted(spec.params)
        choices = []
        for k in keys:
            v = spec.params[k]
            vals = v if isinstance(v, list) else [v]
            choices.append(vals if full_grid else vals[:1])
        for combo in itertools.product(*choices):
            cells.append(Cell(len(cells), spec.name, dict(zip(keys, combo))))
    return cells


def build_problem(config):
    p = config.problem
    return generate_linear_regression(
        n=p["n"], margin=p["margin"], noise_std=p["noise_std"], seed=p["seed"], label_rule=p["label_rule"]
    )


def interpolation_config(config, m):
    ip = config.interpolation
    return InterpolationConfig(
        d=1, m=int(m), h=ip["h"], l=ip["l"], kernel=ip["kernel"], ridge=ip["ridge"], grid_convention=ip["grid_convention"]
    )


class _ProviderCache:
    """LPI gradient providers shared across cells, one per interpolation config."""

    def __init__(self, problem, cache_dir):
        self.problem = problem
        self.cache_dir = cache_dir
        self._lock = threading.Lock()
        self._items = {}

    def get(self, icfg):
        key = json.dumps(icfg.key(), sort_keys=True)
        with self._lock:
            if key not in self._items:
                self._items[key] = LPIGradient(self.problem, icfg, cache_dir=self.cache_dir)
            return self._items[key]


def _run_cell(cell, config, problem, providers):
    prm = cell.params
    K = config.iterations
    theta0 = [float(prm["init"])]
    if cell.method == "gd":
        return gd_run(problem, theta0, K, step=prm["step"])
    if cell.method == "sgd":
        return sgd_run(problem, theta0, K, step=prm["step"], batch_size=prm["batch_size"], seed=config.seed)
    icfg = interpolation_config(config, prm["cardinality"])
    grad = providers.get(icfg)
    if cell.method == "lpi_gd":
        return lpi_gd_run(problem, theta0, icfg, K, step=prm["step"], gradient=grad)
    if cell.method == "catalyst_lpi":
        return catalyst_run(
            problem,
            theta0,
            icfg,
            K,
            mode=prm["mode"],
            beta=prm["beta"],
            kappa=prm["kappa"],
            step=prm["step"],
            inner_budget=prm["inner_budget"],
            gradient=grad,
        )
    return fgm_run(problem, theta0, icfg, mode=prm["mode"], momentum=prm["momentum"], K=K, step=prm["step"], gradient=grad)


def run_experiment(config, out_dir=None, threads=1, full_grid=True, cache_dir=None):
    """Execute every cell, write trace CSVs and the summary CSV.

    A failing cell is recorded with status ``error:<Type>: <message>`` and
    does not affect the others.
    """
    out_dir = out_dir or config.out
    os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
    problem = build_problem(config)
    _, f_star = problem.optimal_parameter()
    providers = _ProviderCache(problem, cache_dir)
    cells = expand_cells(config, full_grid)

    def work(cell):
        t0 = time.perf_counter()
        try:
            trace = _run_cell(cell, config, problem, providers)
        except (LpiGradError, ValueError, ArithmeticError) as exc:
            row = SummaryRow(
                cell.method,
                cell.cardinality,
                float(cell.init),
                cell.extra_params(),
                math.nan,
                None,
                0,
                f"error:{type(exc).__name__}: {exc}",
                time.perf_counter() - t0,
            )
            return cell, None, row
        trace.seed = config.seed
        trace.config = {**trace.config, "cell": cell.params, "problem": config.problem}
        emit_trace_csv(trace, os.path.join(out_dir, "traces", cell.tag() + ".csv"))
        gap0 = trace.records[0].objective - f_star
        row = SummaryRow(
            cell.method,
            cell.cardinality,
            float(cell.init),
            cell.extra_params(),
            trace.final.objective,
            trace.iterations_to(f_star + config.threshold_rel * gap0),
            trace.final.oracle_calls,
            "ok",
            time.perf_counter() - t0,
        )
        return cell, trace, row

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        outcomes = list(pool.map(work, cells))
    result = ExperimentResult()
    for cell, trace, row in outcomes:
        if trace is not None:
            result.traces[cell.tag()] = trace
        result.rows.append(row)
    emit_summary(result.rows, os.path.join(out_dir, "summary.csv"))
    return result


def emit_trace_csv(trace, path):
    try:
        trace.to_csv(path)
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc.strerror}") from exc


def emit_summary(rows, path):
    """Summary CSV sorted by (method, cardinality, init)."""
    if not rows:
        raise ValueError("no summary rows to write")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for row in sorted(rows, key=SummaryRow.sort_key):
                w.writerow(row.as_csv_row())
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc.strerror}") from exc


def precompute_weights(config, cache_dir):
    """Persist dataset weights for every cardinality named by an LPI method."""
    problem = build_problem(config)
    cards = set()
    for spec in config.methods:
        if spec.name in LPI_METHODS:
            c = spec.params["cardinality"]
            cards.update(c if isinstance(c, list) else [c])
    written = []
    for m in sorted(cards):
        icfg = interpolation_config(config, m)
        dataset_weights(problem.dataset, icfg, cache_dir)
        written.append(m)
    return written


# ---------------------------------------------------------------- check


def run_checks(out=None):
    """Fast subset of the invariant suite; returns the number of failures."""
    out = out or sys.stdout
    from .lpi_core import batch_weights, grid_points, interpolation_weights
    from .optimizers import FgmState, catalyst_alpha_next, catalyst_beta, fgm_coefficients
    from .problems import random_poly_gradient_problem
    from .oracles import exact_full_gradient, lpi_gradient

    rng = np.random.default_rng(0)
    results = []

    cfg = InterpolationConfig(d=2, m=20, h=0.15, l=2)
    grid = grid_points(cfg)
    xs = rng.uniform(0.15, 0.85, size=(20, 2))

    def poly(y):
        return 1.0 + y[..., 0] - 2 * y[..., 1] ** 2 + y[..., 0] * y[..., 1]

    errs = []
    for x in xs:
        ws = interpolation_weights(x, grid, cfg)
        errs.append(abs(ws.values @ poly(grid.points[ws.indices]) - poly(x)))
    results.append(("polynomial reproduction", max(errs) <= 1e-8))

    table = batch_weights(xs, grid, cfg)
    n = len(grid)
    dev = max(
        np.max(np.abs(table[i].dense(n) - interpolation_weights(x, grid, cfg).dense(n))) for i, x in enumerate(xs)
    )
    results.append(("batch weights match per-point weights", dev <= 1e-12))

    prob = random_poly_gradient_problem(d=1, p=2, degree=1, n=100, seed=1)
    icfg = InterpolationConfig(d=1, m=50, h=0.1, l=1)
    table = batch_weights(prob.dataset.points, grid_points(icfg), icfg)
    th = rng.normal(size=2)
    diff = lpi_gradient(prob.dataset, th, prob, grid_points(icfg), table) - exact_full_gradient(prob.dataset, th, prob)
    results.append(("interpolated gradient exact for polynomial data", np.max(np.abs(diff)) <= 1e-8))

    st = FgmState(L=2.0, mu=1.0, theta0=np.zeros(1))
    a1, A1, t0 = fgm_coefficients(st)
    ok = catalyst_alpha_next(0.5, 0.25) == 0.5 and abs(catalyst_beta(0.5, 0.5) - 1 / 3) < 1e-15
    ok = ok and (a1, A1) == (4.0, 6.0) and abs(t0 - 2 / 3) < 1e-15
    results.append(("schedule plug-ins", ok))

    lr = generate_linear_regression(n=200, seed=1)
    w_star, _ = lr.optimal_parameter()
    g = exact_full_gradient(lr.dataset, w_star, lr)
    results.append(("least-squares optimum is stationary", abs(float(g[0])) <= 1e-10))

    failures = 0
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
        failures += not ok
    return failures


# ---------------------------------------------------------------- CLI


def build_parser():
    ap = argparse.ArgumentParser(prog="lpigrad", description="Benchmark harness for interpolated-gradient methods.")
    ap.add_argument("--print-defaults", action="store_true", help="print the reference config and exit")
    sub = ap.add_subparsers(dest="command")
    for name, helptext in (
        ("run", "run the first value of every hyperparameter list"),
        ("search", "run the full hyperparameter grid"),
        ("weights-cache", "precompute and persist interpolation weights"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="global seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1)
    sub.add_parser("check", help="run a quick invariant suite")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(reference_config_text())
        return 0
    if args.command is None:
        ap.print_help()
        return 1
    if args.command == "check":
        return 1 if run_checks() else 0
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        config.seed = args.seed
    out_dir = args.out or config.out
    cache_dir = os.environ.get(CACHE_ENV) or None
    if args.command == "weights-cache":
        cache_dir = cache_dir or os.path.join(out_dir, "weight_cache")
        try:
            done = precompute_weights(config, cache_dir)
        except (LpiGradError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"cached weights for cardinalities {done} in {cache_dir}")
        return 0
    try:
        result = run_experiment(config, out_dir, args.threads, full_grid=args.command == "search", cache_dir=cache_dir)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    n_bad = len(result.failed)
    print(f"{len(result.rows) - n_bad}/{len(result.rows)} cells succeeded; summary in {os.path.join(out_dir, 'summary.csv')}")
    for row in result.failed:
        print(f"  {row.method} m={row.cardinality} init={row.init:g}: {row.status}", file=sys.stderr)
    return 2 if n_bad else 0


if __name__ == "__main__":
    sys.exit(main())
