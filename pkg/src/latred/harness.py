"""Instance generation, file formats, and the reduction/optimization sweeps.

All CSV files start with a ``# latred-csv v1 kind=<kind>`` line followed by a
header row. Floats are written with ``repr`` so reruns are byte-identical;
wall-time columns are the only nondeterministic fields and are dropped when
timing is disabled.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from latred import oracles
from latred.core import Lattice, derive_seed
from latred.oracles import SetFunction
from latred.perturbation import (
    Perturbation,
    _perturbation_reduction,
    perturbed_oracle,
    scale_from_ratio,
)
from latred.reduction import (
    MAX,
    MIN,
    _check_mode,
    _reduce,
    lattice_stats,
    reducibility_index,
)
from latred.solvers import BRUTE_FORCE_CAP, solve

log = logging.getLogger(__name__)

CSV_VERSION = "v1"
FAMILIES = ("subset-selection", "gaussian-mi", "logdet", "half-products", "cut", "modular")
SWEEP_FAMILIES = ("subset-selection", "gaussian-mi", "logdet", "half-products")
MIN_FAMILIES = ("logdet", "half-products")
LOGDET_DIM = 10
LOGDET_GAMMA = 1.0


class UndefinedError(ValueError):
    """A metric is undefined for this row (e.g. relative error against a zero optimum)."""


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------


def generate_instance(family: str, n: int, seed: int) -> SetFunction:
    """Random instance of ``family`` on ``n`` elements, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    if family == "subset-selection":
        M = np.triu(rng.uniform(0.0, 1.0, (n, n)), 1)
        M = M + M.T
        np.fill_diagonal(M, 1.0)
        return oracles.subset_selection(oracles.SubsetSelectionSpec(M, 0.7))
    if family == "gaussian-mi":
        Z = rng.standard_normal((n, 2 * n))
        cov = Z @ Z.T / (2 * n) + 1e-6 * np.eye(n)
        return oracles.gaussian_mi(oracles.GaussianMISpec(0.5 * (cov + cov.T)))
    if family == "logdet":
        pts = rng.uniform(0.0, 1.0, (n, LOGDET_DIM))
        return oracles.logdet(oracles.ingest_features(pts, LOGDET_GAMMA))
    if family == "half-products":
        a = rng.uniform(0.1, 0.5, n)
        b = rng.uniform(0.1, 0.5, n)
        c = rng.uniform(1.0, 5.0, n)
        return oracles.half_products(oracles.HalfProductsSpec(a, b, c))
    if family == "cut":
        W = np.triu(rng.uniform(0.0, 1.0, (n, n)) * (rng.random((n, n)) < 0.5), 1)
        return oracles.cut(oracles.CutSpec(W + W.T))
    if family == "modular":
        return oracles.modular(rng.uniform(-1.0, 1.0, n))
    raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{M.shape[0]}\n")
        for row in M:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        n = int(fh.readline())
        M = np.loadtxt(fh, ndmin=2)
    if M.shape != (n, n):
        raise ValueError(f"{path}: header says n={n}, body has shape {M.shape}")
    return M


def write_vector(path, v):
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{v.size}\n")
        fh.write("\n".join(repr(float(x)) for x in v) + "\n")


def read_vector(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        n = int(fh.readline())
        v = np.array(fh.read().split(), dtype=np.float64)
    if v.size != n:
        raise ValueError(f"{path}: header says n={n}, found {v.size} values")
    return v


def read_features(path) -> np.ndarray:
    """Numeric CSV, one row per point; ``#`` lines are skipped."""
    X = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if X.size == 0:
        raise ValueError(f"{path}: no feature rows")
    return X


def features_instance(path, gamma: float = LOGDET_GAMMA, jitter: float = 1e-8) -> SetFunction:
    return oracles.logdet(oracles.ingest_features(read_features(path), gamma, jitter))


_INSTANCE_FILES = {
    "subset-selection": {"M": "M.txt"},
    "gaussian-mi": {"cov": "cov.txt"},
    "logdet": {"K": "K.txt"},
    "cut": {"W": "W.txt"},
    "half-products": {"a": "a.txt", "b": "b.txt", "c": "c.txt"},
    "modular": {"w": "w.txt"},
}


def save_instance(f: SetFunction, directory) -> Path:
    """Write ``instance.cfg`` plus one matrix/vector file per parameter."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    spec = f.spec
    meta = {"family": f.family, "n": f.n}
    for attr, fname in _INSTANCE_FILES[f.family].items():
        val = spec.w if f.family == "modular" else getattr(spec, attr)
        (write_matrix if val.ndim == 2 else write_vector)(d / fname, val)
    if f.family == "subset-selection":
        meta["lambda"] = repr(spec.lam)
    with open(d / "instance.cfg", "w", encoding="utf-8") as fh:
        for k, v in meta.items():
            fh.write(f"{k} = {v}\n")
    return d


def load_instance(directory) -> SetFunction:
    d = Path(directory)
    meta = read_config(d / "instance.cfg")
    family = meta["family"]
    files = _INSTANCE_FILES.get(family)
    if files is None:
        raise ValueError(f"unknown family {family!r} in {d}")
    vals = {k: (read_matrix if k in ("M", "cov", "K", "W") else read_vector)(d / fn) for k, fn in files.items()}
    if family == "subset-selection":
        return oracles.subset_selection(oracles.SubsetSelectionSpec(vals["M"], float(meta.get("lambda", 0.7))))
    if family == "gaussian-mi":
        return oracles.gaussian_mi(oracles.GaussianMISpec(vals["cov"]))
    if family == "logdet":
        return oracles.logdet(oracles.LogDetSpec(vals["K"]))
    if family == "cut":
        return oracles.cut(oracles.CutSpec(vals["W"]))
    if family == "half-products":
        return oracles.half_products(oracles.HalfProductsSpec(vals["a"], vals["b"], vals["c"]))
    return oracles.modular(vals["w"])


# ---------------------------------------------------------------------------
# config and CSV
# ---------------------------------------------------------------------------


def read_config(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def format_csv(kind: str, rows: list[dict], columns: list[str] | None = None) -> str:
    columns = list(rows[0]) if columns is None and rows else (columns or [])
    buf = io.StringIO()
    buf.write(f"# latred-csv {CSV_VERSION} kind={kind}\n")
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path, kind: str, rows: list[dict], columns: list[str] | None = None) -> str:
    text = format_csv(kind, rows, columns)
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path) -> tuple[str, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
        return head, list(csv.DictReader(fh))


def _num(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def relative_error(exact_val: float, approx_val: float) -> float:
    """``|exact - approx| / |exact|``."""
    if exact_val == 0:
        raise UndefinedError("relative error is undefined for a zero optimum")
    return abs(exact_val - approx_val) / abs(exact_val)


def _list(value, conv):
    if isinstance(value, str):
        return [conv(v.strip()) for v in value.replace(";", ",").split(",") if v.strip()]
    return [conv(v) for v in value]


@dataclass
class ExperimentConfig:
    # None picks the default set for the mode: zero-optimum families are left out of minimization
    families: list[str] | None = None
    n: int = 20
    cases: int = 10
    grid: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    grid_kind: str = "ratio"
    draws: int = 10
    mode: str = MAX
    solver: str = "bnb"
    baseline: str | None = None
    trials: int = 1
    master_seed: int = 0
    out: str | None = None
    raw: bool = False
    timing: bool = True
    checkpoints: list[int] = field(default_factory=lambda: [1, 2, 3, 4])

    def __post_init__(self):
        if self.families is None:
            self.families = list(MIN_FAMILIES if self.mode == MIN else SWEEP_FAMILIES)
        self.families = _list(self.families, str)
        self.grid = _list(self.grid, float)
        self.checkpoints = _list(self.checkpoints, int)
        self.n, self.cases, self.draws, self.trials = int(self.n), int(self.cases), int(self.draws), int(self.trials)
        self.master_seed = int(self.master_seed)
        for name in ("raw", "timing"):
            v = getattr(self, name)
            if isinstance(v, str):
                setattr(self, name, v.strip().lower() in ("1", "true", "yes", "on"))
        for fam in self.families:
            if fam not in FAMILIES:
                raise ValueError(f"unknown family {fam!r}")
        _check_mode(self.mode)
        if not self.grid:
            raise ValueError("scale grid is empty")
        if self.grid_kind not in ("ratio", "absolute"):
            raise ValueError("grid_kind must be 'ratio' or 'absolute'")
        if min(self.cases, self.draws, self.trials) < 1 or self.n < 1:
            raise ValueError("n, cases, draws and trials must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides) -> ExperimentConfig:
        vals = read_config(path)
        known = {f.name for f in fields(cls)}
        unknown = set(vals) - known
        if unknown:
            raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
        vals.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**vals)

    def baseline_solver(self) -> str:
        return self.baseline or self.solver


def worker_count() -> int:
    """``LATRED_THREADS`` caps worker threads; 0 or unset runs serially."""
    try:
        return max(0, int(os.environ.get("LATRED_THREADS", "0")))
    except ValueError:
        return 0


def parallel_map(fn, items, workers: int | None = None):
    """Order-preserving map over threads (serial when ``workers`` is 0)."""
    workers = worker_count() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def prepare_case(f: SetFunction, mode: str):
    """Unperturbed reduction (when ``f`` is reducible) and margins of the result."""
    L = Lattice.full(f.n)
    if reducibility_index(f, L).reducible:
        L = _reduce(f, L, mode).final
    stats = lattice_stats(f, L) if L.width else None
    return L, stats


def _scale(cfg, stats, value):
    if cfg.grid_kind == "absolute":
        ratio = (value - stats.m) / (stats.Mx - stats.m) if stats and stats.Mx != stats.m else float("nan")
        return float(value), ratio
    if stats is None or stats.Mx == stats.m:
        return 0.0, float(value)
    return max(0.0, scale_from_ratio(stats, value)), float(value)


def _family_index(fam):
    return FAMILIES.index(fam)


def run_reduction_sweep(cfg: ExperimentConfig):
    """Average reduction rates of the perturbed reduction at iteration checkpoints.

    Returns ``(aggregate_rows, raw_rows)``; one aggregate row per
    ``(family, grid point, checkpoint)`` where checkpoints are ``cfg.checkpoints``
    followed by ``last``.
    """
    labels = [str(k) for k in cfg.checkpoints] + ["last"]

    def one_case(job):
        fam, case = job
        fi = _family_index(fam)
        f = generate_instance(fam, cfg.n, derive_seed(cfg.master_seed, 0, fi, case))
        L, stats = prepare_case(f, cfg.mode)
        out = []
        for gi, value in enumerate(cfg.grid):
            t, ratio = _scale(cfg, stats, value)
            for d in range(cfg.draws):
                seed = derive_seed(cfg.master_seed, 1, fi, case, gi, d)
                if L.width:
                    trace = _reduce(perturbed_oracle(f, Perturbation.draw(f.n, t, seed)), L, cfg.mode)
                    rates = [trace.rate_after(k) for k in cfg.checkpoints] + [trace.rate]
                    iters = len(trace.iterations)
                else:
                    rates = [1.0] * len(labels)
                    iters = 0
                out.append(
                    {
                        "family": fam,
                        "n": cfg.n,
                        "case": case,
                        "P(t)": _num(ratio),
                        "t": _num(t),
                        "draw": d,
                        "seed": seed,
                        "iterations": iters,
                        **{f"rate_{lab}": _num(r) for lab, r in zip(labels, rates)},
                        "_grid": gi,
                        "_rates": rates,
                    }
                )
        return out

    jobs = [(fam, case) for fam in cfg.families for case in range(cfg.cases)]
    raw = [row for rows in parallel_map(one_case, jobs) for row in rows]

    agg = []
    for fam in cfg.families:
        for gi, value in enumerate(cfg.grid):
            sel = [r for r in raw if r["family"] == fam and r["_grid"] == gi]
            rates = np.array([r["_rates"] for r in sel])
            t_mean = float(np.mean([float(r["t"]) for r in sel]))
            for j, lab in enumerate(labels):
                col = rates[:, j]
                agg.append(
                    {
                        "family": fam,
                        "n": cfg.n,
                        "mode": cfg.mode,
                        "P(t)": _num(float(value)),
                        "t_mean": _num(t_mean),
                        "checkpoint": lab,
                        "mean_rate": _num(col.mean()),
                        "stderr": _num(col.std(ddof=1) / np.sqrt(col.size)) if col.size > 1 else "",
                        "cases": cfg.cases,
                        "draws": cfg.draws,
                    }
                )
    for r in raw:
        r.pop("_grid")
        r.pop("_rates")
    return agg, raw


def _timed_solve(name, f, L, mode, seed, trials):
    e0, m0 = f.evals, f.marginal_queries
    t0 = time.perf_counter()
    rep = solve(name, f, L, mode, seed, trials)
    return rep, time.perf_counter() - t0, (f.evals - e0) + (f.marginal_queries - m0)


def run_opt_experiment(cfg: ExperimentConfig, mode: str | None = None):
    """Perturbation-reduction against a baseline solver over a scale grid.

    For each case the baseline solves the full problem once (time ``T_e``);
    each grid point runs ``cfg.draws`` perturbation-reduction passes with
    ``cfg.solver`` on the reduced lattice (time ``T_p``). Randomized solvers
    keep the best of ``cfg.trials`` runs on both sides. Relative error is
    measured against the baseline when it is exact, otherwise against the
    better of the two values. Runs are serial so timings stay comparable.

    Returns ``(aggregate_rows, raw_rows)``.
    """
    mode = cfg.mode if mode is None else _check_mode(mode)
    baseline = cfg.baseline_solver()
    exact_baseline = baseline in ("bnb", "brute")
    if exact_baseline and cfg.n > BRUTE_FORCE_CAP:
        raise ValueError(f"exact baseline {baseline!r} limited to n <= {BRUTE_FORCE_CAP}")
    raw = []
    for fam in cfg.families:
        fi = _family_index(fam)
        for case in range(cfg.cases):
            f = generate_instance(fam, cfg.n, derive_seed(cfg.master_seed, 0, fi, case))
            solver_seed = derive_seed(cfg.master_seed, 2, fi, case)
            base_rep, T_e, base_cost = _timed_solve(baseline, f, None, mode, solver_seed, cfg.trials)
            L, stats = prepare_case(f, mode)
            for gi, value in enumerate(cfg.grid):
                t, ratio = _scale(cfg, stats, value)
                for d in range(cfg.draws):
                    seed = derive_seed(cfg.master_seed, 1, fi, case, gi, d)
                    res = _perturbation_reduction(f, None, t, seed, cfg.solver, mode, None, cfg.trials, solver_seed)
                    ref = base_rep.value
                    if not exact_baseline:
                        ref = max(ref, res.value) if mode == MAX else min(ref, res.value)
                    try:
                        err = relative_error(ref, res.value)
                    except UndefinedError:
                        err = None
                    it1 = res.step2_trace.rate_after(1) if res.step2_trace else res.rate
                    cost = res.evals + res.marginals
                    row = {
                        "family": fam,
                        "n": cfg.n,
                        "case": case,
                        "mode": mode,
                        "P(t)": _num(ratio),
                        "t": _num(t),
                        "draw": d,
                        "rate_1": _num(it1),
                        "rate_last": _num(res.rate),
                        "E_r": "" if err is None else _num(err),
                        "baseline_value": _num(base_rep.value),
                        "pr_value": _num(res.value),
                        "eval_ratio": _num(cost / max(base_cost, 1)),
                        "pr_evals": cost,
                        "baseline_evals": base_cost,
                        "noise_seed": seed,
                        "solver_seed": solver_seed,
                        "set": res.solution.serialize(),
                        "_grid": gi,
                    }
                    if cfg.timing:
                        row["T_p"] = f"{res.seconds:.6e}"
                        row["T_e"] = f"{T_e:.6e}"
                        row["time_ratio"] = _num(res.seconds / T_e) if T_e > 0 else ""
                    raw.append(row)

    agg = []
    for fam in cfg.families:
        for gi, value in enumerate(cfg.grid):
            sel = [r for r in raw if r["family"] == fam and r["_grid"] == gi]
            errs = [float(r["E_r"]) for r in sel if r["E_r"] != ""]
            row = {
                "family": fam,
                "n": cfg.n,
                "mode": mode,
                "solver": cfg.solver,
                "baseline": baseline,
                "P(t)": _num(float(value)),
                "t_mean": _num(np.mean([float(r["t"]) for r in sel])),
                "E_r": _num(np.mean(errs)) if errs else "",
                "defined": len(errs),
                "rate_1": _num(np.mean([float(r["rate_1"]) for r in sel])),
                "rate_last": _num(np.mean([float(r["rate_last"]) for r in sel])),
                "eval_ratio": _num(np.mean([float(r["eval_ratio"]) for r in sel])),
                "runs": len(sel),
            }
            if cfg.timing:
                row["time_ratio"] = _num(np.mean([float(r["time_ratio"]) for r in sel if r["time_ratio"] != ""]))
            agg.append(row)
    for r in raw:
        r.pop("_grid")
    return agg, raw
