"""Run configurations, report rows and the three batch drivers behind the CLI.

Errors in report rows are relative: ``max |u - u*| / max |u*|`` with the
maximum of ``|u*|`` taken over the global Gauss nodes.
"""

from __future__ import annotations

import csv
import gc
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigError, HPSError, ResourceGuard
from .problem import CATALOGUE, catalogue
from .solver import MEMORY_POLICIES, build, estimate_memory, evaluate_at, solve
from .tree import build_tree

logger = logging.getLogger(__name__)

CSV_HEADER = ["N", "q", "L", "build_s", "solve_s", "err_gauss", "err_random"]
SMALL_N = 100_000


@dataclass
class RunConfig:
    case: str = "laplace_harmonic"
    params: dict = field(default_factory=dict)
    leaves: tuple = (4, 4)
    q: int = 16
    p: Optional[int] = None
    body: bool = False
    memory: str = "many"
    out: Optional[str] = None
    seed: int = 0
    threads: int = 1
    n_random: int = 100
    lattice: int = 33
    q_list: list = field(default_factory=lambda: [6, 10, 14])
    L_list: list = field(default_factory=lambda: [3, 4, 5, 6])
    max_memory_gb: float = 8.0
    repeats: Optional[int] = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        return cls(**data)

    def validate(self, needs_out: bool = True) -> "RunConfig":
        if self.case not in CATALOGUE:
            raise ConfigError(f"case: unknown case {self.case!r}; choose from {sorted(CATALOGUE)}")
        if not isinstance(self.params, dict):
            raise ConfigError("params: expected a mapping of name to number")
        for k, v in self.params.items():
            try:
                self.params[k] = float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"params: value for {k!r} is not a number: {v!r}") from None
        try:
            nx, ny = (int(v) for v in self.leaves)
        except (TypeError, ValueError):
            raise ConfigError(f"leaves: expected two integers, got {self.leaves!r}") from None
        for n in (nx, ny):
            if n < 1 or n & (n - 1):
                raise ConfigError(f"leaves: counts must be powers of two, got {nx} {ny}")
        self.leaves = (nx, ny)
        if int(self.q) != self.q or self.q < 2:
            raise ConfigError(f"q: need an integer >= 2, got {self.q}")
        if self.p is not None and (int(self.p) != self.p or self.p < 4):
            raise ConfigError(f"p: need an integer >= 4, got {self.p}")
        if self.memory not in MEMORY_POLICIES:
            raise ConfigError(f"memory: expected one of {MEMORY_POLICIES}, got {self.memory!r}")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError(f"threads: need a positive integer, got {self.threads}")
        if int(self.seed) != self.seed:
            raise ConfigError(f"seed: need an integer, got {self.seed}")
        if self.n_random < 0 or self.lattice < 2:
            raise ConfigError("n_random must be >= 0 and lattice >= 2")
        if list(self.q_list) != sorted(set(self.q_list)) or any(q < 2 for q in self.q_list):
            raise ConfigError(f"q_list: need ascending distinct values >= 2, got {self.q_list}")
        if list(self.L_list) != sorted(set(self.L_list)) or any(L < 0 for L in self.L_list):
            raise ConfigError(f"L_list: need ascending distinct depths >= 0, got {self.L_list}")
        if self.max_memory_gb <= 0:
            raise ConfigError("max_memory_gb: must be positive")
        if needs_out:
            if not self.out:
                raise ConfigError("out: an output directory is required")
            if not os.path.isdir(self.out):
                raise ConfigError(f"out: output directory does not exist: {self.out}")
        catalogue(self.case, self.params)  # surfaces invalid-params early
        return self


@dataclass
class ReportRow:
    N: int
    q: int
    L: int
    build_seconds: float
    solve_seconds: float
    max_error_gauss: float
    max_error_random_points: float
    memory_bytes_estimate: int

    def csv_cells(self):
        return [self.N, self.q, self.L, f"{self.build_seconds:.6g}", f"{self.solve_seconds:.6g}",
                f"{self.max_error_gauss:.6e}", f"{self.max_error_random_points:.6e}"]


@dataclass
class RunResult:
    row: ReportRow
    tree: object
    cache: object
    solution: object
    case: object


def _timed(fn, repeats):
    """Best wall time of ``fn`` over ``repeats`` runs, with the collector paused as timeit does."""
    best, out = math.inf, None
    for _ in range(repeats):
        # free the previous result outside the timed window
        out = None
        gc.collect()
        enabled = gc.isenabled()
        gc.disable()
        try:
            t0 = time.perf_counter()
            out = fn()
            best = min(best, time.perf_counter() - t0)
        finally:
            if enabled:
                gc.enable()
    return best, out


def random_points(domain, n, seed):
    rng = np.random.default_rng(seed)
    u = rng.random((n, 2))
    return np.column_stack([domain.x0 + u[:, 0] * domain.width, domain.y0 + u[:, 1] * domain.height])


def run_case(cfg: RunConfig, leaves=None, q=None, repeats: int = 1) -> RunResult:
    """Build and solve one configuration and measure errors against the exact solution."""
    case = catalogue(cfg.case, cfg.params)
    nx, ny = leaves or cfg.leaves
    q = q or cfg.q
    p = cfg.p if cfg.p is not None else q + 1
    tree, grid = build_tree(case.domain, nx, ny, q)
    mem = estimate_memory(tree, p, cfg.body, cfg.memory)
    cap = cfg.max_memory_gb * 2 ** 30
    if mem > cap:
        raise ResourceGuard(f"estimated {mem / 2 ** 30:.2f} GiB exceeds cap of {cfg.max_memory_gb} GiB")

    prob = case.problem
    build_s, cache = _timed(lambda: build(prob, tree, with_body=cfg.body, p=p, memory=cfg.memory,
                                          threads=cfg.threads), repeats)
    solve_s, sol = _timed(lambda: solve(cache, threads=cfg.threads), repeats)

    err_g = err_r = float("nan")
    if prob.exact is not None:
        exact = prob.exact(grid.points[:, 0], grid.points[:, 1])
        scale = np.max(np.abs(exact)) or 1.0
        err_g = float(np.max(np.abs(sol.u - exact)) / scale)
        if cfg.n_random:
            pts = random_points(case.domain, cfg.n_random, cfg.seed)
            vals = evaluate_at(cache, sol, pts)
            err_r = float(np.max(np.abs(vals - prob.exact(pts[:, 0], pts[:, 1]))) / scale)
    row = ReportRow(N=grid.n, q=q, L=tree.L, build_seconds=build_s, solve_seconds=solve_s,
                    max_error_gauss=err_g, max_error_random_points=err_r, memory_bytes_estimate=int(mem))
    return RunResult(row=row, tree=tree, cache=cache, solution=sol, case=case)


def write_field(path, xy, values):
    with open(path, "w") as fh:
        fh.write("x,y,u\n")
        for (x, y), u in zip(xy, values):
            fh.write(f"{x:.17g},{y:.17g},{u:.17g}\n")


def _config_json(cfg):
    d = asdict(cfg)
    d["leaves"] = list(cfg.leaves)
    return d


def cmd_solve(cfg: RunConfig) -> RunResult:
    """Build, solve, and write field dumps plus a JSON report into ``cfg.out``."""
    cfg.validate()
    res = run_case(cfg)
    grid = res.tree.grid
    write_field(os.path.join(cfg.out, "field_gauss.txt"), grid.points, res.solution.u)
    d = res.case.domain
    xs = np.linspace(d.x0, d.x1, cfg.lattice)
    ys = np.linspace(d.y0, d.y1, cfg.lattice)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    lattice = np.column_stack([X.ravel(), Y.ravel()])
    write_field(os.path.join(cfg.out, "field_lattice.txt"), lattice,
                evaluate_at(res.cache, res.solution, lattice))
    report = {
        "command": "solve",
        "config": _config_json(cfg),
        "params": res.case.params,
        "tree": res.tree.describe(),
        "p": res.cache.p,
        "row": asdict(res.row),
    }
    with open(os.path.join(cfg.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return res


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r)


def cmd_convergence(cfg: RunConfig, q_list=None) -> list:
    """One row per q at fixed leaf count; failures are recorded and the sweep continues."""
    q_list = list(q_list or cfg.q_list)
    cfg.q_list = q_list
    cfg.validate()
    rows, cells = [], []
    for q in q_list:
        try:
            row = run_case(cfg, q=q).row
        except HPSError as exc:
            logger.warning("q=%d failed: %s", q, exc)
            rows.append(None)
            cells.append(["", q, "", "failed", "failed", "failed", "failed"])
            continue
        rows.append(row)
        cells.append(row.csv_cells())
    _write_csv(os.path.join(cfg.out, "convergence.csv"), cells)
    return rows


def fit_slope(n, t):
    """Least-squares slope of log t against log n; None with fewer than two points."""
    n, t = np.asarray(n, float), np.asarray(t, float)
    ok = (n > 0) & (t > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(n[ok]), np.log(t[ok]), 1)[0])


def cmd_bench(cfg: RunConfig, L_list=None) -> dict:
    """Time build and solve on 2**L x 2**L leaves for each depth and fit log-log slopes."""
    L_list = list(L_list or cfg.L_list)
    cfg.L_list = L_list
    cfg.validate()
    rows, cells, skipped = [], [], []
    for L in L_list:
        nx = ny = 2 ** L
        n_est = 2 ** (2 * L + 1) * cfg.q + 2 ** (L + 1) * cfg.q
        repeats = cfg.repeats or (3 if n_est < SMALL_N else 1)
        try:
            row = run_case(cfg, leaves=(nx, ny), repeats=repeats).row
        except ResourceGuard as exc:
            logger.warning("L=%d skipped: %s", L, exc)
            skipped.append({"L": L, "reason": str(exc)})
            continue
        rows.append(row)
        cells.append(row.csv_cells())
    _write_csv(os.path.join(cfg.out, "bench.csv"), cells)
    summary = {
        "build_slope": fit_slope([r.N for r in rows], [r.build_seconds for r in rows]),
        "solve_slope": fit_slope([r.N for r in rows], [r.solve_seconds for r in rows]),
        "rows": [asdict(r) for r in rows],
        "skipped": skipped,
    }
    with open(os.path.join(cfg.out, "bench_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
