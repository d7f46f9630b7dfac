"""Replicated benchmark runs producing convergence rows and CSV.

Replication ``r`` of every solver and basis order reads the same random
stream ``RngConfig(seed, r)``, so solvers are always compared on identical
samples. SGD shuffling draws from a separate child stream, so changing the
solver never changes the sampled values.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import partial
from typing import Iterable, Sequence

import numpy as np

from .basis import BasisSet, make_basis
from .core import RngConfig, SgdDiverged, Solver, mc_estimate, mse, rel_mse
from .estimator import cv_estimate
from .integrands import Integrand, make_integrand
from .regression import SgdConfig

__all__ = [
    "ExperimentConfig",
    "ConvergenceRow",
    "convergence_rows",
    "run_convergence",
    "run_light_sweep",
    "run_solver_compare",
    "replicate_estimates",
    "write_csv",
    "rows_to_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    integrand: str = "gauss"
    dim: int | None = None
    params: dict = field(default_factory=dict)
    basis: str = "poly"
    orders: tuple[int, ...] = (1, 2)
    solvers: tuple[Solver, ...] = (Solver.PLAIN_MC, Solver.DIRECT_MATRIX)
    n_samples: tuple[int, ...] = (16, 64, 256, 1024)
    replications: int = 100
    seed: int = 0
    cross_fit: bool = False
    sgd: SgdConfig = SgdConfig()
    timing: bool = False
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_samples)
        if not ns or any(n < 1 for n in ns) or any(a >= b for a, b in zip(ns, ns[1:])):
            raise ValueError(f"sample budgets must be positive and ascending, got {ns}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.cross_fit and ns[0] < 2:
            raise ValueError("cross-fitting needs at least two samples")
        object.__setattr__(self, "n_samples", ns)
        object.__setattr__(self, "orders", tuple(int(o) for o in self.orders))
        object.__setattr__(self, "solvers", tuple(Solver(s) for s in self.solvers))

    def make_integrand(self) -> Integrand:
        return make_integrand(self.integrand, self.dim, **self.params)


@dataclass(frozen=True)
class ConvergenceRow:
    integrand: str
    D: int
    basis: str
    order: int
    solver: str
    N: int
    R: int
    mean_estimate: float
    reference: float
    mse: float
    rel_mse: float
    mse_ratio_vs_mc: float
    wall_time_seconds: float | None


CSV_FIELDS = tuple(f.name for f in fields(ConvergenceRow))


def _shuffle_rng(seed: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(rep, 1))
    return np.random.Generator(np.random.Philox(ss))


def _one_replication(
    rep: int,
    integrand: Integrand,
    bases: dict[int, BasisSet],
    solvers: Sequence[Solver],
    n: int,
    seed: int,
    cross_fit: bool,
    sgd: SgdConfig,
) -> dict:
    batch = integrand.sample(RngConfig(seed, rep).generator(), n)
    out = {}
    t0 = time.perf_counter()
    est = mc_estimate(batch).estimate
    out[(Solver.PLAIN_MC, 0)] = (est, time.perf_counter() - t0)
    for order, basis in bases.items():
        for solver in solvers:
            if solver is Solver.PLAIN_MC:
                continue
            t0 = time.perf_counter()
            try:
                est = cv_estimate(
                    batch, basis, solver, sgd=sgd, cross_fit=cross_fit, rng=_shuffle_rng(seed, rep)
                ).estimate
            except SgdDiverged:
                log.warning("SGD diverged: replication %d, %s order %d, N=%d", rep, basis.kind, order, n)
                est = math.nan
            out[(solver, order)] = (est, time.perf_counter() - t0)
    return out


def replicate_estimates(
    integrand: Integrand,
    bases: dict[int, BasisSet],
    solvers: Sequence[Solver],
    n: int,
    replications: int,
    seed: int = 0,
    cross_fit: bool = False,
    sgd: SgdConfig = SgdConfig(),
    workers: int = 1,
) -> dict:
    """Estimates of every ``(solver, order)`` over ``replications`` paired streams.

    Returns ``{(solver, order): (estimates[R], total_seconds)}``. Plain MC is
    always included under ``(PLAIN_MC, 0)``.
    """
    job = partial(
        _one_replication,
        integrand=integrand,
        bases=bases,
        solvers=tuple(solvers),
        n=n,
        seed=seed,
        cross_fit=cross_fit,
        sgd=sgd,
    )
    reps = range(replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, reps, chunksize=max(1, replications // (4 * workers))))
    else:
        results = [job(r) for r in reps]
    merged = {}
    for key in results[0]:
        est = np.array([res[key][0] for res in results])
        secs = float(sum(res[key][1] for res in results))
        merged[key] = (est, secs)
    return merged


def convergence_rows(integrand: Integrand, cfg: ExperimentConfig) -> list[ConvergenceRow]:
    """Run ``cfg`` on an already constructed integrand."""
    reference = integrand.reference()[0]
    bases = {o: make_basis(cfg.basis, integrand.dim, o) for o in cfg.orders}
    rows = []
    for n in cfg.n_samples:
        res = replicate_estimates(
            integrand, bases, cfg.solvers, n, cfg.replications, cfg.seed, cfg.cross_fit, cfg.sgd,
            cfg.workers,
        )
        mc_est, _ = res[(Solver.PLAIN_MC, 0)]
        mc_mse = mse(mc_est, reference)
        for (solver, order), (est, secs) in res.items():
            if solver is Solver.PLAIN_MC and Solver.PLAIN_MC not in cfg.solvers:
                continue
            err = mse(est, reference)
            rows.append(
                ConvergenceRow(
                    integrand=integrand.label(),
                    D=integrand.dim,
                    basis="none" if solver is Solver.PLAIN_MC else cfg.basis,
                    order=order,
                    solver=solver.value,
                    N=n,
                    R=cfg.replications,
                    mean_estimate=float(np.mean(est)),
                    reference=reference,
                    mse=err,
                    rel_mse=rel_mse(est, reference),
                    mse_ratio_vs_mc=err / mc_mse if mc_mse > 0 else math.nan,
                    wall_time_seconds=secs if cfg.timing else None,
                )
            )
    return rows


def run_convergence(cfg: ExperimentConfig) -> list[ConvergenceRow]:
    rows = convergence_rows(cfg.make_integrand(), cfg)
    if cfg.output:
        write_csv(rows, cfg.output)
    return rows


def run_light_sweep(light_counts: Iterable[int], cfg: ExperimentConfig) -> list[ConvergenceRow]:
    """Multi-light runs, one block of rows per light count, ratios against paired MC."""
    if cfg.integrand != "multilight":
        raise ValueError("the light sweep needs the multilight integrand")
    rows = []
    for lights in light_counts:
        params = {**cfg.params, "lights": int(lights)}
        rows += convergence_rows(make_integrand("multilight", None, **params), cfg)
    if cfg.output:
        write_csv(rows, cfg.output)
    return rows


def run_solver_compare(cfg: ExperimentConfig) -> list[ConvergenceRow]:
    """Direct matrix against SGD on identical streams, with wall times."""
    cfg = replace(
        cfg,
        solvers=(Solver.PLAIN_MC, Solver.DIRECT_MATRIX, Solver.SGD),
        timing=True,
        output=cfg.output,
    )
    return run_convergence(cfg)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: Sequence[ConvergenceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        d = asdict(row)
        writer.writerow([_fmt(d[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def write_csv(rows: Sequence[ConvergenceRow], path: str) -> None:
    """Write rows as RFC 4180 CSV (UTF-8, CRLF line ends, header first)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))
