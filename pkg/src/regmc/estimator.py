"""Control-variate estimators built on a least-squares model function.

The batch estimator is ``G(theta) + (1/N) sum_i (f_i - g(u_i, theta))``: the
exact integral of the fitted model plus a Monte Carlo estimate of what the
model misses. With the constant function in the basis this reduces to plain
Monte Carlo whenever the fit is constant.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .basis import BasisSet
from .core import (
    DimensionMismatch,
    EmptyBatch,
    EstimateReport,
    MisSample,
    NonFiniteSample,
    SampleBatch,
    SgdDiverged,
    Solver,
    as_unit_point,
    mc_estimate,
)
from .regression import (
    SGD_THETA_LIMIT,
    ModelFunction,
    SgdConfig,
    normal_system,
    solve_direct,
    solve_sgd,
)

__all__ = [
    "fit_model",
    "cv_estimate",
    "IncrementalState",
    "incremental_init",
    "incremental_step",
    "incremental_run",
    "MisSample",
    "mis_cv_estimate",
    "mis_cv_estimate_batches",
]


def fit_model(
    batch: SampleBatch,
    basis: BasisSet,
    solver: Solver = Solver.DIRECT_MATRIX,
    sgd: SgdConfig = SgdConfig(),
    rng: np.random.Generator | None = None,
    design: np.ndarray | None = None,
) -> ModelFunction:
    if batch.dim != basis.dim:
        raise DimensionMismatch(f"batch dimension {batch.dim} != basis dimension {basis.dim}")
    solver = Solver(solver)
    if solver is Solver.DIRECT_MATRIX:
        return solve_direct(normal_system(batch, basis, design), basis)
    if solver is Solver.SGD:
        return solve_sgd(batch, basis, sgd, rng=rng, design=design)
    raise ValueError(f"{solver.value} does not fit a model")


def _difference(model: ModelFunction, batch: SampleBatch, design: np.ndarray) -> tuple[float, float]:
    """Mean and mean square of ``f - g`` on the batch.

    The mean is taken as ``mean(f) - theta . mean(P)``. Column 0 of ``P`` is
    exactly 1, so for a constant model this is ``mean(f) - c`` with no
    extra rounding and the estimator reproduces plain MC.
    """
    dmean = float(np.mean(batch.values) - model.theta @ np.mean(design, axis=0))
    r = batch.values - design @ model.theta
    return dmean, float(np.mean(r * r))


def _single_estimate(batch, basis, solver, sgd, rng):
    design = basis.evaluate(batch.points)
    model = fit_model(batch, basis, solver, sgd, rng, design)
    dmean, resid = _difference(model, batch, design)
    return model.integral, dmean, resid


def _cross_fit_estimate(batch, basis, solver, sgd, rng):
    first, second = batch.split()
    d1 = basis.evaluate(first.points)
    d2 = basis.evaluate(second.points)
    m1 = fit_model(first, basis, solver, sgd, rng, d1)
    m2 = fit_model(second, basis, solver, sgd, rng, d2)
    # Each model is scored on the half it never saw.
    dm_a, r_a = _difference(m1, second, d2)
    dm_b, r_b = _difference(m2, first, d1)
    g = 0.5 * (m1.integral + m2.integral)
    return g, 0.5 * (dm_a + dm_b), 0.5 * (r_a + r_b)


def cv_estimate(
    batch: SampleBatch,
    basis: BasisSet,
    solver: Solver = Solver.DIRECT_MATRIX,
    *,
    sgd: SgdConfig = SgdConfig(),
    cross_fit: bool = False,
    rng: np.random.Generator | None = None,
) -> EstimateReport:
    """Regression-based control-variate estimate of the integral over ``[0,1]^D``.

    Parameters
    ----------
    batch : SampleBatch
        Uniform samples and integrand values.
    basis : BasisSet
        Model family; must contain the constant (all built-in families do).
    solver : Solver
        ``DIRECT_MATRIX`` or ``SGD``. ``PLAIN_MC`` and ``INCREMENTAL`` are
        accepted too so that experiment drivers can treat all solvers alike.
    sgd : SgdConfig
        Learning rate and passes for ``SGD`` and ``INCREMENTAL``.
    cross_fit : bool
        Fit on each half of the batch and take the difference term on the
        other half, then average. Removes the small bias of fitting and
        estimating on the same samples.
    rng : numpy.random.Generator, optional
        Source of the SGD shuffling order.

    Returns
    -------
    EstimateReport
        ``model_integral`` is the model's exact integral and
        ``difference_mean`` the sample mean of ``f - g``.
        ``residual_estimate`` is the mean squared misfit, measured on held-out
        halves when ``cross_fit`` is set.
    """
    solver = Solver(solver)
    if solver is Solver.PLAIN_MC:
        return mc_estimate(batch)
    if solver is Solver.INCREMENTAL:
        return incremental_run(batch, basis, sgd)[0]
    if cross_fit:
        g, d, r = _cross_fit_estimate(batch, basis, solver, sgd, rng)
    else:
        g, d, r = _single_estimate(batch, basis, solver, sgd, rng)
    return EstimateReport.from_parts(g, d, batch.n, r, solver)


@dataclass(frozen=True, eq=False)
class IncrementalState:
    """Progressive estimator state after ``n`` samples; ``estimate`` is NaN while ``n == 0``."""

    n: int
    estimate: float
    model: ModelFunction
    sgd_cfg: SgdConfig


def incremental_init(basis: BasisSet, cfg: SgdConfig = SgdConfig()) -> IncrementalState:
    return IncrementalState(0, float("nan"), ModelFunction.zeros(basis), cfg)


def incremental_step(state: IncrementalState, u, f_value: float) -> IncrementalState:
    """Fold one new sample into the running estimate, then update the model.

    The sample's contribution ``G_n + f(u) - g_n(u)`` uses the model from
    *before* the update. That model does not depend on ``u``, which is what
    keeps the running estimate unbiased.
    """
    basis = state.model.basis
    u = as_unit_point(u, basis.dim)
    f = float(f_value)
    if not np.isfinite(f):
        raise NonFiniteSample("NonFiniteSample: integrand value is not finite")
    p = basis.evaluate(u)
    theta = state.model.theta
    g = float(p @ theta)
    contribution = state.model.integral + (f - g)
    if state.n == 0:
        estimate = contribution
    else:
        estimate = (state.n * state.estimate + contribution) / (state.n + 1)
    new_theta = theta + 2.0 * state.sgd_cfg.learning_rate * (f - g) * p
    if not np.linalg.norm(new_theta) <= SGD_THETA_LIMIT:
        raise SgdDiverged(f"SgdDiverged: |theta| exceeded {SGD_THETA_LIMIT:g}")
    return IncrementalState(state.n + 1, estimate, ModelFunction(basis, new_theta), state.sgd_cfg)


@numba.njit(cache=True)
def _incremental_kernel(design, values, integrals, theta, step, limit, out):
    m = theta.size
    lim2 = limit * limit
    estimate = 0.0
    for i in range(values.size):
        pred = 0.0
        g_int = 0.0
        for q in range(m):
            pred += design[i, q] * theta[q]
            g_int += integrals[q] * theta[q]
        diff = values[i] - pred
        estimate = (i * estimate + (g_int + diff)) / (i + 1)
        out[i, 0] = estimate
        out[i, 1] = g_int
        out[i, 2] = diff
        scale = step * diff
        norm2 = 0.0
        for q in range(m):
            theta[q] += scale * design[i, q]
            norm2 += theta[q] * theta[q]
        if not norm2 <= lim2:
            return False
    return True


def incremental_run(
    batch: SampleBatch, basis: BasisSet, cfg: SgdConfig = SgdConfig()
) -> tuple[EstimateReport, np.ndarray, ModelFunction]:
    """Feed a batch through the incremental estimator in sample order.

    Same arithmetic as repeated :func:`incremental_step`, compiled.
    Returns the final report, the running estimates after each sample and
    the final model.
    """
    if batch.dim != basis.dim:
        raise DimensionMismatch("batch and basis dimensions differ")
    design = np.ascontiguousarray(basis.evaluate(batch.points))
    theta = np.zeros(basis.count)
    out = np.empty((batch.n, 3))
    ok = _incremental_kernel(
        design,
        np.ascontiguousarray(batch.values),
        np.ascontiguousarray(basis.integrals),
        theta,
        2.0 * cfg.learning_rate,
        SGD_THETA_LIMIT,
        out,
    )
    if not ok:
        raise SgdDiverged(f"SgdDiverged: |theta| exceeded {SGD_THETA_LIMIT:g}")
    model = ModelFunction(basis, theta)
    running = out[:, 0]
    # Report G as the mean pre-update model integral; the difference term
    # is whatever remains of the running estimate.
    g_mean = float(np.mean(out[:, 1]))
    report = EstimateReport.from_parts(
        g_mean,
        float(running[-1]) - g_mean,
        batch.n,
        float(np.mean(out[:, 2] ** 2)),
        Solver.INCREMENTAL,
    )
    return report, running.copy(), model


def mis_cv_estimate_batches(
    batches: Sequence[SampleBatch],
    basis: BasisSet,
    solver: Solver = Solver.DIRECT_MATRIX,
    **kwargs,
) -> EstimateReport:
    """Sum of per-technique control-variate estimates over weighted samples.

    ``batches[t]`` holds technique ``t``'s primary-space points and weighted
    values. Each technique gets its own fit; with a constant-only basis the
    result is the ordinary weighted MIS estimate.
    """
    if len(batches) == 0:
        raise EmptyBatch("EmptyBatch: no MIS samples")
    reports = [cv_estimate(b, basis, solver, **kwargs) for b in batches]
    return EstimateReport.from_parts(
        sum(r.model_integral for r in reports),
        sum(r.difference_mean for r in reports),
        sum(r.n_samples for r in reports),
        sum(r.residual_estimate for r in reports),
        reports[0].solver,
    )


def mis_cv_estimate(
    samples: Sequence[MisSample],
    basis: BasisSet,
    solver: Solver = Solver.DIRECT_MATRIX,
    **kwargs,
) -> EstimateReport:
    if len(samples) == 0:
        raise EmptyBatch("EmptyBatch: no MIS samples")
    groups = defaultdict(list)
    for s in samples:
        groups[s.technique].append(s)
    batches = [
        SampleBatch(
            np.array([np.atleast_1d(s.point) for s in groups[t]]),
            np.array([s.weighted_value for s in groups[t]]),
        )
        for t in sorted(groups)
    ]
    return mis_cv_estimate_batches(batches, basis, solver, **kwargs)
