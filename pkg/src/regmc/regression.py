"""Least-squares fitting of a model function ``g(u) = sum_q c_q P_q(u)``.

Two solvers are provided. The direct solver accumulates the normal
equations ``A theta = b`` with ``A = sum_i P(u_i) P(u_i)^T`` and
``b = sum_i f_i P(u_i)`` and returns their minimum-norm solution. The SGD
solver starts from ``theta = 0`` and takes one step per sample on the
squared residual ``r(u, theta) = (f(u) - g(u, theta))^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .basis import BasisSet
from .core import (
    DimensionMismatch,
    EmptyBatch,
    NonFiniteSample,
    SampleBatch,
    SgdDiverged,
)

__all__ = [
    "RANK_RTOL",
    "SGD_THETA_LIMIT",
    "ModelFunction",
    "NormalSystem",
    "SgdConfig",
    "accumulate",
    "normal_system",
    "solve_direct",
    "solve_sgd",
    "run_sgd",
    "sgd_gradient",
    "eval_model",
    "model_integral",
    "residual_estimate",
    "constant_fit",
]

# Singular values below RANK_RTOL * sigma_max are treated as zero.
RANK_RTOL = 1e-12
SGD_THETA_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ModelFunction:
    basis: BasisSet
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != self.basis.count:
            raise DimensionMismatch(
                f"theta has {theta.size} coefficients, basis has {self.basis.count} functions"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("model coefficients must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, basis: BasisSet) -> "ModelFunction":
        return cls(basis, np.zeros(basis.count))

    def __call__(self, u):
        return self.basis.evaluate(u) @ self.theta

    @property
    def integral(self) -> float:
        return float(self.theta @ self.basis.integrals)


@dataclass(frozen=True, eq=False)
class NormalSystem:
    """Accumulated normal equations. Systems over disjoint shards merge with ``+``."""

    matrix: np.ndarray
    rhs: np.ndarray
    n_accumulated: int = 0

    @classmethod
    def empty(cls, size: int) -> "NormalSystem":
        return cls(np.zeros((size, size)), np.zeros(size), 0)

    @property
    def size(self) -> int:
        return self.rhs.size

    def __add__(self, other: "NormalSystem") -> "NormalSystem":
        if other.size != self.size:
            raise DimensionMismatch("cannot merge normal systems of different sizes")
        return NormalSystem(
            self.matrix + other.matrix, self.rhs + other.rhs, self.n_accumulated + other.n_accumulated
        )


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    epochs: int = 4
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def _check_values(values):
    if not np.all(np.isfinite(values)):
        raise NonFiniteSample("NonFiniteSample: integrand value is not finite")


def accumulate(system: NormalSystem, basis: BasisSet, u, f_value) -> NormalSystem:
    """Add one sample (or a stack of samples) to the normal equations.

    Costs ``O(M^2)`` per sample. Only the upper triangle is summed and then
    mirrored, so the matrix is exactly symmetric.
    """
    p = basis.evaluate(u)
    f = np.atleast_1d(np.asarray(f_value, dtype=np.float64))
    _check_values(f)
    p = np.atleast_2d(p)
    if p.shape[0] != f.size:
        raise DimensionMismatch("number of points and values differ")
    a = system.matrix.copy()
    b = system.rhs.copy()
    iu = np.triu_indices(system.size)
    for row, fv in zip(p, f):
        a[iu] += np.outer(row, row)[iu]
        b += fv * row
    a = np.triu(a) + np.triu(a, 1).T
    return NormalSystem(a, b, system.n_accumulated + f.size)


def normal_system(batch: SampleBatch, basis: BasisSet, design: np.ndarray | None = None) -> NormalSystem:
    """Normal equations of a whole batch in one matrix product.

    ``design`` may pass in a precomputed ``basis.evaluate(batch.points)``.
    """
    p = basis.evaluate(batch.points) if design is None else design
    a = p.T @ p
    a = np.triu(a) + np.triu(a, 1).T
    return NormalSystem(a, p.T @ batch.values, batch.n)


def _min_norm_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Symmetric eigendecomposition is the SVD of a PSD matrix; negative
    # eigenvalues are rounding noise of a rank-deficient system.
    w, v = np.linalg.eigh(a)
    cutoff = RANK_RTOL * max(np.max(np.abs(w)), 0.0)
    keep = w > cutoff
    if not np.any(keep):
        return np.zeros_like(b)
    vk = v[:, keep]
    return vk @ ((vk.T @ b) / w[keep])


def solve_direct(system: NormalSystem, basis: BasisSet) -> ModelFunction:
    """Minimum-norm least-squares solution of the accumulated normal equations.

    Works for singular systems (few samples, duplicated points, redundant
    basis functions): components in the numerical null space are set to zero.
    """
    if system.n_accumulated < 1:
        raise EmptyBatch("EmptyBatch: solve_direct needs at least one accumulated sample")
    if system.size != basis.count:
        raise DimensionMismatch("system size does not match basis")
    theta = _min_norm_solve(system.matrix, system.rhs)
    return ModelFunction(basis, theta)


@numba.njit(cache=True)
def _sgd_steps(design, values, order, theta, step, limit):
    """In-place SGD over ``order``; returns False once ``|theta|`` exceeds ``limit``."""
    m = theta.size
    lim2 = limit * limit
    for i in order:
        pred = 0.0
        for q in range(m):
            pred += design[i, q] * theta[q]
        scale = step * (values[i] - pred)
        norm2 = 0.0
        for q in range(m):
            theta[q] += scale * design[i, q]
            norm2 += theta[q] * theta[q]
        if not norm2 <= lim2:
            return False
    return True


def run_sgd(design, values, theta, learning_rate, order) -> np.ndarray:
    """Apply single-sample gradient steps to ``theta`` in place along ``order``.

    Each step is ``theta += 2 * lr * (f_i - g(u_i)) * P(u_i)``: the exact
    negative gradient of ``(f_i - g(u_i))^2`` scaled by ``lr``.
    """
    ok = _sgd_steps(
        np.ascontiguousarray(design, dtype=np.float64),
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.int64),
        theta,
        2.0 * learning_rate,
        SGD_THETA_LIMIT,
    )
    if not ok:
        raise SgdDiverged(f"SgdDiverged: |theta| exceeded {SGD_THETA_LIMIT:g}")
    return theta


def solve_sgd(
    batch: SampleBatch,
    basis: BasisSet,
    cfg: SgdConfig = SgdConfig(),
    rng: np.random.Generator | None = None,
    design: np.ndarray | None = None,
) -> ModelFunction:
    """Fit by stochastic gradient descent, ``cfg.epochs`` passes over the batch.

    With ``cfg.shuffle`` each pass visits the samples in a fresh permutation
    drawn from ``rng`` (a fixed default stream when ``rng`` is None).
    """
    if batch.dim != basis.dim:
        raise DimensionMismatch("batch and basis dimensions differ")
    p = basis.evaluate(batch.points) if design is None else design
    theta = np.zeros(basis.count)
    if cfg.shuffle and rng is None:
        rng = np.random.default_rng(0)
    for _ in range(cfg.epochs):
        order = rng.permutation(batch.n) if cfg.shuffle else np.arange(batch.n)
        run_sgd(p, batch.values, theta, cfg.learning_rate, order)
    return ModelFunction(basis, theta)


def sgd_gradient(model: ModelFunction, u, f_value: float) -> np.ndarray:
    """Gradient of ``(f - g(u, theta))^2`` with respect to ``theta``."""
    p = model.basis.evaluate(u)
    return -2.0 * (f_value - p @ model.theta) * p


def eval_model(model: ModelFunction, u):
    return model(u)


def model_integral(model: ModelFunction) -> float:
    return model.integral


def residual_estimate(model: ModelFunction, batch: SampleBatch) -> float:
    """Mean squared misfit ``(1/N) sum_i (f_i - g(u_i))^2`` on the batch."""
    if len(batch) == 0:
        raise EmptyBatch("EmptyBatch")
    r = batch.values - model(batch.points)
    return float(np.mean(r * r))


def constant_fit(batch: SampleBatch, basis: BasisSet) -> ModelFunction:
    """The best constant model (the sample mean) expressed in ``basis``."""
    theta = np.zeros(basis.count)
    theta[0] = np.mean(batch.values)
    return ModelFunction(basis, theta)
