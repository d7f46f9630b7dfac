"""Shared domain types, plain Monte Carlo estimation and error metrics.

Points live in the primary sample space, the unit hypercube ``[0, 1]^D``.
Batches are stored as arrays: ``points`` has shape ``(N, D)`` and
``values`` has shape ``(N,)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegMCError",
    "EmptyBatch",
    "DimensionMismatch",
    "BasisTooLarge",
    "NonFiniteSample",
    "SgdDiverged",
    "Solver",
    "RngConfig",
    "SampleBatch",
    "EstimateReport",
    "MisSample",
    "as_unit_point",
    "as_points",
    "mc_estimate",
    "mse",
    "rel_mse",
]


class RegMCError(Exception):
    """Base class for errors raised by this package."""


class EmptyBatch(RegMCError, ValueError):
    pass


class DimensionMismatch(RegMCError, ValueError):
    pass


class BasisTooLarge(RegMCError, ValueError):
    pass


class NonFiniteSample(RegMCError, ValueError):
    pass


class SgdDiverged(RegMCError, RuntimeError):
    pass


class Solver(str, enum.Enum):
    PLAIN_MC = "PlainMC"
    DIRECT_MATRIX = "DirectMatrix"
    SGD = "Sgd"
    INCREMENTAL = "Incremental"

    @classmethod
    def parse(cls, name: str) -> "Solver":
        key = name.strip().lower().replace("_", "").replace("-", "")
        for s in cls:
            if s.value.lower() == key:
                return s
        aliases = {"mc": cls.PLAIN_MC, "direct": cls.DIRECT_MATRIX, "matrix": cls.DIRECT_MATRIX}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown solver {name!r}")


@dataclass(frozen=True)
class RngConfig:
    """A reproducible random stream identified by ``(seed, stream)``.

    Each stream is an independent Philox sequence keyed through
    :class:`numpy.random.SeedSequence`, so replication ``r`` of an
    experiment can be regenerated without touching the others.
    """

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))


def as_unit_point(u, dim: int | None = None) -> np.ndarray:
    """Validate a single point of the unit hypercube and return it as a 1-D array."""
    arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatch(f"a unit point must be a nonempty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise DimensionMismatch(f"expected a point of dimension {dim}, got {arr.size}")
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ValueError("unit point coordinates must lie in [0, 1]")
    return arr


def as_points(u, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce one point ``(D,)`` or many ``(N, D)`` to a 2-D array.

    Returns the array and whether the input was a single point.
    """
    arr = np.asarray(u, dtype=np.float64)
    single = arr.ndim <= 1
    if single:
        arr = np.atleast_1d(arr)[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {np.shape(u)}")
    return arr, single


@dataclass(frozen=True)
class SampleBatch:
    """Integrand samples ``f(u_i)`` at uniform points ``u_i`` of ``[0, 1]^D``."""

    points: np.ndarray
    values: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        points = np.asarray(self.points, dtype=np.float64)
        if values.size == 0:
            raise EmptyBatch("EmptyBatch: a sample batch needs at least one sample")
        if points.ndim == 1:
            # A flat vector of N scalars is read as N one-dimensional points.
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] != values.size:
            raise DimensionMismatch(
                f"points shape {points.shape} does not match {values.size} values"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteSample("NonFiniteSample: all integrand values must be finite")
        if not np.all((points >= 0.0) & (points <= 1.0)):
            raise ValueError("sample points must lie in the unit hypercube")
        points.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dim", points.shape[1])

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    def split(self) -> tuple["SampleBatch", "SampleBatch"]:
        """Split into a first and second half (the first gets the smaller part)."""
        if self.n < 2:
            raise EmptyBatch("EmptyBatch: cannot split a batch with fewer than two samples")
        h = self.n // 2
        return (
            SampleBatch(self.points[:h], self.values[:h]),
            SampleBatch(self.points[h:], self.values[h:]),
        )


@dataclass(frozen=True)
class EstimateReport:
    """Output of an estimator.

    ``estimate`` is always ``model_integral + difference_mean``; plain Monte
    Carlo reports a zero model integral so every solver has the same shape.
    """

    estimate: float
    model_integral: float
    difference_mean: float
    n_samples: int
    residual_estimate: float
    solver: Solver

    @classmethod
    def from_parts(cls, model_integral, difference_mean, n_samples, residual_estimate, solver):
        g = float(model_integral)
        d = float(difference_mean)
        return cls(g + d, g, d, int(n_samples), float(residual_estimate), Solver(solver))


@dataclass(frozen=True)
class MisSample:
    """One sample of one MIS technique.

    ``point`` is the technique's own primary-sample-space coordinate and
    ``weighted_value`` is ``w_t(x) f(x) / p_t(x)``.
    """

    point: np.ndarray
    weighted_value: float
    technique: int


def mc_estimate(batch: SampleBatch) -> EstimateReport:
    """Plain Monte Carlo: the mean of the sampled values.

    The reported residual is that of the best constant fit (the sample
    variance with divisor ``N``), the model plain MC implicitly uses.
    """
    if batch is None or len(batch) == 0:
        raise EmptyBatch("EmptyBatch")
    mean = float(np.mean(batch.values))
    resid = float(np.mean((batch.values - mean) ** 2))
    return EstimateReport.from_parts(0.0, mean, batch.n, resid, Solver.PLAIN_MC)


def _errors(estimates, reference: float) -> np.ndarray:
    est = np.asarray(estimates, dtype=np.float64).reshape(-1)
    if est.size == 0:
        raise EmptyBatch("EmptyBatch: no estimates given")
    if not np.isfinite(reference):
        raise ValueError("reference must be finite")
    return est - reference


def mse(estimates, reference: float) -> float:
    """Mean squared error of replicated estimates against a reference value."""
    err = _errors(estimates, reference)
    return float(np.mean(err**2))


def rel_mse(estimates, reference: float) -> float:
    """Squared error normalised by ``reference**2 + 0.01``, averaged over estimates."""
    err = _errors(estimates, reference)
    return float(np.mean(err**2 / (reference**2 + 0.01)))
