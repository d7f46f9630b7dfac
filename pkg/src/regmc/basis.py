"""Analytically integrable basis families on the unit hypercube.

Every family puts the constant function at index 0. Including the
constant in the least-squares fit is what guarantees the estimator never
does worse than plain Monte Carlo, so no constructor here can omit it.

Basis ordering is fixed:

* polynomial: graded lexicographic, degree ascending; within a degree,
  exponent tuples in descending lexicographic order, so for ``D=2, O=2``
  the order is ``1, u1, u2, u1^2, u1 u2, u2^2``;
* step: cells in row-major order of their per-axis index (axis 0 slowest),
  last cell dropped;
* gaussian: centers in the same row-major order;
* sine: for each axis, for each frequency ``k``, ``sin`` then ``cos``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .core import BasisTooLarge, as_points

__all__ = [
    "MAX_BASIS_COUNT",
    "BasisSet",
    "PolynomialBasis",
    "StepBasis",
    "GaussianBasis",
    "SineBasis",
    "make_polynomial",
    "make_step",
    "make_gaussian",
    "make_sine",
    "make_basis",
    "matched_basis",
    "eval_basis",
    "polynomial_count",
    "monomial_exponents",
]

MAX_BASIS_COUNT = 100_000


def polynomial_count(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


def monomial_exponents(dim: int, order: int) -> np.ndarray:
    """Exponents of all monomials of total degree <= ``order``, shape ``(M+1, dim)``."""
    rows = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), degree):
            alpha = [0] * dim
            for axis in combo:
                alpha[axis] += 1
            rows.append(alpha)
    return np.array(rows, dtype=np.int64).reshape(-1, dim)


def _check_count(count: int):
    if count > MAX_BASIS_COUNT:
        raise BasisTooLarge(f"BasisTooLarge: {count} basis functions exceed {MAX_BASIS_COUNT}")


@dataclass(frozen=True, eq=False)
class BasisSet:
    """A family of basis functions with their exact integrals over ``[0,1]^D``.

    Subclasses implement :meth:`_evaluate` on an ``(N, D)`` array.
    """

    dim: int
    integrals: np.ndarray = field(repr=False)

    kind = "abstract"

    @property
    def count(self) -> int:
        return self.integrals.size

    @property
    def size_param(self) -> int:
        """The family's size parameter (order, cells, centers or frequency)."""
        raise NotImplementedError

    def evaluate(self, u) -> np.ndarray:
        """Basis values at one point ``(D,) -> (M+1,)`` or many ``(N, D) -> (N, M+1)``."""
        pts, single = as_points(u, self.dim)
        out = self._evaluate(pts)
        return out[0] if single else out

    def _evaluate(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def label(self) -> str:
        return f"{self.kind}{self.size_param}"


@dataclass(frozen=True, eq=False)
class PolynomialBasis(BasisSet):
    order: int = 0
    exponents: np.ndarray = field(default=None, repr=False)

    kind = "poly"

    @property
    def size_param(self) -> int:
        return self.order

    def _evaluate(self, pts):
        n = pts.shape[0]
        if self.order == 0:
            return np.ones((n, 1))
        # powers[:, d, k] = u_d ** k
        powers = np.ones((n, self.dim, self.order + 1))
        for k in range(1, self.order + 1):
            powers[:, :, k] = powers[:, :, k - 1] * pts
        axes = np.arange(self.dim)
        return np.prod(powers[:, axes, self.exponents], axis=2)


@dataclass(frozen=True, eq=False)
class StepBasis(BasisSet):
    cells_per_axis: int = 1

    kind = "step"

    @property
    def size_param(self) -> int:
        return self.cells_per_axis

    def _evaluate(self, pts):
        k = self.cells_per_axis
        n = pts.shape[0]
        out = np.zeros((n, self.count))
        out[:, 0] = 1.0
        cell = np.minimum(np.floor(pts * k).astype(np.int64), k - 1)
        flat = np.ravel_multi_index(tuple(cell.T), (k,) * self.dim)
        # The last cell has no indicator of its own.
        keep = flat < self.count - 1
        out[np.nonzero(keep)[0], flat[keep] + 1] = 1.0
        return out


@dataclass(frozen=True, eq=False)
class GaussianBasis(BasisSet):
    centers_per_axis: int = 1
    width: float = 1.0
    centers: np.ndarray = field(default=None, repr=False)

    kind = "gauss"

    @property
    def size_param(self) -> int:
        return self.centers_per_axis

    def _evaluate(self, pts):
        d2 = np.sum((pts[:, None, :] - self.centers[None, :, :]) ** 2, axis=2)
        out = np.empty((pts.shape[0], self.count))
        out[:, 0] = 1.0
        out[:, 1:] = np.exp(-d2 / (2.0 * self.width**2))
        return out


@dataclass(frozen=True, eq=False)
class SineBasis(BasisSet):
    max_freq: int = 1

    kind = "sine"

    @property
    def size_param(self) -> int:
        return self.max_freq

    def _evaluate(self, pts):
        k = np.arange(1, self.max_freq + 1)
        arg = np.pi * pts[:, :, None] * k[None, None, :]  # (N, D, K)
        pair = np.stack([np.sin(arg), np.cos(arg)], axis=3)  # (N, D, K, 2)
        out = np.empty((pts.shape[0], self.count))
        out[:, 0] = 1.0
        out[:, 1:] = pair.reshape(pts.shape[0], -1)
        return out


def _check_dim(dim: int):
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")


def make_polynomial(dim: int, order: int) -> PolynomialBasis:
    """All monomials ``u^alpha`` with ``|alpha| <= order``.

    The integral of ``u^alpha`` over the unit cube is ``prod_k 1/(alpha_k + 1)``.
    """
    _check_dim(dim)
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    _check_count(polynomial_count(dim, order))
    ex = monomial_exponents(dim, order)
    integrals = np.prod(1.0 / (ex + 1.0), axis=1)
    return PolynomialBasis(dim=dim, integrals=integrals, order=order, exponents=ex)


def make_step(dim: int, cells_per_axis: int) -> StepBasis:
    """Constant plus indicators of ``K^D`` uniform cells, the last cell dropped.

    Dropping one cell keeps the indicators linearly independent of the
    constant. Cells are half-open ``[j/K, (j+1)/K)`` except the last one per
    axis, which also contains ``1``.
    """
    _check_dim(dim)
    if cells_per_axis < 1:
        raise ValueError("cells_per_axis must be >= 1")
    n_cells = cells_per_axis**dim
    _check_count(n_cells)
    integrals = np.full(n_cells, float(cells_per_axis) ** -dim)
    integrals[0] = 1.0
    return StepBasis(dim=dim, integrals=integrals, cells_per_axis=cells_per_axis)


def _gauss_axis_integral(c, width):
    s = width * math.sqrt(2.0)
    return width * math.sqrt(math.pi / 2.0) * (erf((1.0 - c) / s) + erf(c / s))


def make_gaussian(dim: int, centers_per_axis: int, width: float | None = None) -> GaussianBasis:
    """Constant plus isotropic Gaussians on a ``K^D`` grid of cell-centred nodes.

    ``width`` defaults to the grid spacing ``1/K``.
    """
    _check_dim(dim)
    k = centers_per_axis
    if k < 1:
        raise ValueError("centers_per_axis must be >= 1")
    if width is None:
        width = 1.0 / k
    if not width > 0:
        raise ValueError("width must be positive")
    _check_count(1 + k**dim)
    axis = (np.arange(k) + 0.5) / k
    centers = np.array(list(itertools.product(axis, repeat=dim))).reshape(-1, dim)
    axis_int = np.array([_gauss_axis_integral(c, width) for c in axis])
    per_center = np.prod(
        np.array(list(itertools.product(axis_int, repeat=dim))).reshape(-1, dim), axis=1
    )
    integrals = np.concatenate([[1.0], per_center])
    return GaussianBasis(
        dim=dim, integrals=integrals, centers_per_axis=k, width=float(width), centers=centers
    )


def make_sine(dim: int, max_freq: int) -> SineBasis:
    """Constant plus ridge functions ``sin(k pi u_j)``, ``cos(k pi u_j)`` for ``k <= K``."""
    _check_dim(dim)
    if max_freq < 1:
        raise ValueError("max_freq must be >= 1")
    _check_count(1 + 2 * dim * max_freq)
    k = np.arange(1, max_freq + 1)
    sin_int = (1.0 - (-1.0) ** k) / (k * np.pi)
    pair = np.stack([sin_int, np.zeros_like(sin_int)], axis=1).reshape(-1)
    integrals = np.concatenate([[1.0], np.tile(pair, dim)])
    return SineBasis(dim=dim, integrals=integrals, max_freq=max_freq)


_FAMILIES = {
    "poly": make_polynomial,
    "step": make_step,
    "gauss": make_gaussian,
    "sine": make_sine,
}


def make_basis(kind: str, dim: int, param: int, **kwargs) -> BasisSet:
    """Build a basis by family name; ``param`` is the family's size parameter."""
    try:
        factory = _FAMILIES[kind]
    except KeyError:
        raise ValueError(f"unknown basis {kind!r}; choose from {sorted(_FAMILIES)}") from None
    return factory(dim, param, **kwargs)


def _family_count(kind: str, dim: int, param: int) -> int:
    if kind == "poly":
        return polynomial_count(dim, param)
    if kind == "step":
        return param**dim
    if kind == "gauss":
        return 1 + param**dim
    if kind == "sine":
        return 1 + 2 * dim * param
    raise ValueError(f"unknown basis {kind!r}")


def matched_basis(kind: str, dim: int, target_count: int) -> BasisSet:
    """Largest member of a family whose function count does not exceed ``target_count``.

    Used to compare families at (roughly) equal parameter counts. Falls back
    to the smallest member when even that exceeds the target.
    """
    param = 0 if kind == "poly" else 1
    while _family_count(kind, dim, param + 1) <= target_count:
        param += 1
    return make_basis(kind, dim, param)


def eval_basis(basis: BasisSet, u) -> np.ndarray:
    return basis.evaluate(u)
