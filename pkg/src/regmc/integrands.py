"""Analytic test integrands on the unit hypercube with reference integrals.

Every integrand is a frozen dataclass that maps points to values: a single
point ``(D,)`` gives a float, a stack ``(N, D)`` gives an array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import DimensionMismatch, MisSample, SampleBatch, as_points

__all__ = [
    "Integrand",
    "Step1d",
    "ShiftedGaussian1d",
    "HighFreq1d",
    "Poly1d",
    "SumSin",
    "ExpSum",
    "MultiLight",
    "MisToy",
    "evaluate",
    "reference_integral",
    "make_integrand",
    "INTEGRAND_NAMES",
    "builtin_integrands",
    "mis_toy_pdfs",
    "mis_toy_transform",
    "mis_toy_sample",
    "mis_toy_batch",
]

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class Integrand:
    name = "integrand"
    dim = 1

    def __call__(self, u):
        pts, single = as_points(u, self.dim)
        out = self._f(pts)
        return float(out[0]) if single else out

    def _f(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reference(self) -> tuple[float, float]:
        """``(value, tolerance)`` of the exact integral over ``[0,1]^D``."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> SampleBatch:
        pts = rng.random((n, self.dim))
        return SampleBatch(pts, self._f(pts))

    def label(self) -> str:
        return self.name


def _quad(fn, **kw):
    value, err = integrate.quad(fn, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=500, **kw)
    return value, err


@dataclass(frozen=True)
class Step1d(Integrand):
    threshold: float = 0.5
    lo: float = 0.0
    hi: float = 1.0

    name = "step"

    def _f(self, pts):
        return np.where(pts[:, 0] < self.threshold, self.lo, self.hi)

    def reference(self):
        t = self.threshold
        return self.lo * t + self.hi * (1.0 - t), 0.0


@dataclass(frozen=True)
class ShiftedGaussian1d(Integrand):
    center: float = 0.6
    width: float = 0.1

    name = "gauss"

    def _f(self, pts):
        return np.exp(-((pts[:, 0] - self.center) ** 2) / (2.0 * self.width**2))

    def reference(self):
        fn = lambda x: math.exp(-((x - self.center) ** 2) / (2.0 * self.width**2))
        return _quad(fn, points=[self.center])


@dataclass(frozen=True)
class HighFreq1d(Integrand):
    """``sin(2 pi freq u) + 1``."""

    freq: int = 10

    name = "highfreq"

    def _f(self, pts):
        return np.sin(2.0 * np.pi * self.freq * pts[:, 0]) + 1.0

    def reference(self):
        fn = lambda x: math.sin(2.0 * math.pi * self.freq * x) + 1.0
        breaks = [k / (2 * self.freq) for k in range(1, 2 * self.freq)]
        return _quad(fn, points=breaks)


@dataclass(frozen=True)
class Poly1d(Integrand):
    """Polynomial ``sum_k c_k u^k``; the default is of order 5."""

    coefficients: tuple = (0.5, 2.0, -6.0, 3.0, 4.0, -3.0)

    name = "poly"

    def _f(self, pts):
        # np.polyval wants the highest power first
        return np.polyval(np.asarray(self.coefficients[::-1], dtype=np.float64), pts[:, 0])

    def reference(self):
        return float(sum(c / (k + 1) for k, c in enumerate(self.coefficients))), 0.0


@dataclass(frozen=True)
class SumSin(Integrand):
    """``sum_d sin(2 pi u_d)``."""

    dim: int = 1

    name = "sumsin"

    def _f(self, pts):
        return np.sum(np.sin(2.0 * np.pi * pts), axis=1)

    def reference(self):
        return 0.0, 0.0


@dataclass(frozen=True)
class ExpSum(Integrand):
    """``exp(sum_d u_d)``."""

    dim: int = 1

    name = "expsum"

    def _f(self, pts):
        return np.exp(np.sum(pts, axis=1))

    def reference(self):
        value = math.expm1(1.0) ** self.dim
        return value, 1e-12 * value


@dataclass(frozen=True)
class MultiLight(Integrand):
    """A 3-D stand-in for direct lighting from ``lights`` equally likely lights.

    ``u1`` picks light ``l = floor(lights * u1)``; light ``l`` contributes
    ``(1 + a cos(2 pi (u2 - c2_l))) (1 + a cos(2 pi (u3 - c3_l)))``. Each
    factor is a raised cosine over one full period, so every light integrates
    to 1 and so does the whole integrand, whatever the light count. Centers
    follow a golden-ratio sequence, so neighbouring lights differ and the
    integrand has ``lights - 1`` jumps along ``u1``.
    """

    lights: int = 1
    amplitude: float = 0.9

    name = "multilight"
    dim = 3

    def __post_init__(self):
        if self.lights < 1:
            raise ValueError("lights must be >= 1")

    def centers(self, light):
        light = np.asarray(light)
        return (0.4 + light * _GOLDEN) % 1.0, (0.6 + light * _GOLDEN**2) % 1.0

    def label(self):
        return f"multilight-L{self.lights}"

    def light_index(self, u1):
        return np.minimum((np.asarray(u1) * self.lights).astype(np.int64), self.lights - 1)

    def _f(self, pts):
        c2, c3 = self.centers(self.light_index(pts[:, 0]))
        a = self.amplitude
        return (1.0 + a * np.cos(2.0 * np.pi * (pts[:, 1] - c2))) * (
            1.0 + a * np.cos(2.0 * np.pi * (pts[:, 2] - c3))
        )

    def reference(self):
        # Each light is separable in (u2, u3) and selected with probability 1/L.
        a = self.amplitude
        total, err = 0.0, 0.0
        for light in range(self.lights):
            c2, c3 = self.centers(light)
            i2, e2 = _quad(lambda x: 1.0 + a * math.cos(2.0 * math.pi * (x - c2)))
            i3, e3 = _quad(lambda x: 1.0 + a * math.cos(2.0 * math.pi * (x - c3)))
            total += i2 * i3
            err += abs(i2) * e3 + abs(i3) * e2
        return total / self.lights, err / self.lights


@dataclass(frozen=True)
class MisToy(Integrand):
    """``f(x) = x^2`` on ``[0,1]``, the target of the two-technique MIS toy."""

    name = "mistoy"

    def _f(self, pts):
        return pts[:, 0] ** 2

    def reference(self):
        return 1.0 / 3.0, 0.0


def evaluate(integrand: Integrand, u):
    return integrand(u)


def reference_integral(integrand: Integrand) -> tuple[float, float]:
    return integrand.reference()


_REGISTRY = {
    "step": Step1d,
    "gauss": ShiftedGaussian1d,
    "highfreq": HighFreq1d,
    "poly": Poly1d,
    "sumsin": SumSin,
    "expsum": ExpSum,
    "multilight": MultiLight,
    "mistoy": MisToy,
}
INTEGRAND_NAMES = tuple(_REGISTRY)
_FIXED_DIM = {"step": 1, "gauss": 1, "highfreq": 1, "poly": 1, "multilight": 3, "mistoy": 1}


def make_integrand(name: str, dim: int | None = None, **params) -> Integrand:
    """Build an integrand by name. Dimension-free integrands reject other dims."""
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown integrand {name!r}; choose from {list(_REGISTRY)}") from None
    if name in _FIXED_DIM:
        if dim is not None and dim != _FIXED_DIM[name]:
            raise DimensionMismatch(f"{name} is {_FIXED_DIM[name]}-dimensional, got dim={dim}")
        return cls(**params)
    return cls(dim=1 if dim is None else dim, **params)


def builtin_integrands() -> list[Integrand]:
    """The default suite: the 1-D set, sum-of-sines and exponential at
    D = 1, 5, 15, the multi-light integrand at 1, 8 and 64 lights, and the
    MIS toy target."""
    out: list[Integrand] = [Step1d(), ShiftedGaussian1d(), HighFreq1d(), Poly1d()]
    out += [SumSin(d) for d in (1, 5, 15)]
    out += [ExpSum(d) for d in (1, 5, 15)]
    out += [MultiLight(n) for n in (1, 8, 64)]
    out.append(MisToy())
    return out


# MIS toy: technique 0 samples x uniformly, technique 1 samples pdf 2x.


def mis_toy_pdfs(x):
    x = np.asarray(x, dtype=np.float64)
    return np.ones_like(x), 2.0 * x


def mis_toy_transform(xi, technique: int):
    """Map a primary-space number ``xi`` to ``(x, weighted_value)``.

    With the balance heuristic, ``w_t f / p_t = f / (p_0 + p_1)`` for either
    technique, which also stays finite where ``p_1(0) = 0``.
    """
    xi = np.asarray(xi, dtype=np.float64)
    if technique == 0:
        x = xi
    elif technique == 1:
        x = np.sqrt(xi)
    else:
        raise ValueError(f"technique must be 0 or 1, got {technique}")
    p0, p1 = mis_toy_pdfs(x)
    return x, x * x / (p0 + p1)


def mis_toy_sample(rng: np.random.Generator, technique: int) -> MisSample:
    xi = rng.random()
    _, value = mis_toy_transform(xi, technique)
    return MisSample(np.array([xi]), float(value), technique)


def mis_toy_batch(rng: np.random.Generator, technique: int, n: int) -> SampleBatch:
    """``n`` samples of one technique as a batch of primary-space points and weighted values."""
    xi = rng.random(n)
    _, value = mis_toy_transform(xi, technique)
    return SampleBatch(xi[:, None], value)
