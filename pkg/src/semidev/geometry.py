"""Closed convex sets with exact Euclidean projections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _vec(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: set has dimension {dim}, point has {x.shape[-1]}")
    return x


class ConvexSet:
    dim: int

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = _vec(x, self.dim)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Points of the set, spread over it when it is bounded."""
        raw = rng.normal(size=(n, self.dim)) * 3.0
        return np.array([self.project(r) for r in raw])


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    dim: int = 1

    def project(self, x):
        return _vec(x, self.dim).copy()

    def contains(self, x, tol=1e-10):
        return bool(np.all(np.isfinite(_vec(x, self.dim))))


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("empty box: lower must not exceed upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def project(self, x):
        return np.minimum(np.maximum(_vec(x, self.dim), self.lower), self.upper)

    def contains(self, x, tol=1e-10):
        x = _vec(x, self.dim)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng, n):
        lo = np.where(np.isfinite(self.lower), self.lower, np.minimum(self.upper, 0.0) - 3.0)
        hi = np.where(np.isfinite(self.upper), self.upper, np.maximum(self.lower, 0.0) + 3.0)
        return rng.uniform(lo, hi, size=(n, self.dim))


@dataclass(frozen=True)
class Interval(ConvexSet):
    """The segment [a, b] on the real line; endpoints may be infinite."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a <= self.b:
            raise ValueError(f"empty interval: a={self.a} exceeds b={self.b}")

    @property
    def dim(self):
        return 1

    def project(self, x):
        return np.minimum(np.maximum(_vec(x, 1), self.a), self.b)

    def contains(self, x, tol=1e-10):
        v = float(_vec(x, 1)[0])
        return self.a - tol <= v <= self.b + tol

    def sample(self, rng, n):
        lo = self.a if math.isfinite(self.a) else min(self.b, 0.0) - 3.0
        hi = self.b if math.isfinite(self.b) else max(self.a, 0.0) + 3.0
        return rng.uniform(lo, hi, size=(n, 1))


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        x = _vec(x, self.dim)
        d = x - self.center
        r = np.linalg.norm(d)
        if r <= self.radius:
            return x.copy()
        return self.center + d * (self.radius / r)

    def contains(self, x, tol=1e-10):
        return bool(np.linalg.norm(_vec(x, self.dim) - self.center) <= self.radius + tol)

    def sample(self, rng, n):
        d = rng.normal(size=(n, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.dim)
        return self.center + d * r


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """{z : <normal, z> <= offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.normal, dtype=float))
        if not np.any(a != 0):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)

    @property
    def dim(self):
        return self.normal.size

    def project(self, x):
        x = _vec(x, self.dim)
        excess = float(self.normal @ x) - self.offset
        if excess <= 0:
            return x.copy()
        return x - (excess / float(self.normal @ self.normal)) * self.normal

    def contains(self, x, tol=1e-10):
        return float(self.normal @ _vec(x, self.dim)) <= self.offset + tol * np.linalg.norm(self.normal)


@dataclass(frozen=True)
class Simplex(ConvexSet):
    """The probability simplex {z >= 0, sum z = 1}."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("simplex dimension must be positive")

    def project(self, x):
        x = _vec(x, self.dim)
        # sort-and-threshold
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - 1.0
        k = np.arange(1, self.dim + 1)
        rho = np.flatnonzero(u - css / k > 0)[-1]
        theta = css[rho] / (rho + 1)
        return np.maximum(x - theta, 0.0)

    def contains(self, x, tol=1e-10):
        x = _vec(x, self.dim)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol * self.dim)

    def sample(self, rng, n):
        return rng.dirichlet(np.ones(self.dim), size=n)


def project(feasible: ConvexSet, x) -> np.ndarray:
    return feasible.project(x)


def build(spec: dict) -> ConvexSet:
    """Construct a set from ``{"kind": ..., ...}`` as found in experiment configs."""
    kind = spec.get("kind")
    if kind == "whole_space":
        return WholeSpace(int(spec.get("dim", 1)))
    if kind == "interval":
        return Interval(float(spec["a"]), float(spec["b"]))
    if kind == "box":
        return Box(spec["lower"], spec["upper"])
    if kind == "ball":
        return Ball(spec["center"], float(spec["radius"]))
    if kind == "halfspace":
        return Halfspace(spec["normal"], float(spec["offset"]))
    if kind == "simplex":
        return Simplex(int(spec["dim"]))
    raise ValueError(f"unknown set kind {kind!r}")
