"""Catalog of proximal operators, projections, and smoothed surrogates.

Descriptors name the non-smooth pieces used across the package; the
functions below evaluate their prox maps, Moreau-envelope values and
gradients, and Euclidean set distances.  Everything is stateless and pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class IndicatorPoint:
    """Indicator of the single point {b}."""

    b: float


@dataclass(frozen=True)
class IndicatorInterval:
    """Indicator of [lo, hi]; either bound may be infinite."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError("interval requires lo <= hi")


@dataclass(frozen=True)
class IndicatorHalfline:
    """Indicator of {z <= b}."""

    b: float


@dataclass(frozen=True)
class AbsValue:
    """The scaled absolute value lam * |z|."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("absolute-value weight must be non-negative")


ScalarProxDescriptor = Union[IndicatorPoint, IndicatorInterval, IndicatorHalfline, AbsValue]


@dataclass(frozen=True, eq=False)
class Box:
    """Indicator of the elementwise box [lo, hi]; bounds scalar or arrays."""

    lo: object
    hi: object


@dataclass(frozen=True)
class L1:
    """The scaled l1 norm lam * ||z||_1."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("l1 weight must be non-negative")


class ProductOfScalars:
    """A product K_1 x ... x K_m of scalar descriptors, applied elementwise."""

    _POINT, _INTERVAL, _HALFLINE, _ABS = 0, 1, 2, 3

    def __init__(self, components: Sequence[ScalarProxDescriptor]):
        components = tuple(components)
        if not components:
            raise ValueError("product needs at least one component")
        self.components = components
        m = len(components)
        codes = np.empty(m, dtype=np.int8)
        p1 = np.zeros(m)
        p2 = np.zeros(m)
        for j, c in enumerate(components):
            if isinstance(c, IndicatorPoint):
                codes[j], p1[j] = self._POINT, c.b
            elif isinstance(c, IndicatorInterval):
                codes[j], p1[j], p2[j] = self._INTERVAL, c.lo, c.hi
            elif isinstance(c, IndicatorHalfline):
                codes[j], p1[j] = self._HALFLINE, c.b
            elif isinstance(c, AbsValue):
                codes[j], p1[j] = self._ABS, c.lam
            else:
                raise TypeError(f"unknown scalar descriptor {c!r}")
        self._codes = codes
        self._p1 = p1
        self._p2 = p2
        self._all_indicator = bool(np.all(codes != self._ABS))
        self._all_idx = np.arange(m)
        self._uniform_code = int(codes[0]) if np.all(codes == codes[0]) else -1

    def __len__(self) -> int:
        return len(self.components)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"ProductOfScalars(m={len(self)})"

    def _prox_one(self, j: int, z: float, beta: float) -> float:
        code = self._codes[j]
        if code == self._POINT:
            return self._p1[j]
        if code == self._INTERVAL:
            return min(max(z, self._p1[j]), self._p2[j])
        if code == self._HALFLINE:
            return min(z, self._p1[j])
        t = beta * self._p1[j]
        if z > t:
            return z - t
        if z < -t:
            return z + t
        return 0.0

    def prox_at(self, idx: np.ndarray, z: np.ndarray, beta: float) -> np.ndarray:
        """Prox of the selected components, vectorized over idx."""
        if idx.size <= 8:
            return np.array([self._prox_one(int(j), float(zj), beta)
                             for j, zj in zip(idx, z)])
        codes = self._codes[idx]
        p1 = self._p1[idx]
        p2 = self._p2[idx]
        out = np.where(codes == self._POINT, p1, z)
        mask = codes == self._INTERVAL
        if np.any(mask):
            out = np.where(mask, np.clip(z, p1, p2), out)
        mask = codes == self._HALFLINE
        if np.any(mask):
            out = np.where(mask, np.minimum(z, p1), out)
        mask = codes == self._ABS
        if np.any(mask):
            out = np.where(mask, _soft_threshold(z, beta * p1), out)
        return out

    def prox(self, z: np.ndarray, beta: float) -> np.ndarray:
        code = self._uniform_code
        if code == self._POINT:
            return self._p1.copy()
        if code == self._INTERVAL:
            return np.clip(z, self._p1, self._p2)
        if code == self._HALFLINE:
            return np.minimum(z, self._p1)
        if code == self._ABS:
            return _soft_threshold(z, beta * self._p1)
        return self.prox_at(self._all_idx, z, beta)

    def finite_value(self, z: np.ndarray) -> float:
        """Sum of the non-indicator component values at z."""
        mask = self._codes == self._ABS
        if not np.any(mask):
            return 0.0
        return float(np.sum(self._p1[mask] * np.abs(z[mask])))

    def component_distances(self, z: np.ndarray) -> np.ndarray:
        """Per-component distance to the indicator sets (0 for AbsValue)."""
        d = np.zeros(len(self))
        codes = self._codes
        mask = codes == self._POINT
        d[mask] = np.abs(z[mask] - self._p1[mask])
        mask = codes == self._INTERVAL
        d[mask] = np.maximum(np.maximum(self._p1[mask] - z[mask], z[mask] - self._p2[mask]), 0.0)
        mask = codes == self._HALFLINE
        d[mask] = np.maximum(z[mask] - self._p1[mask], 0.0)
        return d

    @property
    def all_indicator(self) -> bool:
        return self._all_indicator


@dataclass(frozen=True, eq=False)
class IndicatorAffinePoint:
    """Indicator of the single vector {b}."""

    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64).reshape(-1))


VectorProxDescriptor = Union[Box, L1, ProductOfScalars, IndicatorAffinePoint]


def _soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise ValueError("smoothing parameter beta must be positive")
    return beta


def scalar_prox(desc: ScalarProxDescriptor, z: float, beta: float) -> float:
    """argmin_y g(y) + (y - z)^2 / (2 beta) for one scalar component."""
    beta = _check_beta(beta)
    if isinstance(desc, IndicatorPoint):
        return desc.b
    if isinstance(desc, IndicatorInterval):
        return float(min(max(z, desc.lo), desc.hi))
    if isinstance(desc, IndicatorHalfline):
        return float(min(z, desc.b))
    if isinstance(desc, AbsValue):
        return float(_soft_threshold(np.float64(z), beta * desc.lam))
    raise TypeError(f"unknown scalar descriptor {desc!r}")


def vector_prox(desc: VectorProxDescriptor, z, beta: float) -> np.ndarray:
    """Elementwise prox of a vector descriptor at z."""
    beta = _check_beta(beta)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if isinstance(desc, Box):
        return np.clip(z, desc.lo, desc.hi)
    if isinstance(desc, L1):
        return _soft_threshold(z, beta * desc.lam)
    if isinstance(desc, IndicatorAffinePoint):
        if desc.b.size != z.size:
            raise ValueError("length mismatch for affine point")
        return desc.b.copy()
    if isinstance(desc, ProductOfScalars):
        if len(desc) != z.size:
            raise ValueError("length mismatch for product descriptor")
        return desc.prox(z, beta)
    raise TypeError(f"unknown vector descriptor {desc!r}")


def smoothed_grad(desc: VectorProxDescriptor, z, beta: float) -> np.ndarray:
    """Gradient of the beta-smoothed surrogate: (z - prox(z)) / beta."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    return (z - vector_prox(desc, z, beta)) / _check_beta(beta)


def _finite_value(desc: VectorProxDescriptor, p: np.ndarray) -> float:
    if isinstance(desc, L1):
        return float(desc.lam * np.sum(np.abs(p)))
    if isinstance(desc, ProductOfScalars):
        return desc.finite_value(p)
    return 0.0


def smoothed_value(desc: VectorProxDescriptor, z, beta: float) -> float:
    """Moreau-envelope value g(prox(z)) + ||z - prox(z)||^2 / (2 beta).

    For indicators this reduces to dist(z, K)^2 / (2 beta).
    """
    beta = _check_beta(beta)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    p = vector_prox(desc, z, beta)
    r = z - p
    return _finite_value(desc, p) + float(r @ r) / (2.0 * beta)


def descriptor_is_indicator(desc: VectorProxDescriptor) -> bool:
    if isinstance(desc, (Box, IndicatorAffinePoint)):
        return True
    if isinstance(desc, ProductOfScalars):
        return desc.all_indicator
    return False


def scalar_is_indicator(desc: ScalarProxDescriptor) -> bool:
    return isinstance(desc, (IndicatorPoint, IndicatorInterval, IndicatorHalfline))


def dist_to_set(desc: VectorProxDescriptor, z) -> float:
    """Euclidean distance ||z - proj_K(z)|| for indicator descriptors."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if not descriptor_is_indicator(desc):
        raise ValueError("distance is only defined for indicator descriptors")
    if isinstance(desc, ProductOfScalars):
        return float(np.linalg.norm(desc.component_distances(z)))
    # Projection equals the prox for indicators, at any positive beta.
    return float(np.linalg.norm(z - vector_prox(desc, z, 1.0)))


def value_and_distance(desc: VectorProxDescriptor, z: np.ndarray) -> tuple[float, float]:
    """(finite part of g(z), distance of z to the indicator structure)."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if isinstance(desc, L1):
        return float(desc.lam * np.sum(np.abs(z))), 0.0
    if isinstance(desc, ProductOfScalars):
        return desc.finite_value(z), float(np.linalg.norm(desc.component_distances(z)))
    return 0.0, float(np.linalg.norm(z - vector_prox(desc, z, 1.0)))
