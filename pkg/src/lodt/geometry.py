"""Minkowski-space primitives in the agreed inertial frame (c = 1).

Points are ``(x, y, z, t)``.  The causal future ``L(X)`` includes ``X`` itself
and its lightlike boundary, so light-speed transmissions stay legal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

TOL = 1e-9
"""Tolerance for boundary comparisons on the light cone."""


class CausallyOrderedError(ValueError):
    """Raised when two points expected to be spacelike are causally ordered.

    ``later`` holds the point that lies in the other's future cone, which is
    then the earliest point of the cone intersection.
    """

    def __init__(self, message: str, later: "SpacetimePoint"):
        super().__init__(message)
        self.later = later


@dataclass(frozen=True)
class SpacetimePoint:
    x: float
    y: float
    z: float
    t: float

    def __post_init__(self):
        for name in ("x", "y", "z", "t"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"coordinate {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def spatial(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z, self.t]

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> "SpacetimePoint":
        if len(coords) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(coords)}")
        return cls(*coords)

    def isclose(self, other: "SpacetimePoint", tol: float = TOL) -> bool:
        return all(abs(a - b) <= tol for a, b in zip(self.as_list(), other.as_list()))

    def __str__(self):
        return "(" + ", ".join(f"{c:g}" for c in self.as_list()) + ")"


ORIGIN = SpacetimePoint(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Direction:
    """Unit spatial 3-vector along which a channel carries a subsystem."""

    vector: tuple[float, float, float]

    def __post_init__(self):
        vec = tuple(float(c) for c in self.vector)
        if len(vec) != 3:
            raise ValueError("a direction has exactly 3 components")
        norm = math.sqrt(sum(c * c for c in vec))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must have unit norm, got {norm!r}")
        object.__setattr__(self, "vector", vec)

    @classmethod
    def normalized(cls, x: float, y: float, z: float) -> "Direction":
        norm = math.sqrt(x * x + y * y + z * z)
        if norm == 0:
            raise ValueError("zero vector has no direction")
        return cls((x / norm, y / norm, z / norm))


DEFAULT_DIRECTIONS = (Direction((-1.0, 0.0, 0.0)), Direction((1.0, 0.0, 0.0)))


@dataclass(frozen=True)
class GeometryConfig:
    """Transfer time ``T`` and the two channel directions ``(v_0, v_1)``.

    The protocol starts at the origin ``P``; the transfer points are
    ``Q_j = P + T * (v_j, 1)`` and must be spacelike separated.
    """

    T: float = 1.0
    directions: tuple[Direction, Direction] = DEFAULT_DIRECTIONS

    def __post_init__(self):
        T = float(self.T)
        if not math.isfinite(T) or T <= 0:
            raise ValueError(f"T must be positive and finite, got {self.T!r}")
        object.__setattr__(self, "T", T)
        dirs = tuple(d if isinstance(d, Direction) else Direction(tuple(d)) for d in self.directions)
        if len(dirs) != 2:
            raise ValueError("exactly two directions are supported")
        object.__setattr__(self, "directions", dirs)
        q0, q1 = self.q_point(0), self.q_point(1)
        if causally_precedes(q0, q1) or causally_precedes(q1, q0):
            raise ValueError(f"Q_0={q0} and Q_1={q1} must be spacelike separated")

    @property
    def origin(self) -> SpacetimePoint:
        return ORIGIN

    def q_point(self, j: int) -> SpacetimePoint:
        return line_point(j, self.T, self)

    def y_point(self) -> SpacetimePoint:
        """Earliest point at which both transfer points' futures meet."""
        return cone_intersection_earliest(self.q_point(0), self.q_point(1))

    def to_json(self) -> dict:
        return {"T": self.T, "directions": [list(d.vector) for d in self.directions]}

    @classmethod
    def from_json(cls, doc: dict) -> "GeometryConfig":
        return cls(T=doc["T"], directions=tuple(Direction(tuple(v)) for v in doc["directions"]))


def _spatial_distance(p: SpacetimePoint, q: SpacetimePoint) -> float:
    return math.sqrt((q.x - p.x) ** 2 + (q.y - p.y) ** 2 + (q.z - p.z) ** 2)


def interval2(p: SpacetimePoint, q: SpacetimePoint) -> float:
    """Squared Minkowski interval, positive for timelike separation."""
    dt = q.t - p.t
    return dt * dt - ((q.x - p.x) ** 2 + (q.y - p.y) ** 2 + (q.z - p.z) ** 2)


def causally_precedes(p: SpacetimePoint, q: SpacetimePoint, tol: float = TOL) -> bool:
    """True iff ``q`` lies in ``L(p)``, boundary inclusive.

    The cone test is done on ``dt - |dx|`` rather than on the squared interval
    so the tolerance does not scale with the distance from ``p``.
    """
    dt = q.t - p.t
    if dt < -tol:
        return False
    return dt - _spatial_distance(p, q) >= -tol


def spacelike(p: SpacetimePoint, q: SpacetimePoint, tol: float = TOL) -> bool:
    return not causally_precedes(p, q, tol) and not causally_precedes(q, p, tol)


def line_point(j: int, t: float, cfg: GeometryConfig) -> SpacetimePoint:
    """Point at time ``t`` on the light ray from ``P`` along direction ``v_j``."""
    if j not in (0, 1):
        raise ValueError(f"line index must be 0 or 1, got {j!r}")
    if t < 0:
        raise ValueError(f"line parameter must be nonnegative, got {t!r}")
    vx, vy, vz = cfg.directions[j].vector
    p = cfg.origin
    return SpacetimePoint(p.x + t * vx, p.y + t * vy, p.z + t * vz, p.t + t)


def cone_intersection_earliest(q0: SpacetimePoint, q1: SpacetimePoint) -> SpacetimePoint:
    """Earliest point of ``L(q0) ∩ L(q1)`` for spacelike ``q0``, ``q1``.

    The minimiser sits on the spatial segment between the two points, where
    both cone boundaries meet: ``r0 + r1 = D`` and ``t = t0 + r0 = t1 + r1``.
    """
    if q0.isclose(q1):
        return q0
    if causally_precedes(q0, q1):
        raise CausallyOrderedError(f"{q1} lies in the future cone of {q0}", later=q1)
    if causally_precedes(q1, q0):
        raise CausallyOrderedError(f"{q0} lies in the future cone of {q1}", later=q0)
    dist = _spatial_distance(q0, q1)
    r0 = 0.5 * (dist + q1.t - q0.t)
    s = r0 / dist
    return SpacetimePoint(
        q0.x + s * (q1.x - q0.x),
        q0.y + s * (q1.y - q0.y),
        q0.z + s * (q1.z - q0.z),
        q0.t + r0,
    )


def in_all_futures(q: SpacetimePoint, sources: Iterable[SpacetimePoint], tol: float = TOL) -> bool:
    return all(causally_precedes(s, q, tol) for s in sources)
