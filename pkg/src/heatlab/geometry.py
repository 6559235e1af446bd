"""Multicone domains: openings, truncated cones, a ball-union core.

Every opening, planar arc or polar cap, is stored the same way: a unit axis
and a half-angle. A direction lies in the opening when its angle to the axis
is below the half-angle. The same representation serves the analytic code and
the numba simulator; see :meth:`MulticoneDomain.packed`.

Points are ``numpy`` arrays of length ``n`` (2 or 3). Queries are read-only.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

__all__ = [
    "Opening",
    "TruncatedCone",
    "Ball",
    "MulticoneDomain",
    "PointLocation",
    "Tag",
    "DEFAULT_TOL",
    "validate",
    "classify",
    "distance_to_boundary",
    "angle_to_axis",
    "lateral_distance",
    "domain_from_dict",
    "domain_to_dict",
    "load_domain",
]

DEFAULT_TOL = 1e-9


def _unit(v: Sequence[float]) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return a / np.linalg.norm(a)


@dataclass(frozen=True)
class Opening:
    """Cross-section of a cone on the unit sphere.

    Build with :meth:`arc` (n = 2) or :meth:`cap` (n = 3).
    """

    dim: int
    theta_a: float = 0.0  # arc start, n = 2 only
    theta_b: float = 0.0  # arc end, n = 2 only
    colatitude: float = 0.0  # cap half-angle, n = 3 only
    cap_axis: tuple[float, ...] = (0.0, 0.0, 1.0)

    @classmethod
    def arc(cls, theta_a: float, theta_b: float) -> "Opening":
        return cls(dim=2, theta_a=float(theta_a), theta_b=float(theta_b))

    @classmethod
    def cap(cls, colatitude: float, axis: Sequence[float] = (0.0, 0.0, 1.0)) -> "Opening":
        return cls(dim=3, colatitude=float(colatitude), cap_axis=tuple(float(c) for c in axis))

    def problems(self) -> list[str]:
        out = []
        if self.dim == 2:
            length = self.theta_b - self.theta_a
            if not (0.0 < length < 2.0 * math.pi):
                out.append(f"arc length {length!r} must lie in (0, 2*pi)")
        elif self.dim == 3:
            if not (0.0 < self.colatitude < math.pi):
                out.append(f"cap colatitude {self.colatitude!r} must lie in (0, pi)")
            if len(self.cap_axis) != 3:
                out.append("cap axis must have 3 components")
            elif abs(math.sqrt(sum(c * c for c in self.cap_axis)) - 1.0) > 1e-12:
                out.append("cap axis must have unit norm")
        else:
            out.append(f"dimension {self.dim} not supported (2 or 3)")
        return out

    @property
    def half_angle(self) -> float:
        if self.dim == 2:
            return 0.5 * (self.theta_b - self.theta_a)
        return self.colatitude

    @property
    def axis(self) -> np.ndarray:
        if self.dim == 2:
            mid = 0.5 * (self.theta_a + self.theta_b)
            return np.array([math.cos(mid), math.sin(mid)])
        return np.asarray(self.cap_axis, dtype=float)

    @property
    def length(self) -> float:
        """Arc length (n = 2) or surface area of the cap (n = 3)."""
        if self.dim == 2:
            return self.theta_b - self.theta_a
        return 2.0 * math.pi * (1.0 - math.cos(self.colatitude))

    def contains_direction(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return angle_to_axis(u, self.axis) < self.half_angle + tol


@dataclass(frozen=True)
class TruncatedCone:
    """``C(a, D, R) = {a + r u : r > R, u in D}``. ``R = 0`` is a cone with vertex."""

    vertex: tuple[float, ...]
    opening: Opening
    truncation_radius: float = 1.0

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.vertex, dtype=float)

    def contains(self, x: np.ndarray) -> bool:
        rel = np.asarray(x, dtype=float) - self.a
        r = float(np.linalg.norm(rel))
        if r <= self.truncation_radius or r == 0.0:
            return False
        return angle_to_axis(rel, self.opening.axis) < self.opening.half_angle


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


class Tag(Enum):
    CORE = "core"
    BRANCH = "branch"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class PointLocation:
    tag: Tag
    branch: int | None = None
    distance: float = 0.0  # lower bound on dist(x, boundary)

    def __str__(self) -> str:
        if self.tag is Tag.BRANCH:
            return f"Branch({self.branch})"
        return self.tag.value.capitalize()


@dataclass(frozen=True)
class MulticoneDomain:
    """Core (finite union of open balls) plus disjoint truncated-cone branches.

    An empty core is allowed only for a single bare branch, i.e. the domain is
    one truncated cone (or one cone with vertex when ``R = 0``); then the base
    is part of the boundary.
    """

    dim: int
    core: tuple[Ball, ...] = ()
    branches: tuple[TruncatedCone, ...] = ()
    tol: float = DEFAULT_TOL
    _extended: tuple[bool, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        ext = tuple(self._covers_cap(b) for b in self.branches)
        object.__setattr__(self, "_extended", ext)

    @classmethod
    def single_cone(cls, opening: Opening, truncation_radius: float = 0.0,
                    vertex: Sequence[float] | None = None) -> "MulticoneDomain":
        """Bare cone (``R = 0``) or bare truncated cone as a domain."""
        v = tuple(vertex) if vertex is not None else (0.0,) * opening.dim
        return cls(dim=opening.dim, branches=(TruncatedCone(v, opening, truncation_radius),))

    def _covers_cap(self, b: TruncatedCone) -> bool:
        # V ∩ B(a, R) inside one core ball => the whole vertex cone lies in the domain
        for ball in self.core:
            if np.linalg.norm(b.a - ball.c) + b.truncation_radius <= ball.radius + self.tol:
                return True
        return False

    @property
    def extended(self) -> tuple[bool, ...]:
        """Per branch: is the full vertex cone ``C(a_j, D_j, 0)`` contained in the domain."""
        return self._extended

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def packed(self) -> dict[str, np.ndarray]:
        """Flat arrays consumed by the compiled simulator."""
        n = self.dim
        nb = len(self.branches)
        core_c = np.array([b.c for b in self.core], dtype=float).reshape(len(self.core), n)
        core_r = np.array([b.radius for b in self.core], dtype=float)
        br_a = np.array([b.a for b in self.branches], dtype=float).reshape(nb, n)
        br_axis = np.array([b.opening.axis for b in self.branches], dtype=float).reshape(nb, n)
        br_h = np.array([b.opening.half_angle for b in self.branches], dtype=float)
        br_R = np.array([b.truncation_radius for b in self.branches], dtype=float)
        br_ext = np.array(self.extended, dtype=np.bool_)
        return dict(core_c=core_c, core_r=core_r, br_a=br_a, br_axis=br_axis,
                    br_h=br_h, br_R=br_R, br_ext=br_ext)

    def digest(self) -> str:
        blob = json.dumps(domain_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def angle_to_axis(u: np.ndarray, axis: np.ndarray) -> float:
    """Unsigned angle between ``u`` and ``axis``; stable near 0 and pi."""
    u = np.asarray(u, dtype=float)
    dot = float(np.dot(u, axis))
    if u.shape[0] == 2:
        cross = abs(u[0] * axis[1] - u[1] * axis[0])
    else:
        cross = float(np.linalg.norm(np.cross(u, axis)))
    return math.atan2(cross, dot)


def lateral_distance(r: float, angular_gap: float) -> float:
    """Distance from a point at radius ``r`` to a ray at angular separation ``angular_gap``."""
    if angular_gap >= 0.5 * math.pi:
        return r
    return r * math.sin(angular_gap)


def _branch_geometry(b: TruncatedCone, x: np.ndarray) -> tuple[float, float]:
    rel = x - b.a
    r = float(np.linalg.norm(rel))
    if r == 0.0:
        return 0.0, math.pi
    return r, angle_to_axis(rel, b.opening.axis)


def classify(domain: MulticoneDomain, x: Sequence[float]) -> PointLocation:
    """Locate ``x``; branches are tested before the core.

    >>> d = MulticoneDomain(2, core=(Ball((0.0, 0.0), 1.0),),
    ...     branches=(TruncatedCone((0.0, 0.0), Opening.arc(-math.pi / 4, math.pi / 4), 1.0),))
    >>> str(classify(d, (2.0, 0.0))), str(classify(d, (0.5, 0.0))), str(classify(d, (0.0, 3.0)))
    ('Branch(0)', 'Core', 'Outside')
    """
    x = np.asarray(x, dtype=float)
    best = -1.0
    tag: Tag = Tag.OUTSIDE
    which: int | None = None
    for j, b in enumerate(domain.branches):
        r, psi = _branch_geometry(b, x)
        h = b.opening.half_angle
        if r == 0.0 or psi >= h:
            continue
        lat = lateral_distance(r, h - psi)
        if r > b.truncation_radius:
            d = min(lat, r - b.truncation_radius) if b.truncation_radius > 0 else lat
            if tag is not Tag.BRANCH:
                tag, which = Tag.BRANCH, j
            best = max(best, d)
        if domain.extended[j]:
            best = max(best, lat)
            if tag is Tag.OUTSIDE:
                tag = Tag.CORE  # on an interface sphere, inside the glued domain
    for ball in domain.core:
        d = ball.radius - float(np.linalg.norm(x - ball.c))
        if d > 0.0:
            best = max(best, d)
            if tag is Tag.OUTSIDE:
                tag = Tag.CORE
    if tag is Tag.OUTSIDE:
        return PointLocation(Tag.OUTSIDE, None, 0.0)
    return PointLocation(tag, which, max(best, 0.0))


def distance_to_boundary(domain: MulticoneDomain, x: Sequence[float]) -> float:
    """Lower bound on the Euclidean distance from ``x`` to the domain boundary.

    Inside branch ``j`` of a bare truncated cone this is ``min(r sin(phi), r - R)``
    with ``phi`` the angular distance to the edge of the opening. Interfaces
    between core and branches are not boundary: when a core ball swallows the
    truncated tip of a branch, the lateral distance of the full vertex cone is
    used instead.
    """
    loc = classify(domain, x)
    if loc.tag is Tag.OUTSIDE:
        raise ValueError(f"point {list(map(float, x))} lies outside the domain")
    return loc.distance


# ---------------------------------------------------------------- validation


def _sample_directions(op: Opening, count: int, rng: np.random.Generator,
                       include_edges: bool = True) -> np.ndarray:
    if op.dim == 2:
        th = np.linspace(op.theta_a, op.theta_b, count)
        if not include_edges:
            th = th[1:-1]
        return np.column_stack([np.cos(th), np.sin(th)])
    # cap: random directions within the colatitude, plus the rim
    axis = op.axis
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = _unit(np.cross(axis, helper))
    e2 = np.cross(axis, e1)
    cosmin = math.cos(op.colatitude)
    c = rng.uniform(cosmin, 1.0, count)
    phi = rng.uniform(0.0, 2.0 * math.pi, count)
    if include_edges:
        c[: count // 4] = cosmin
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    return c[:, None] * axis + (s * np.cos(phi))[:, None] * e1 + (s * np.sin(phi))[:, None] * e2


def _in_any_branch(domain: MulticoneDomain, x: np.ndarray, skip: int | None = None) -> int | None:
    for j, b in enumerate(domain.branches):
        if j != skip and b.contains(x):
            return j
    return None


def validate(domain: MulticoneDomain, samples: int = 100_000, seed: int = 0) -> list[str]:
    """Every violated domain invariant, as readable strings. Empty means valid.

    Disjointness of branches uses an exact arc-overlap test for branches sharing
    a vertex and rejection sampling (``samples`` points) otherwise.
    """
    rng = np.random.default_rng(seed)
    out: list[str] = []
    tol = domain.tol
    if domain.dim not in (2, 3):
        return [f"dimension {domain.dim} not supported (2 or 3)"]
    if not domain.branches:
        out.append("domain needs at least one branch")
    for i, ball in enumerate(domain.core):
        if len(ball.center) != domain.dim:
            out.append(f"core ball {i}: center has wrong dimension")
        if not ball.radius > 0:
            out.append(f"core ball {i}: radius must be positive")
    for j, b in enumerate(domain.branches):
        if b.opening.dim != domain.dim or len(b.vertex) != domain.dim:
            out.append(f"branch {j}: dimension mismatch")
            continue
        out.extend(f"branch {j}: {p}" for p in b.opening.problems())
        if domain.core and not b.truncation_radius > 0:
            out.append(f"branch {j}: truncation radius must be positive")
        elif b.truncation_radius < 0:
            out.append(f"branch {j}: truncation radius must be nonnegative")
    if out:
        return out

    if not domain.core and len(domain.branches) > 1:
        out.append("a domain without core must consist of a single branch")

    # branches pairwise disjoint
    nb = len(domain.branches)
    for i in range(nb):
        for j in range(i + 1, nb):
            bi, bj = domain.branches[i], domain.branches[j]
            if np.allclose(bi.a, bj.a, atol=tol):
                gap = angle_to_axis(bi.opening.axis, bj.opening.axis)
                if gap < bi.opening.half_angle + bj.opening.half_angle - tol:
                    out.append(f"branches {i} and {j} intersect")
            elif _sampled_overlap(bi, bj, samples, rng):
                out.append(f"branches {i} and {j} intersect")

    # bases lie on the closure of the core, core and branches disjoint
    if domain.core:
        for j, b in enumerate(domain.branches):
            dirs = _sample_directions(b.opening, 257, rng)
            pts = b.a + b.truncation_radius * dirs
            gaps = np.full(len(pts), np.inf)
            for ball in domain.core:
                gaps = np.minimum(gaps, np.linalg.norm(pts - ball.c, axis=1) - ball.radius)
            if np.max(gaps) > tol:
                out.append(f"branch {j}: base is not on the boundary of the core "
                           f"(max gap {float(np.max(gaps)):.3g})")
            for k, ball in enumerate(domain.core):
                if _ball_meets_branch(ball, b, tol, samples, rng):
                    out.append(f"core ball {k} intersects branch {j}")
    return out


def _sampled_overlap(bi: TruncatedCone, bj: TruncatedCone, samples: int,
                     rng: np.random.Generator) -> bool:
    # sample a bounding shell around both vertices
    n = bi.a.shape[0]
    span = float(np.linalg.norm(bi.a - bj.a)) + bi.truncation_radius + bj.truncation_radius
    radius = 4.0 * max(span, 1.0)
    center = 0.5 * (bi.a + bj.a)
    pts = center + rng.uniform(-radius, radius, size=(samples, n))
    return bool(np.any(_contains_many(bi, pts) & _contains_many(bj, pts)))


def _ball_meets_branch(ball: Ball, b: TruncatedCone, tol: float, samples: int,
                       rng: np.random.Generator) -> bool:
    if np.allclose(ball.c, b.a, atol=tol):
        return ball.radius > b.truncation_radius + tol
    n = b.a.shape[0]
    g = rng.normal(size=(min(samples, 20_000), n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = ball.radius * (1.0 - 1e-6) * rng.uniform(0.0, 1.0, len(g)) ** (1.0 / n)
    pts = ball.c + g * rad[:, None]
    return bool(np.any(_contains_many(b, pts)))


def _contains_many(b: TruncatedCone, pts: np.ndarray) -> np.ndarray:
    rel = pts - b.a
    r = np.linalg.norm(rel, axis=1)
    axis = b.opening.axis
    dot = rel @ axis
    if rel.shape[1] == 2:
        cross = np.abs(rel[:, 0] * axis[1] - rel[:, 1] * axis[0])
    else:
        cross = np.linalg.norm(np.cross(rel, axis), axis=1)
    psi = np.arctan2(cross, dot)
    return (r > b.truncation_radius) & (r > 0) & (psi < b.opening.half_angle)


# ------------------------------------------------------------------ JSON I/O

_TOP_KEYS = {"dimension", "core", "branches", "tolerance"}
_BRANCH_KEYS = {"vertex", "opening", "truncation_radius"}
_OPENING_KEYS = {"type", "params", "axis"}
_BALL_KEYS = {"center", "radius"}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown keys in {where}: {sorted(extra)}")


def domain_from_dict(doc: dict) -> MulticoneDomain:
    """Build a domain from its JSON description; unknown keys are rejected.

    ``{"dimension": 2, "core": [{"center": [0, 0], "radius": 1}],
    "branches": [{"vertex": [0, 0], "opening": {"type": "arc", "params": [a, b]},
    "truncation_radius": 1}]}``. A cap opening uses ``params: [colatitude]`` and
    an optional ``axis``.
    """
    if not isinstance(doc, dict):
        raise ValueError("domain description must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "domain")
    try:
        dim = int(doc["dimension"])
    except KeyError as exc:
        raise ValueError("domain is missing 'dimension'") from exc
    core = []
    for i, ball in enumerate(doc.get("core", [])):
        _reject_unknown(ball, _BALL_KEYS, f"core[{i}]")
        core.append(Ball(tuple(float(c) for c in ball["center"]), float(ball["radius"])))
    branches = []
    for j, br in enumerate(doc.get("branches", [])):
        _reject_unknown(br, _BRANCH_KEYS, f"branches[{j}]")
        op = br["opening"]
        _reject_unknown(op, _OPENING_KEYS, f"branches[{j}].opening")
        params = [float(p) for p in op["params"]]
        if op["type"] == "arc":
            if len(params) != 2:
                raise ValueError(f"branches[{j}]: arc needs two angles")
            opening = Opening.arc(*params)
        elif op["type"] == "cap":
            if len(params) != 1:
                raise ValueError(f"branches[{j}]: cap needs one colatitude")
            opening = Opening.cap(params[0], op.get("axis", (0.0, 0.0, 1.0)))
        else:
            raise ValueError(f"branches[{j}]: unknown opening type {op['type']!r}")
        branches.append(TruncatedCone(tuple(float(c) for c in br["vertex"]), opening,
                                      float(br.get("truncation_radius", 1.0))))
    return MulticoneDomain(dim=dim, core=tuple(core), branches=tuple(branches),
                           tol=float(doc.get("tolerance", DEFAULT_TOL)))


def domain_to_dict(domain: MulticoneDomain) -> dict:
    branches = []
    for b in domain.branches:
        if b.opening.dim == 2:
            op = {"type": "arc", "params": [b.opening.theta_a, b.opening.theta_b]}
        else:
            op = {"type": "cap", "params": [b.opening.colatitude], "axis": list(b.opening.cap_axis)}
        branches.append({"vertex": list(b.vertex), "opening": op,
                         "truncation_radius": b.truncation_radius})
    return {"dimension": domain.dim,
            "core": [{"center": list(c.center), "radius": c.radius} for c in domain.core],
            "branches": branches}


def load_domain(path: str) -> MulticoneDomain:
    with open(path, encoding="utf-8") as fh:
        return domain_from_dict(json.load(fh))
