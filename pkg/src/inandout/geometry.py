"""Convex-body zoo behind a membership oracle.

Every body carries the well-defined-oracle data: a center ``x0``, the
guarantee ``B_1(x0) ⊆ K ⊆ B_D(x0)`` and a dimension ``d``. Constructors
reject shapes whose inscribed ball around the center has radius below 1.

Membership is the only query the samplers use. Distances, blowup membership
and exact uniform sampling exist for tests and diagnostics.
"""
from __future__ import annotations

import logging
import math
import re
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .errors import ParameterError, UnsupportedOperation

logger = logging.getLogger(__name__)

__all__ = [
    "ConvexBody", "Ball", "Box", "Simplex", "Polytope", "Ellipsoid",
    "CountingOracle", "contains", "distance_to_body", "blowup_contains",
    "exact_uniform_sample", "parse_body", "body_from_config", "load_polytope",
]

# inscribed-radius slack for float round-off in constructors
_RADIUS_SLACK = 1e-9


def _as_points(x, d: int):
    """Return ``(array of shape (n, d), was_single)``; reject wrong dimension."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    arr2 = np.atleast_2d(arr) if arr.ndim else arr.reshape(1, 1)
    if arr2.ndim != 2 or arr2.shape[1] != d:
        raise ParameterError(f"expected point(s) of dimension {d}, got shape {arr.shape}")
    return arr2, single


def _unit_ball_points(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform points in the unit ball: normalized Gaussian direction times U^(1/d)."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / d)
    return g * r[:, None]


def _log_unit_ball_volume(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0)


class ConvexBody:
    """Base class. Subclasses implement the ``_contains``/``_distance`` kernels."""

    kind: str = "abstract"

    def __init__(self, d: int, center, D: float,
                 exact_volume: Optional[float] = None,
                 exact_cov_opnorm: Optional[float] = None):
        if d < 1:
            raise ParameterError("dimension must be >= 1")
        if D < 1.0 - _RADIUS_SLACK:
            raise ParameterError(f"circumradius D={D} < 1")
        if exact_volume is not None and not exact_volume > 0:
            raise ParameterError("volume must be positive")
        self.d = int(d)
        self.center = np.asarray(center, dtype=float).reshape(self.d)
        self.center.setflags(write=False)
        self.D = float(D)
        self.exact_volume = exact_volume
        self.exact_cov_opnorm = exact_cov_opnorm

    def contains(self, x):
        pts, single = _as_points(x, self.d)
        out = self._contains(pts)
        return bool(out[0]) if single else out

    def distance(self, x):
        pts, single = _as_points(x, self.d)
        out = self._distance(pts)
        return float(out[0]) if single else out

    def blowup_contains(self, x, delta: float):
        if delta < 0:
            raise ParameterError("blowup radius must be >= 0")
        dist = self.distance(x)
        return dist <= delta

    def sample_uniform(self, rng: np.random.Generator, size: Optional[int] = None):
        n = 1 if size is None else int(size)
        pts = self._sample(rng, n)
        return pts[0] if size is None else pts

    def _contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _distance(self, pts: np.ndarray) -> np.ndarray:
        raise UnsupportedOperation(f"distance is not available for {self.kind}")

    def _sample(self, rng, n):
        raise UnsupportedOperation(f"exact uniform sampling is not available for {self.kind}")

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, D={self.D:.4g})"


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, d: int, radius: float = 1.0, center=None):
        if radius < 1.0 - _RADIUS_SLACK:
            raise ParameterError(f"ball radius {radius} < 1 violates B_1(x0) ⊆ K")
        self.radius = float(radius)
        c = np.zeros(d) if center is None else center
        vol = math.exp(_log_unit_ball_volume(d) + d * math.log(radius))
        super().__init__(d, c, radius, exact_volume=vol,
                         exact_cov_opnorm=radius ** 2 / (d + 2))

    def _contains(self, pts):
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius

    def _distance(self, pts):
        return np.maximum(np.linalg.norm(pts - self.center, axis=1) - self.radius, 0.0)

    def _sample(self, rng, n):
        return self.center + self.radius * _unit_ball_points(rng, n, self.d)


class Box(ConvexBody):
    """Axis-aligned box ``[a, b]`` (bounds may be scalars or per-coordinate)."""

    kind = "box"

    def __init__(self, d: int, a=-1.0, b=1.0):
        lo = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
        hi = np.broadcast_to(np.asarray(b, dtype=float), (d,)).copy()
        half = 0.5 * (hi - lo)
        if np.any(half < 1.0 - _RADIUS_SLACK):
            raise ParameterError("every box side must have length >= 2")
        self.lo, self.hi = lo, hi
        super().__init__(d, 0.5 * (lo + hi), float(np.linalg.norm(half)),
                         exact_volume=float(np.prod(hi - lo)),
                         exact_cov_opnorm=float(np.max((hi - lo) ** 2) / 12.0))

    def _contains(self, pts):
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def _distance(self, pts):
        return np.linalg.norm(pts - np.clip(pts, self.lo, self.hi), axis=1)

    def _sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, self.d))


class Simplex(ConvexBody):
    """Scaled standard simplex ``{x >= 0, sum(x) <= s}``.

    The inradius of the standard simplex is ``1/(d + sqrt(d))``, so the
    default scale ``s = d + sqrt(d)`` is the smallest one admitting a unit
    inscribed ball (centered at the all-ones vector).
    """

    kind = "simplex"

    def __init__(self, d: int, scale: Optional[float] = None):
        smin = d + math.sqrt(d)
        s = smin if scale is None else float(scale)
        if s < smin * (1 - _RADIUS_SLACK):
            raise ParameterError(f"simplex scale {s} < d + sqrt(d) = {smin}")
        self.scale = s
        r = s / smin
        c = np.full(d, r)
        far = math.sqrt((s - r) ** 2 + (d - 1) * r * r)
        D = max(r * math.sqrt(d), far)
        vol = math.exp(d * math.log(s) - math.lgamma(d + 1))
        super().__init__(d, c, D, exact_volume=vol,
                         exact_cov_opnorm=s * s / ((d + 1) * (d + 2)))

    def _contains(self, pts):
        return np.all(pts >= 0, axis=1) & (pts.sum(axis=1) <= self.scale)

    def _project(self, pts):
        y = np.maximum(pts, 0.0)
        over = y.sum(axis=1) > self.scale
        if np.any(over):
            # projection onto {x >= 0, sum x = s} by the sort-and-threshold rule
            v = pts[over]
            u = -np.sort(-v, axis=1)
            css = np.cumsum(u, axis=1) - self.scale
            j = np.arange(1, self.d + 1)
            rho = np.count_nonzero(u - css / j > 0, axis=1)
            theta = css[np.arange(len(v)), rho - 1] / rho
            y[over] = np.maximum(v - theta[:, None], 0.0)
        return y

    def _distance(self, pts):
        dist = np.linalg.norm(pts - self._project(pts), axis=1)
        dist[self._contains(pts)] = 0.0
        return dist

    def _sample(self, rng, n):
        e = rng.standard_exponential((n, self.d + 1))
        return self.scale * e[:, :-1] / e.sum(axis=1, keepdims=True)


class Ellipsoid(ConvexBody):
    """Ellipsoid stored by principal axes: ``x = c + R z`` with ``sum (z_i/a_i)^2 <= 1``."""

    kind = "ellipsoid"

    def __init__(self, semi_axes, center=None, axes=None):
        a = np.asarray(semi_axes, dtype=float).ravel()
        d = a.size
        if np.any(a < 1.0 - _RADIUS_SLACK):
            raise ParameterError("every semi-axis must be >= 1")
        if axes is None:
            R = np.eye(d)
        else:
            R = np.asarray(axes, dtype=float)
            if R.shape != (d, d) or not np.allclose(R.T @ R, np.eye(d), atol=1e-10):
                raise ParameterError("principal axes must form an orthonormal matrix")
        self.semi_axes, self.axes = a, R
        c = np.zeros(d) if center is None else center
        vol = math.exp(_log_unit_ball_volume(d) + float(np.log(a).sum()))
        super().__init__(d, c, float(a.max()), exact_volume=vol,
                         exact_cov_opnorm=float(a.max() ** 2 / (d + 2)))

    def _local(self, pts):
        return (pts - self.center) @ self.axes

    def _contains(self, pts):
        z = self._local(pts)
        return np.sum((z / self.semi_axes) ** 2, axis=1) <= 1.0

    def _distance(self, pts):
        z = self._local(pts)
        a2 = self.semi_axes ** 2
        out = np.zeros(len(z))
        outside = np.sum(z * z / a2, axis=1) > 1.0
        for k in np.flatnonzero(outside):
            zk = z[k]
            # nearest point p_i = a_i^2 z_i / (a_i^2 + t) with t the positive root
            f = lambda t: np.sum(a2 * zk * zk / (a2 + t) ** 2) - 1.0
            hi = float(np.sqrt(np.sum(a2 * zk * zk))) + 1.0
            t = brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-15)
            out[k] = np.linalg.norm(zk - a2 * zk / (a2 + t))
        return out

    def _sample(self, rng, n):
        z = _unit_ball_points(rng, n, self.d) * self.semi_axes
        return self.center + z @ self.axes.T


class Polytope(ConvexBody):
    """Bounded polytope ``{x : A x <= b}``.

    The center defaults to the Chebyshev center. ``D`` is computed exactly
    from the vertex set (qhull), so this is meant for modest dimensions.
    """

    kind = "polytope"

    def __init__(self, A, b, center=None, tol: float = 1e-10, max_iter: int = 10_000):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ParameterError("A and b have inconsistent row counts")
        d = A.shape[1]
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise ParameterError("zero normal vector in halfspace description")
        self.A, self.b, self._norms = A, b, norms
        self.tol, self.max_iter = tol, max_iter
        self._check_bounded()
        if center is None:
            c, r = self._chebyshev_center()
        else:
            c = np.asarray(center, dtype=float)
            r = float(np.min((b - A @ c) / norms))
        if r < 1.0 - _RADIUS_SLACK:
            raise ParameterError(f"inscribed radius {r:.6g} around the center is < 1")
        verts = self._vertices(c)
        D = float(np.max(np.linalg.norm(verts - c, axis=1)))
        vol = float(verts.max() - verts.min()) if d == 1 else ConvexHull(verts).volume
        self.vertices = verts
        super().__init__(d, c, D, exact_volume=vol)

    def _check_bounded(self):
        d = self.A.shape[1]
        for i in range(d):
            for sgn in (1.0, -1.0):
                cvec = np.zeros(d)
                cvec[i] = -sgn
                res = linprog(cvec, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * d,
                              method="highs")
                if res.status == 3:
                    raise ParameterError("polytope is unbounded")
                if res.status == 2:
                    raise ParameterError("polytope is empty")

    def _chebyshev_center(self):
        d = self.A.shape[1]
        cvec = np.zeros(d + 1)
        cvec[-1] = -1.0
        A_ub = np.hstack([self.A, self._norms[:, None]])
        res = linprog(cvec, A_ub=A_ub, b_ub=self.b,
                      bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0:
            raise ParameterError("could not compute the Chebyshev center")
        return res.x[:d], float(res.x[-1])

    def _vertices(self, c):
        if self.A.shape[1] == 1:
            a = self.A[:, 0]
            hi = np.min((self.b / a)[a > 0])
            lo = np.max((self.b / a)[a < 0])
            return np.array([[lo], [hi]])
        hs = HalfspaceIntersection(np.hstack([self.A, -self.b[:, None]]), c)
        return hs.intersections

    def _contains(self, pts):
        return np.all(pts @ self.A.T <= self.b, axis=1)

    def _distance(self, pts):
        # Dykstra's alternating projections: converges to the nearest point
        x = pts.copy()
        incr = np.zeros((self.A.shape[0],) + x.shape)
        sq = self._norms ** 2
        for _ in range(self.max_iter):
            prev = x.copy()
            for i, (ai, bi) in enumerate(zip(self.A, self.b)):
                z = x + incr[i]
                viol = np.maximum(z @ ai - bi, 0.0)
                x = z - (viol / sq[i])[:, None] * ai
                incr[i] = z - x
            if np.max(np.abs(x - prev), initial=0.0) < self.tol:
                break
        else:
            logger.warning("polytope projection hit max_iter=%d", self.max_iter)
        dist = np.linalg.norm(pts - x, axis=1)
        dist[self._contains(pts)] = 0.0
        return dist


class CountingOracle:
    """Per-chain wrapper counting every point submitted to ``contains``."""

    def __init__(self, body: ConvexBody):
        self.body = body
        self.queries = 0

    def contains(self, x):
        out = self.body.contains(x)
        self.queries += 1 if np.ndim(out) == 0 else len(out)
        return out

    def __getattr__(self, name):
        return getattr(self.body, name)


def contains(body: ConvexBody, x):
    return body.contains(x)


def distance_to_body(body: ConvexBody, x):
    return body.distance(x)


def blowup_contains(body: ConvexBody, x, delta: float):
    return body.blowup_contains(x, delta)


def exact_uniform_sample(body: ConvexBody, rng: np.random.Generator, size: Optional[int] = None):
    """Exact draw(s) from Unif(K); available for ball, box, simplex and ellipsoid."""
    return body.sample_uniform(rng, size)


def load_polytope(path) -> Polytope:
    """Read rows ``n_1 ... n_d b`` meaning ``n . x <= b``; ``#`` starts a comment."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(v) for v in line.replace(",", " ").split()])
    if not rows or len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
        raise ParameterError(f"malformed polytope file {path}")
    M = np.array(rows)
    return Polytope(M[:, :-1], M[:, -1])


_SPEC_RE = re.compile(r"^\s*([a-z]+)\s*\((.*)\)\s*$")


def parse_body(spec: str) -> ConvexBody:
    """Build a body from ``ball(d,R)``, ``box(d,a,b)``, ``simplex(d)``,
    ``polytope(path)`` or ``ellipsoid(d, a1 a2 ...)``."""
    m = _SPEC_RE.match(spec)
    if not m:
        raise ParameterError(f"cannot parse body spec {spec!r}")
    kind, arg = m.group(1), m.group(2).strip()
    if kind == "polytope":
        return load_polytope(arg)
    parts = [p for p in re.split(r"[,\s;]+", arg) if p]
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ParameterError(f"bad numeric argument in {spec!r}") from exc
    if not vals or vals[0] != int(vals[0]):
        raise ParameterError(f"first argument of {spec!r} must be the dimension")
    d = int(vals[0])
    if kind == "ball":
        return Ball(d, *vals[1:2])
    if kind == "box":
        if len(vals) not in (1, 3):
            raise ParameterError("box takes (d) or (d,a,b)")
        return Box(d, *vals[1:3])
    if kind == "simplex":
        return Simplex(d, *vals[1:2])
    if kind == "ellipsoid":
        if len(vals) != d + 1:
            raise ParameterError(f"ellipsoid needs {d} semi-axes")
        return Ellipsoid(vals[1:])
    raise ParameterError(f"unknown body kind {kind!r}")


def body_from_config(cfg: Mapping[str, str]) -> ConvexBody:
    """Build a body from a key-value mapping (e.g. a config-file section)."""
    if "spec" in cfg:
        return parse_body(cfg["spec"])
    kind = cfg.get("kind")
    if kind is None:
        raise ParameterError("body config needs 'kind' or 'spec'")
    if kind == "polytope":
        return load_polytope(cfg["path"])
    d = int(cfg.get("dimension", cfg.get("d", 0)))
    if kind == "ball":
        return Ball(d, float(cfg.get("radius", 1.0)))
    if kind == "box":
        return Box(d, float(cfg.get("a", -1.0)), float(cfg.get("b", 1.0)))
    if kind == "simplex":
        s = cfg.get("scale")
        return Simplex(d, None if s is None else float(s))
    if kind == "ellipsoid":
        axes = [float(v) for v in re.split(r"[,\s;]+", cfg["semi_axes"].strip()) if v]
        if len(axes) != d:
            raise ParameterError(f"ellipsoid needs {d} semi-axes")
        return Ellipsoid(axes)
    raise ParameterError(f"unknown body kind {kind!r}")
