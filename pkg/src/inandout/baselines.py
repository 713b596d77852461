"""Ball walk and speedy walk baselines.

The speedy walk step samples ``Unif(K ∩ B_delta(x))`` by rejection: uniform
proposals from the ball are repeated until one lands in ``K``. Accepted
proposals are proper steps, rejected ones improper steps. Its stationary
density is proportional to the ball local conductance
``l(x) = vol(K ∩ B_delta(x)) / vol(B_delta(x))`` on ``K``;
:func:`speedy_to_uniform` corrects this by scaling about the center.

Uniform-in-ball proposals use a normalized Gaussian direction times
``U^(1/d)`` so results are stable across generator versions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import DiagnosticsError, ParameterError
from .geometry import _unit_ball_points
from .sampler import ChainTrace, wilson_interval

__all__ = [
    "BallWalkParams", "uniform_in_ball", "ball_walk_step", "run_ball_walk",
    "speedy_walk_step", "run_speedy_walk", "run_speedy_batch",
    "ball_local_conductance_mc", "average_conductance_mc", "speedy_to_uniform",
    "speedy_tv_bias_bound", "average_conductance_lower_bound",
    "exact_box_conductance_2d", "default_speedy_delta",
]

SPEEDY_SAFETY_CAP = 10 ** 7
CONVERSION_SAFETY_CAP = 10 ** 3


@dataclass(frozen=True)
class BallWalkParams:
    delta: float
    T: int
    seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("step radius delta must be positive")
        if self.T < 0:
            raise ParameterError("T must be >= 0")


def default_speedy_delta(d: int) -> float:
    """``1 / (2 sqrt(d))``; the theory only fixes ``delta = Θ(d^(-1/2))``."""
    return 0.5 / math.sqrt(d)


def uniform_in_ball(rng: np.random.Generator, center, delta: float, n: int) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    return center + delta * _unit_ball_points(rng, n, center.shape[-1])


def ball_walk_step(body, x, delta: float, rng: np.random.Generator) -> np.ndarray:
    """One Metropolis-filtered ball-walk step (exactly one membership query)."""
    y = uniform_in_ball(rng, x, delta, 1)[0]
    return y if body.contains(y) else np.asarray(x, dtype=float)


def run_ball_walk(body, x0, params: BallWalkParams, rng: np.random.Generator,
                  store_iterates: bool = True) -> ChainTrace:
    x = np.asarray(x0, dtype=float)
    if not body.contains(x):
        raise ParameterError("starting point is not in K")
    trace = ChainTrace(iterates=[x.copy()])
    for _ in range(params.T):
        x = ball_walk_step(body, x, params.delta, rng)
        trace.trials_per_iter.append(1)
        trace.total_queries += 1
        if store_iterates:
            trace.iterates.append(x)
    if not store_iterates and params.T:
        trace.iterates.append(x)
    return trace


def speedy_walk_step(body, x, delta: float, rng: np.random.Generator,
                     safety_cap: int = SPEEDY_SAFETY_CAP,
                     max_block: int = 4096) -> Tuple[np.ndarray, int]:
    """Draw from ``Unif(K ∩ B_delta(x))``; return ``(x_new, improper)``.

    Uncapped in principle; ``safety_cap`` proposals without acceptance raise
    :class:`DiagnosticsError` (a pathologically thin region).
    """
    x = np.asarray(x, dtype=float)
    tried, block = 0, 1
    while tried < safety_cap:
        k = min(block, safety_cap - tried)
        props = uniform_in_ball(rng, x, delta, k)
        hit = np.flatnonzero(np.asarray(body.contains(props)))
        if hit.size:
            return props[hit[0]], tried + int(hit[0])
        tried += k
        block = min(2 * block, max_block)
    raise DiagnosticsError(f"speedy step made {safety_cap} improper steps without acceptance")


def run_speedy_walk(body, x0, params: BallWalkParams, rng: np.random.Generator,
                    store_iterates: bool = True) -> ChainTrace:
    """Speedy walk over ``params.T`` proper steps; trials = improper + 1 per step."""
    x = np.asarray(x0, dtype=float)
    if not body.contains(x):
        raise ParameterError("starting point is not in K")
    trace = ChainTrace(iterates=[x.copy()])
    for _ in range(params.T):
        x, improper = speedy_walk_step(body, x, params.delta, rng)
        trace.trials_per_iter.append(improper + 1)
        trace.total_queries += improper + 1
        if store_iterates:
            trace.iterates.append(x)
    if not store_iterates and params.T:
        trace.iterates.append(x)
    return trace


def run_speedy_batch(body, X0, delta: float, steps: int, rng: np.random.Generator,
                     record_from: int = None, safety_cap: int = SPEEDY_SAFETY_CAP):
    """Advance many independent speedy chains in lock-step.

    Returns ``(X, improper, recorded)``: final states, improper-step counts per
    chain, and the stacked states of steps ``record_from .. steps`` (or
    ``None``). All chains share ``rng``; use :func:`run_speedy_walk` when
    per-chain streams matter.
    """
    X = np.array(X0, dtype=float, copy=True)
    n = len(X)
    improper = np.zeros(n, dtype=np.int64)
    recorded = []
    for step in range(steps):
        pending = np.arange(n)
        tries = 0
        while pending.size:
            props = uniform_in_ball(rng, X[pending], delta, pending.size)
            ok = np.asarray(body.contains(props))
            X[pending[ok]] = props[ok]
            improper[pending[~ok]] += 1
            pending = pending[~ok]
            tries += 1
            if tries >= safety_cap:
                raise DiagnosticsError("speedy batch hit the safety cap")
        if record_from is not None and step + 1 >= record_from:
            recorded.append(X.copy())
    return X, improper, (np.stack(recorded) if recorded else None)


def ball_local_conductance_mc(body, x, delta: float, n: int, rng: np.random.Generator):
    """Monte-Carlo ``vol(K ∩ B_delta(x)) / vol(B_delta(x))`` with a Wilson 95% CI."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    pts = uniform_in_ball(rng, x, delta, n)
    k = int(np.count_nonzero(body.contains(pts)))
    return k / n, wilson_interval(k, n)


def average_conductance_mc(body, delta: float, n: int, rng: np.random.Generator):
    """``E_pi l``: one ball proposal around each of ``n`` exact uniform points."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    x = body.sample_uniform(rng, n)
    y = x + delta * _unit_ball_points(rng, n, body.d)
    k = int(np.count_nonzero(body.contains(y)))
    return k / n, wilson_interval(k, n)


def average_conductance_lower_bound(delta: float, d: int) -> float:
    return 1.0 - delta * math.sqrt(d) / 2.0


def speedy_tv_bias_bound(lam: float) -> float:
    """TV distance between the speedy law and uniform is at most ``(1 - lam) / lam``."""
    if not 0 < lam <= 1:
        raise ParameterError("average conductance must lie in (0, 1]")
    return (1.0 - lam) / lam


def speedy_to_uniform(body, speedy_sampler: Callable[[np.random.Generator], np.ndarray],
                      rng: np.random.Generator, cap: int = CONVERSION_SAFETY_CAP):
    """Draw speedy points ``X`` until ``c + 2d/(2d-1) (X - c)`` lies in ``K``.

    Returns ``(point, calls)``. Scaling is about the body center ``c``.
    """
    s = 2.0 * body.d / (2.0 * body.d - 1.0)
    for calls in range(1, cap + 1):
        X = np.asarray(speedy_sampler(rng), dtype=float)
        Xs = body.center + s * (X - body.center)
        if body.contains(Xs):
            return Xs, calls
    raise DiagnosticsError(f"speedy-to-uniform conversion exceeded {cap} calls")


def _segment(s, delta):
    s = np.minimum(s, delta)
    return delta * delta * np.arccos(s / delta) - s * np.sqrt(delta * delta - s * s)


def _corner(a, b, delta):
    """Area of the disk of radius delta at the origin intersected with {u > a, v > b}."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    inside = a * a + b * b < delta * delta
    bb = np.where(inside, b, 0.0)
    aa = np.where(inside, a, 0.0)
    top = np.sqrt(delta * delta - bb * bb)

    def F(u):
        return 0.5 * (u * np.sqrt(np.maximum(delta * delta - u * u, 0.0))
                      + delta * delta * np.arcsin(np.clip(u / delta, -1, 1)))

    q = F(top) - F(aa) - bb * (top - aa)
    return np.where(inside, q, 0.0)


def exact_box_conductance_2d(x, lo, hi, delta: float) -> np.ndarray:
    """Closed-form ball local conductance for a 2-d axis box, ``delta <=`` half the short side."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (2,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (2,))
    if delta > 0.5 * np.min(hi - lo) + 1e-15:
        raise ParameterError("closed form needs delta <= half the shortest side")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sl, sr = x[:, 0] - lo[0], hi[0] - x[:, 0]
    sb, st = x[:, 1] - lo[1], hi[1] - x[:, 1]
    area = math.pi * delta * delta
    area = area - sum(_segment(s, delta) for s in (sl, sr, sb, st))
    area = area + sum(_corner(a, b, delta) for a, b in ((sl, sb), (sl, st), (sr, sb), (sr, st)))
    return area / (math.pi * delta * delta)
