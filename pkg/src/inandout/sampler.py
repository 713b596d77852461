"""The In-and-Out chain.

One iteration is a Gaussian forward step ``y ~ N(x, h I)`` followed by a
backward step ``x ~ N(y, h I)`` restricted to ``K``, implemented by
rejection with at most ``N`` proposals. Exhausting the cap is a *failure*,
returned as a value so that the restart wrapper and the bias analysis can
both observe it.

``m`` counts completed iterations: a successful trace holds ``m + 1``
iterates ``x_0 .. x_m`` and the output is ``x_m``.

Randomness: every chain owns a ``numpy.random.Generator`` over the
counter-based Philox bit generator keyed by ``seed XOR chain_index``
(see :func:`make_rng`), so ``(seed, chain)`` fully determines a trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.stats import binomtest

from .errors import DiagnosticsError, ParameterError
from .theory import per_iteration_schedule

__all__ = [
    "make_rng", "InOutParams", "ChainTrace", "forward_step", "backward_step",
    "run_chain", "run_with_restart", "local_conductance_mc", "wilson_interval",
]

_MASK64 = (1 << 64) - 1
# largest proposal block drawn at once by the backward step
DEFAULT_MAX_BLOCK = 4096


def make_rng(seed: int, chain: int = 0) -> np.random.Generator:
    """Per-chain stream: Philox keyed by ``seed XOR chain`` (both 64-bit)."""
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ int(chain)) & _MASK64))


def wilson_interval(k: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class InOutParams:
    h: float
    N: int
    m: int
    q: float = 2.0
    eps: float = 0.1
    eta: float = 0.1
    M: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.h > 0:
            raise ParameterError("h must be positive")
        if self.N < 1:
            raise ParameterError("trial cap N must be >= 1")
        if self.m < 0:
            raise ParameterError("iteration budget m must be >= 0")
        if self.q < 1:
            raise ParameterError("Renyi order q must be >= 1")
        if not 0 < self.eta < 0.5:
            raise ParameterError("eta must lie in (0, 1/2)")
        if not 0 < self.eps < 0.5:
            raise ParameterError("eps must lie in (0, 1/2)")
        if self.M < 1:
            raise ParameterError("warmness M must be >= 1")

    @classmethod
    def from_schedule(cls, d: int, m: int, M: float = 1.0, eta: float = 0.1, **kw):
        """Parameters with ``h`` and ``N`` from the per-iteration schedule."""
        s = per_iteration_schedule(m, M, eta, d)
        return cls(h=s.h, N=s.N, m=m, M=M, eta=eta, **kw)


@dataclass
class ChainTrace:
    iterates: List[np.ndarray] = field(default_factory=list)
    trials_per_iter: List[int] = field(default_factory=list)
    total_queries: int = 0
    failed_at: Optional[int] = None
    restarts: int = 0

    @property
    def failed(self) -> bool:
        return self.failed_at is not None

    @property
    def proper_steps(self) -> int:
        return len(self.trials_per_iter) - (1 if self.failed else 0)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def forward_step(x: np.ndarray, h: float, rng: np.random.Generator) -> np.ndarray:
    """``y = x + sqrt(h) z``, ``z`` standard normal."""
    if not h > 0:
        raise ParameterError("h must be positive")
    x = np.asarray(x, dtype=float)
    return x + math.sqrt(h) * rng.standard_normal(x.shape)


def backward_step(body, y: np.ndarray, h: float, N: int, rng: np.random.Generator,
                  max_block: int = DEFAULT_MAX_BLOCK) -> Tuple[Optional[np.ndarray], int]:
    """Rejection sampling from ``N(y, h I)`` restricted to ``K`` with at most ``N`` trials.

    Returns ``(x, trials)``; on failure ``x`` is ``None`` and ``trials == N``.
    ``trials`` counts proposals up to and including the accepted one, i.e.
    the membership queries a sequential loop would issue. Proposals are
    drawn in blocks of 1, 2, 4, ... up to ``max_block``; anything drawn past
    the accepted proposal is discarded. ``max_block=1`` gives the plain
    one-query-per-proposal loop.
    """
    if N < 1:
        raise ParameterError("trial cap N must be >= 1")
    y = np.asarray(y, dtype=float)
    sd = math.sqrt(h)
    d = y.shape[0]
    trials, block = 0, 1
    while trials < N:
        k = min(block, N - trials)
        props = y + sd * rng.standard_normal((k, d))
        inside = np.asarray(body.contains(props))
        hit = np.flatnonzero(inside)
        if hit.size:
            j = int(hit[0])
            return props[j], trials + j + 1
        trials += k
        block = min(2 * block, max_block)
    return None, N


def run_chain(body, x0, params: InOutParams, rng: np.random.Generator,
              store_iterates: bool = True, max_block: int = DEFAULT_MAX_BLOCK) -> ChainTrace:
    """Run ``params.m`` iterations from ``x0``; stop at the first failure."""
    x = np.asarray(x0, dtype=float)
    if not body.contains(x):
        raise ParameterError("starting point is not in K")
    trace = ChainTrace(iterates=[x.copy()])
    for i in range(params.m):
        y = forward_step(x, params.h, rng)
        xn, trials = backward_step(body, y, params.h, params.N, rng, max_block=max_block)
        trace.trials_per_iter.append(trials)
        trace.total_queries += trials
        if xn is None:
            trace.failed_at = i
            break
        x = xn
        if store_iterates:
            trace.iterates.append(x)
    if not store_iterates and trace.proper_steps:
        trace.iterates.append(x)
    return trace


def run_with_restart(body, warm_sampler: Callable[[np.random.Generator], np.ndarray],
                     params: InOutParams, rng: np.random.Generator,
                     store_iterates: bool = False,
                     max_block: int = DEFAULT_MAX_BLOCK) -> Tuple[np.ndarray, ChainTrace]:
    """Re-run whole chains from fresh warm starts until one completes ``m`` iterations.

    The returned trace is the successful chain with ``restarts`` set to the
    number of failed attempts and ``total_queries`` including their queries.
    More than ``ceil(10 / (1 - eta))`` restarts raises :class:`DiagnosticsError`.
    """
    cap = math.ceil(10.0 / (1.0 - params.eta))
    spent = 0
    for attempt in range(cap + 1):
        x0 = warm_sampler(rng)
        trace = run_chain(body, x0, params, rng, store_iterates=store_iterates,
                          max_block=max_block)
        if not trace.failed:
            trace.restarts = attempt
            trace.total_queries += spent
            return trace.final, trace
        spent += trace.total_queries
    raise DiagnosticsError(
        f"no successful chain after {cap} restarts; the (h, N) schedule is likely mis-set")


def local_conductance_mc(body, y, h: float, n: int, rng: np.random.Generator):
    """Fraction of ``n`` draws from ``N(y, h I)`` landing in ``K`` plus a Wilson 95% CI."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    y = np.asarray(y, dtype=float)
    pts = y + math.sqrt(h) * rng.standard_normal((n, y.shape[0]))
    k = int(np.count_nonzero(body.contains(pts)))
    return k / n, wilson_interval(k, n)
