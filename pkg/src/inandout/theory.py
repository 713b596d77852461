"""Closed-form schedules and bounds for the In-and-Out chain.

All quantities hidden behind ``≲`` or ``Õ`` carry a universal constant that
is not known. Those constants are plain configuration values here
(:class:`TheoryConstants`, default 1.0). They are NOT certified: anything
computed from them is a prediction for planning runs, never a correctness
claim.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ParameterError

__all__ = [
    "Schedule", "TheoryConstants", "BoundReport", "per_iteration_schedule",
    "main_step_size", "renyi_decay_lsi", "chi2_decay_pi", "two_phase_k0",
    "renyi_decay_pi_two_phase", "fi_constants", "point_start_warmness",
    "blowup_tail_bound", "log_blowup_tail_bound", "conditioning_bias",
    "iteration_count", "INTERVAL_CPI_UNIT",
]

# Poincaré constant of Unif[-1, 1]: (b - a)^2 / pi^2, certified in the test
# suite by brute-force eigenvalues of the Neumann Laplacian.
INTERVAL_CPI_UNIT = 4.0 / math.pi ** 2


@dataclass(frozen=True)
class TheoryConstants:
    """Universal constants behind the asymptotic notation (uncertified)."""

    c_pi: float = 1.0
    c_lsi: float = 1.0
    c_iter: float = 1.0


@dataclass(frozen=True)
class Schedule:
    Z: float
    log_Z: float
    c: float
    t: float
    h: float
    delta: float
    N: int

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundReport:
    """A predicted one-sided bound next to an empirical estimate with its CI."""

    name: str
    predicted: float
    empirical: float
    ci: tuple

    @property
    def satisfied(self) -> bool:
        return bool(self.ci[1] <= self.predicted)

    def to_dict(self):
        return {"name": self.name, "predicted": self.predicted,
                "empirical": self.empirical, "ci": list(self.ci),
                "satisfied": self.satisfied}


def _check_mMeta(m, M, eta):
    if m < 1:
        raise ParameterError("iteration budget m must be >= 1")
    if M < 1:
        raise ParameterError("warmness M must be >= 1")
    if not 0 < eta < 1:
        raise ParameterError("failure budget eta must lie in (0, 1)")


def per_iteration_schedule(m: int, M: float, eta: float, d: int) -> Schedule:
    """Schedule making each iteration fail with probability at most ``eta/m``.

    ``Z = 9 m M / eta``, ``c = log log Z / (2 log Z)``, ``h = c / d^2``,
    ``t = sqrt(8) log log Z``, ``delta = t / d`` and ``N = ceil(Z log^4 Z)``.
    """
    _check_mMeta(m, M, eta)
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    Z = 9.0 * m * M / eta
    if Z <= math.e:
        raise ParameterError(f"Z = {Z} <= e makes log log Z non-positive")
    lz = math.log(Z)
    llz = math.log(lz)
    c = llz / (2.0 * lz)
    t = math.sqrt(8.0) * llz
    N = math.ceil(Z * lz ** 4)
    return Schedule(Z=Z, log_Z=lz, c=c, t=t, h=c / d ** 2, delta=t / d, N=N)


def main_step_size(m: int, M: float, eta: float, d: int) -> float:
    """``h = 1 / (2 d^2 log(9 m M / eta))``.

    This is smaller than the per-iteration schedule's ``h`` by exactly the
    factor ``log log Z``.
    """
    _check_mMeta(m, M, eta)
    Z = 9.0 * m * M / eta
    if Z <= math.e:
        raise ParameterError(f"Z = {Z} <= e")
    return 1.0 / (2.0 * d * d * math.log(Z))


def renyi_decay_lsi(R0: float, k: int, h: float, C_LSI: float, q: float) -> float:
    if q < 1 or C_LSI <= 0 or h <= 0:
        raise ParameterError("need q >= 1, C_LSI > 0, h > 0")
    return R0 * (1.0 + h / C_LSI) ** (-k / q)


def chi2_decay_pi(X0: float, k: int, h: float, C_PI: float) -> float:
    if C_PI <= 0 or h <= 0:
        raise ParameterError("need C_PI > 0, h > 0")
    return X0 * (1.0 + h / C_PI) ** (-k)


def two_phase_k0(R0: float, h: float, C_PI: float, q: float) -> int:
    """First iteration of the geometric phase (0 when ``R0 <= 1``)."""
    rate = math.log1p(h / C_PI)
    return max(0, math.ceil(q * (R0 - 1.0) / (2.0 * rate)))


def renyi_decay_pi_two_phase(R0: float, k: int, h: float, C_PI: float, q: float) -> float:
    """Rényi decay under a Poincaré inequality, for ``q >= 2``.

    Linear phase ``R0 - k log(1 + h/C_PI)/q`` while
    ``k <= q (R0 - 1) / (2 log(1 + h/C_PI))``; afterwards the geometric
    phase ``min(R0, 1) (1 + h/C_PI)^(-(k - k0)/q)``.
    """
    if q < 2:
        raise ParameterError("two-phase decay needs q >= 2")
    if R0 < 0 or C_PI <= 0 or h <= 0:
        raise ParameterError("need R0 >= 0, C_PI > 0, h > 0")
    rate = math.log1p(h / C_PI)
    k_lin = q * (R0 - 1.0) / (2.0 * rate)
    if R0 >= 1.0 and k <= k_lin:
        return R0 - k * rate / q
    k0 = two_phase_k0(R0, h, C_PI, q)
    return min(R0, 1.0) * math.exp(-(k - k0) * rate / q)


def _log_d(d: int) -> float:
    # log d vanishes at d = 1, where the bound should reduce to the covariance scale
    return max(1.0, math.log(d))


def fi_constants(cov_opnorm: float, D: float, d: int, isotropic: bool = False,
                 constants: TheoryConstants = TheoryConstants()) -> dict:
    """Upper-bound estimates of the Poincaré and log-Sobolev constants of Unif(K).

    ``C_PI <~ ||cov||_op log d`` (``log d`` when isotropic) and
    ``C_LSI <~ D^2`` (``D`` when isotropic), times uncertified constants.
    """
    if cov_opnorm <= 0 or D <= 0 or d < 1:
        raise ParameterError("need cov_opnorm > 0, D > 0, d >= 1")
    scale = 1.0 if isotropic else cov_opnorm
    return {
        "C_PI_upper": constants.c_pi * scale * _log_d(d),
        "C_LSI_upper": constants.c_lsi * (D if isotropic else D * D),
    }


def point_start_warmness(d: int, h: float, D: float) -> float:
    """``log M`` for the law after one step from a point: ``(d/2) log 2 + 5 D^2 / h``."""
    if h <= 0:
        raise ParameterError("h must be positive")
    return 0.5 * d * math.log(2.0) + 5.0 * D * D / h


def log_blowup_tail_bound(delta: float, h: float, d: int) -> float:
    if delta < 0 or h <= 0:
        raise ParameterError("need delta >= 0 and h > 0")
    return min(0.0, -delta * delta / (2.0 * h) + delta * d)


def blowup_tail_bound(delta: float, h: float, d: int) -> float:
    """``min(1, exp(-delta^2/(2h) + delta d))``: mass of the forward law outside ``K_delta``."""
    return math.exp(log_blowup_tail_bound(delta, h, d))


def conditioning_bias(q: float, eta: float) -> float:
    """Extra Rényi-q divergence from conditioning on success: ``q/(q-1) log 1/(1-eta)``."""
    if not 0 <= eta < 1:
        raise ParameterError("eta must lie in [0, 1)")
    base = -math.log1p(-eta)
    if math.isinf(q):
        return base
    if q <= 1:
        raise ParameterError("conditioning bias needs q > 1")
    return q / (q - 1.0) * base


def iteration_count(q: float, d: int, cov_opnorm: float, M: float, eta: float, eps: float,
                    constants: TheoryConstants = TheoryConstants(),
                    max_rounds: int = 100) -> int:
    """Smallest integer m with ``m >= A log(9 m M / eta)``,
    ``A = C q d^2 ||cov||_op log d log(M / (eta eps))``.

    Solved by the fixed-point iteration ``m <- ceil(A log(9 m M / eta))``
    from ``m = 1``, which increases monotonically to the smallest solution.
    """
    _check_mMeta(1, M, eta)
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    A = (constants.c_iter * q * d * d * cov_opnorm * _log_d(d)
         * math.log(M / (eta * eps)))
    rhs = lambda m: A * math.log(9.0 * m * M / eta)
    m = 1
    for _ in range(max_rounds):
        if m >= rhs(m):
            return m
        m = max(m + 1, math.ceil(rhs(m)))
    raise ParameterError("iteration-count fixed point did not converge")
