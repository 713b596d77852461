"""Exact discretized In-and-Out kernel and heat flow in one dimension.

Densities live on a uniform cell-centered grid as per-cell masses. The
In-and-Out kernel on ``K = [a, b]`` is evaluated as an exact discrete Gibbs
kernel: the forward weight from cell ``i`` to lattice point ``y_j`` is the
``N(y_j, h)`` mass of cell ``i`` (a difference of normal CDFs), so the
backward normalizer telescopes to the closed form

    l(y) = Phi((b - y) / sqrt(h)) - Phi((a - y) / sqrt(h)),

evaluated in log-space with ``log_ndtr``. Because forward and backward steps
share one symmetric weight matrix, the discrete uniform law on the cells of
``K`` is exactly stationary, and the discrete ``pi^Y`` equals
``l(y) / (b - a)`` at every lattice point.

Heat flow (``heat_convolve``) uses the ``N(0, t)`` density sampled at cell
centers and renormalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import log_ndtr, logsumexp

from .errors import ParameterError, ToleranceError

__all__ = [
    "Grid1D", "interval_grid", "heat_convolve", "InOutKernel1D", "inout_kernel",
    "divergence", "divergence_arrays", "debruijn_check", "contraction_measured",
    "interval_cpi", "choose_cap", "warmness", "run_oracle_suite", "debruijn_instance",
]

MASS_TOL = 1e-12
LEAK_TOL = 1e-10
# kernels are truncated this many standard deviations out (tail mass ~1e-17)
PAD_SD = 8.5


@dataclass(frozen=True)
class Grid1D:
    """Per-cell masses on ``n`` equal cells covering ``[lo, hi]``."""

    lo: float
    hi: float
    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        object.__setattr__(self, "mass", m)
        if m.ndim != 1 or m.size < 16:
            raise ParameterError("a grid needs at least 16 cells")
        if not self.hi > self.lo:
            raise ParameterError("need lo < hi")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ParameterError("masses must be finite and nonnegative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ParameterError(f"masses sum to {m.sum()!r}, not 1")

    @property
    def n(self) -> int:
        return self.mass.size

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.dx

    @property
    def density(self) -> np.ndarray:
        return self.mass / self.dx

    def with_mass(self, mass) -> "Grid1D":
        return Grid1D(self.lo, self.hi, mass)

    @classmethod
    def from_density(cls, lo, hi, n, f) -> "Grid1D":
        """Sample ``f`` at cell centers and normalize."""
        x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        w = np.asarray(f(x), dtype=float)
        return cls(lo, hi, w / w.sum())

    @classmethod
    def point_mass(cls, lo, hi, n, x) -> "Grid1D":
        dx = (hi - lo) / n
        i = int(np.clip(np.floor((x - lo) / dx), 0, n - 1))
        w = np.zeros(n)
        w[i] = 1.0
        return cls(lo, hi, w)

    @classmethod
    def uniform_on(cls, lo, hi, n, a, b) -> "Grid1D":
        """Equal mass on the cells whose centers lie in ``[a, b]``."""
        x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        w = ((x >= a) & (x <= b)).astype(float)
        if not w.any():
            raise ParameterError("no cell center inside [a, b]")
        return cls(lo, hi, w / w.sum())


def interval_grid(a: float, b: float, n: int, h: float, pad_sd: float = PAD_SD):
    """``(lo, hi, n_total)`` for ``n`` cells on ``[a, b]`` padded by ``pad_sd * sqrt(h)``.

    Cell edges fall exactly on ``a`` and ``b``.
    """
    if not b > a or n < 16 or not h > 0:
        raise ParameterError("need a < b, n >= 16, h > 0")
    dx = (b - a) / n
    p = math.ceil(pad_sd * math.sqrt(h) / dx)
    return a - p * dx, b + p * dx, n + 2 * p


def _renorm(mass, what):
    s = mass.sum()
    if abs(s - 1.0) > LEAK_TOL:
        raise ToleranceError(f"{what}: mass {s!r} leaked off the grid; widen the grid")
    return mass / s


def heat_convolve(g: Grid1D, t: float) -> Grid1D:
    """Convolve with the ``N(0, t)`` density sampled at cell centers (renormalized)."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    if t == 0:
        return g
    dx = g.dx
    sd = math.sqrt(t)
    p = min(math.ceil(PAD_SD * sd / dx), 4 * g.n)
    k = np.arange(-p, p + 1) * dx
    ker = np.exp(-0.5 * (k / sd) ** 2)
    ker /= ker.sum()
    full = np.convolve(g.mass, ker)
    out = full[p:p + g.n]
    return g.with_mass(_renorm(out, "heat_convolve"))


class InOutKernel1D:
    """One In-and-Out iteration on ``K = [a, b]`` for grids of a fixed geometry."""

    def __init__(self, lo: float, hi: float, n: int, a: float, b: float, h: float):
        if not h > 0:
            raise ParameterError("h must be positive")
        if not lo < a < b < hi:
            raise ParameterError("[a, b] must lie strictly inside the grid")
        self.lo, self.hi, self.n, self.a, self.b, self.h = lo, hi, n, a, b, h
        dx = (hi - lo) / n
        self.dx = dx
        ia, ib = (a - lo) / dx, (b - lo) / dx
        if abs(ia - round(ia)) > 1e-8 or abs(ib - round(ib)) > 1e-8:
            raise ParameterError("a and b must fall on cell edges")
        self.ia, self.ib = int(round(ia)), int(round(ib))
        self.in_K = np.zeros(n, dtype=bool)
        self.in_K[self.ia:self.ib] = True
        sd = math.sqrt(h)
        self.sd = sd
        self.p = min(math.ceil(PAD_SD * sd / dx), n)
        k = np.arange(-self.p, self.p + 1) * dx
        # N(0, h) mass of [k - dx/2, k + dx/2], symmetric in k
        self.w = _cell_mass(np.abs(k), dx, sd)
        y = lo + (np.arange(n) + 0.5) * dx
        self.y = y
        self.log_ell = _log_interval_mass((a - y) / sd, (b - y) / sd)
        self.ell = np.exp(self.log_ell)

    @classmethod
    def for_grid(cls, g: Grid1D, a: float, b: float, h: float):
        return cls(g.lo, g.hi, g.n, a, b, h)

    def _check(self, g: Grid1D):
        if (g.n != self.n or not math.isclose(g.lo, self.lo)
                or not math.isclose(g.hi, self.hi)):
            raise ParameterError("grid geometry does not match the kernel")

    def _conv(self, v):
        return np.convolve(v, self.w)[self.p:self.p + self.n]

    def uniform(self) -> Grid1D:
        w = self.in_K.astype(float)
        return Grid1D(self.lo, self.hi, w / w.sum())

    def forward(self, g: Grid1D) -> Grid1D:
        """Law of ``y = x + N(0, h)`` on the lattice."""
        self._check(g)
        return g.with_mass(_renorm(self._conv(g.mass), "forward step"))

    def _ratio(self, nu):
        # nu_j / l(y_j), formed in log-space so tiny normalizers cannot overflow
        r = np.zeros_like(nu)
        pos = nu > 0
        r[pos] = np.exp(np.log(nu[pos]) - self.log_ell[pos])
        return r

    def backward(self, nu: Grid1D, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Unnormalized backward masses ``1_K(x_i) sum_j w_ij s_j nu_j / l_j``."""
        r = self._ratio(nu.mass)
        if weights is not None:
            r = r * weights
        out = self._conv(r)
        out[~self.in_K] = 0.0
        return out

    def failure_weights(self, N: int):
        """``(1 - l)^N`` per lattice point: the chance all ``N`` trials miss ``K``."""
        if N < 1:
            raise ParameterError("cap N must be >= 1")
        return np.exp(N * np.log1p(-np.minimum(self.ell, 1.0)))

    def failure_mass(self, g: Grid1D, N: int) -> float:
        nu = self.forward(g)
        return float(np.dot(nu.mass, self.failure_weights(N)))

    def step(self, g: Grid1D, cap: Optional[int] = None) -> Grid1D:
        nu = self.forward(g)
        if cap is None:
            out = self.backward(nu)
            return g.with_mass(_renorm(out, "backward step"))
        fail = self.failure_weights(cap)
        out = self.backward(nu, weights=1.0 - fail)
        s = out.sum()
        if not s > 0:
            raise ToleranceError("capped step failed with probability one")
        return g.with_mass(out / s)


def _cell_mass(k_abs, dx, sd):
    """``P(k - dx/2 < Z < k + dx/2)`` for ``Z ~ N(0, sd^2)``, ``k >= 0``, via upper tails."""
    hi = log_ndtr(-(k_abs - 0.5 * dx) / sd)
    lo = log_ndtr(-(k_abs + 0.5 * dx) / sd)
    return np.exp(hi) * -np.expm1(lo - hi)


def _log_interval_mass(u, v):
    """``log(Phi(v) - Phi(u))`` for ``u < v`` without cancellation or underflow."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    # for intervals on the right half use the mirror image so both tails are small
    flip = (u + v) > 0
    uu = np.where(flip, -v, u)
    vv = np.where(flip, -u, v)
    lv, lu = log_ndtr(vv), log_ndtr(uu)
    with np.errstate(divide="ignore"):
        return lv + np.log(-np.expm1(lu - lv))


_KERNELS: dict = {}


def inout_kernel(mu: Grid1D, a: float, b: float, h: float, cap: Optional[int] = None) -> Grid1D:
    """One In-and-Out iteration of ``mu`` on ``K = [a, b]``; ``cap=None`` is uncapped.

    The capped law is conditioned on success (renormalized).
    """
    key = (mu.lo, mu.hi, mu.n, a, b, h)
    ker = _KERNELS.get(key)
    if ker is None:
        if len(_KERNELS) > 32:
            _KERNELS.clear()
        ker = _KERNELS[key] = InOutKernel1D(mu.lo, mu.hi, mu.n, a, b, h)
    return ker.step(mu, cap)


def divergence_arrays(p, r, kind: str, q: Optional[float] = None) -> float:
    """Divergence of mass vector ``p`` from mass vector ``r`` (same cells)."""
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    kind = kind.lower()
    if kind == "tv":
        return 0.5 * float(np.abs(p - r).sum())
    if np.any((r <= 0) & (p > 0)):
        return math.inf
    s = p > 0
    ps, rs = p[s], r[s]
    if kind == "kl":
        return float(np.sum(ps * (np.log(ps) - np.log(rs))))
    if q is None:
        raise ParameterError(f"{kind} needs an order q")
    if kind in ("chi", "chi_q"):
        if q <= 1:
            raise ParameterError("chi_q needs q > 1 (KL is kind='kl')")
        if q == 2:
            return float(np.sum((p[r > 0] - r[r > 0]) ** 2 / r[r > 0]))
        return math.expm1(_log_moment(ps, rs, q))
    if kind in ("renyi", "renyi_q"):
        if q < 1:
            raise ParameterError("Renyi order must be >= 1")
        if q == 1:
            return divergence_arrays(p, r, "kl")
        if math.isinf(q):
            return float(np.max(np.log(ps) - np.log(rs)))
        return _log_moment(ps, rs, q) / (q - 1.0)
    raise ParameterError(f"unknown divergence kind {kind!r}")


def _log_moment(ps, rs, q):
    # log sum r (p/r)^q = log sum exp(q log p - (q-1) log r)
    return float(logsumexp(q * np.log(ps) - (q - 1.0) * np.log(rs)))


def divergence(mu: Grid1D, nu: Grid1D, kind: str, q: Optional[float] = None) -> float:
    """TV, KL, chi^q or Renyi-q divergence of ``mu`` from ``nu`` on a shared grid."""
    if mu.n != nu.n or not math.isclose(mu.lo, nu.lo) or not math.isclose(mu.hi, nu.hi):
        raise ParameterError("grids differ")
    return divergence_arrays(mu.mass, nu.mass, kind, q)


def warmness(mu: Grid1D, pi: Grid1D) -> float:
    """``max mu / pi`` over the support of ``mu``."""
    s = mu.mass > 0
    if np.any(pi.mass[s] <= 0):
        return math.inf
    return float(np.max(mu.mass[s] / pi.mass[s]))


def _smooth_enough(g: Grid1D, min_ratio: float = 3.0) -> bool:
    """Whether ``g`` behaves like a smooth density at the cell scale.

    Under heat flow for a short time ``s`` the L1 change of a smooth density
    grows linearly in ``s``, while a jump grows like ``sqrt(s)`` and a spike
    saturates. We compare ``s = t0`` with ``s = 4 t0`` for ``t0 = 10 dx^2``
    and demand a ratio of at least ``min_ratio`` (4 for smooth, 2 for a jump).
    """
    t0 = 10.0 * g.dx ** 2
    c1 = float(np.abs(heat_convolve(g, t0).mass - g.mass).sum())
    c4 = float(np.abs(heat_convolve(g, 4.0 * t0).mass - g.mass).sum())
    if c4 < 1e-14:
        return True
    return c4 >= min_ratio * c1


def _fisher_term(mu: Grid1D, nu: Grid1D, q: float, log_form: bool = True) -> float:
    """``E_nu[rho^q |grad log rho|^2]`` with central differences, one-sided at the ends."""
    s = (mu.mass > 0) & (nu.mass > 0)
    if not s.all():
        raise ToleranceError("densities must be positive on the whole grid")
    rho = mu.mass / nu.mass
    if log_form:
        g = np.gradient(rho, mu.dx) / rho
        return float(np.sum(nu.mass * rho ** q * g * g))
    # q = 2 written as E_nu |grad rho|^2
    g = np.gradient(rho, mu.dx)
    return float(np.sum(nu.mass * g * g))


def debruijn_check(mu: Grid1D, nu: Grid1D, t: float, dt: float, q: float,
                   check_smooth: bool = True) -> dict:
    """Compare ``d/dt chi^q(mu_t || nu_t)`` with ``-(q(q-1)/2) E[rho^q |grad log rho|^2]``.

    ``mu_t`` is ``mu`` after heat flow for time ``t`` (kernel ``N(0, t)``).
    The derivative is a central difference over ``[t - dt, t + dt]``.
    """
    if q <= 1:
        raise ParameterError("q must exceed 1")
    if not 0 < dt < t:
        raise ParameterError("need 0 < dt < t")
    if check_smooth and not (_smooth_enough(mu) and _smooth_enough(nu)):
        raise ToleranceError("inputs are not smooth; pre-convolve them first")

    def chi(s):
        return divergence(heat_convolve(mu, s), heat_convolve(nu, s), "chi", q)

    lhs = (chi(t + dt) - chi(t - dt)) / (2.0 * dt)
    mt, nt = heat_convolve(mu, t), heat_convolve(nu, t)
    rhs = -0.5 * q * (q - 1.0) * _fisher_term(mt, nt, q)
    out = {"lhs": lhs, "rhs": rhs, "rel_err": abs(lhs - rhs) / max(abs(rhs), 1e-12)}
    if q == 2:
        out["rhs_chi2_form"] = -_fisher_term(mt, nt, 2.0, log_form=False)
    return out


def contraction_measured(a: float, b: float, h: float, steps: int, start: Grid1D,
                         kind: str = "chi", q: float = 2.0, cap: Optional[int] = None):
    """Divergences to the uniform law on ``[a, b]`` before and after each of ``steps`` iterations."""
    ker = InOutKernel1D.for_grid(start, a, b, h)
    pi = ker.uniform()
    g = start
    out = [divergence(g, pi, kind, q)]
    for _ in range(steps):
        g = ker.step(g, cap)
        out.append(divergence(g, pi, kind, q))
    return np.array(out)


def interval_cpi(a: float, b: float, n: int) -> float:
    """Poincaré constant of ``Unif[a, b]`` from the cell-centered Neumann Laplacian.

    Returns the reciprocal of its smallest nonzero eigenvalue; converges to
    ``(b - a)^2 / pi^2`` (from above) as ``n`` grows.
    """
    if not b > a or n < 2:
        raise ParameterError("need a < b and n >= 2")
    dx = (b - a) / n
    diag = np.full(n, 2.0)
    diag[0] = diag[-1] = 1.0
    off = np.full(n - 1, -1.0)
    ev = eigh_tridiagonal(diag / dx ** 2, off / dx ** 2, eigvals_only=True,
                          select="i", select_range=(1, 1))
    return float(1.0 / ev[0])


def choose_cap(ker: InOutKernel1D, g: Grid1D, target: float, n_max: int = 10 ** 6) -> int:
    """Smallest cap ``N`` with one-step failure mass at most ``target``."""
    nu = ker.forward(g)

    def f(N):
        return float(np.dot(nu.mass, ker.failure_weights(N)))

    if f(1) <= target:
        return 1
    lo, hi = 1, 2
    while f(hi) > target:
        lo, hi = hi, 2 * hi
        if hi > n_max:
            raise ToleranceError("no cap reaches the failure target")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def _check(name, statistic, threshold, passed):
    return {"name": name, "statistic": float(statistic), "threshold": float(threshold),
            "pass": bool(passed)}


def run_oracle_suite(tol_scale: float = 1.0) -> list:
    """All 1-d oracle checks with default instances.

    ``tol_scale`` multiplies every tolerance; values below 1 tighten them.
    """
    checks = []
    a, b, h, n = -1.0, 1.0, 0.05, 4096

    lo, hi, nt = interval_grid(a, b, n, h)
    ker = InOutKernel1D(lo, hi, nt, a, b, h)
    pi = ker.uniform()

    out = ker.step(pi)
    checks.append(_check("stationarity_l1", np.abs(out.mass - pi.mass).sum(),
                         1e-8 * tol_scale, np.abs(out.mass - pi.mass).sum() <= 1e-8 * tol_scale))

    piY = ker.forward(pi)
    err = float(np.max(np.abs(piY.density - ker.ell / (b - a))))
    checks.append(_check("pi_Y_identity", err, 1e-8 * tol_scale, err <= 1e-8 * tol_scale))

    cpi = interval_cpi(a, b, 2048)
    checks.append(_check("interval_cpi", abs(cpi - 0.4053), 1e-3 * tol_scale,
                         abs(cpi - 0.4053) <= 1e-3 * tol_scale))

    cpi_n = interval_cpi(a, b, n)
    bound = 1.0 / (1.0 + h / cpi_n)
    start = Grid1D(lo, hi, np.where(ker.in_K, np.exp(3.0 * ker.y), 0.0)
                   / np.where(ker.in_K, np.exp(3.0 * ker.y), 0.0).sum())
    chis = contraction_measured(a, b, h, 30, start)
    worst = float(np.max(chis[1:] / chis[:-1]))
    checks.append(_check("chi2_contraction_ratio", worst, bound + 1e-6 * tol_scale,
                         worst <= bound + 1e-6 * tol_scale))

    mu0 = Grid1D.point_mass(lo, hi, nt, a + 0.5 * ker.dx)
    N = choose_cap(ker, mu0, 0.1)
    F = ker.failure_mass(mu0, N)
    ratio = warmness(ker.step(mu0, N), ker.step(mu0))
    checks.append(_check("capped_bias_sup_ratio", ratio, 1.0 / (1.0 - F) + 1e-8 * tol_scale,
                         ratio <= 1.0 / (1.0 - F) + 1e-8 * tol_scale))

    for q in (2.0, 3.0):
        r = debruijn_instance(4096, q)
        checks.append(_check(f"debruijn_q{q:g}", r["rel_err"], 1e-3 * tol_scale,
                             r["rel_err"] < 1e-3 * tol_scale))
    return checks


def debruijn_instance(n: int, q: float, t: float = 0.1, dt: float = 1e-4) -> dict:
    """Gaussian pair ``N(0.3, 0.5)`` against ``N(0, 0.5)`` on ``[-7, 7]``."""
    mu = Grid1D.from_density(-7.0, 7.0, n, lambda x: np.exp(-(x - 0.3) ** 2))
    nu = Grid1D.from_density(-7.0, 7.0, n, lambda x: np.exp(-x ** 2))
    return debruijn_check(mu, nu, t, dt, q)
