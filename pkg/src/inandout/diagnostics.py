"""Empirical statistics next to theory predictions.

Proportions get Wilson intervals, means get normal-approximation intervals;
the level is fixed at 95%. Everything here is a pure function of samples,
traces and configuration.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DiagnosticsError, ParameterError, UnsupportedOperation
from .geometry import Ball, Box, ConvexBody
from .oracle1d import divergence_arrays
from .sampler import ChainTrace, InOutParams, make_rng, run_chain, wilson_interval
from .theory import BoundReport, blowup_tail_bound

__all__ = [
    "Z95", "power_iteration", "empirical_moments", "marginal_cdfs", "KSResult",
    "marginal_ks", "blowup_tail_mc", "histogram_divergence", "mean_ci",
    "RunReport", "run_report", "rejection_scaling_report", "trend_sign_test",
    "effective_sample_size", "json_report",
]

Z95 = stats.norm.ppf(0.975)


def mean_ci(values) -> tuple:
    """Mean with a normal-approximation 95% interval."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ParameterError("no values")
    m = float(v.mean())
    if v.size < 2:
        return m, (m, m)
    se = float(v.std(ddof=1) / math.sqrt(v.size))
    return m, (float(m - Z95 * se), float(m + Z95 * se))


def power_iteration(A, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if not np.any(A):
        return 0.0
    v = np.ones(d) / math.sqrt(d)
    # a fixed start can be orthogonal to the top eigenvector; nudge it
    v += 1e-3 * np.arange(1, d + 1) / d
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ A @ v)
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def empirical_moments(samples) -> dict:
    """Sample mean, covariance, its operator norm and ``E|X - mean|^2``."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ParameterError("need an (n, d) array with n >= 2")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    return {
        "mean": mean,
        "cov": cov,
        "cov_opnorm_estimate": power_iteration(cov),
        "second_moment": float(np.trace(cov)),
    }


def marginal_cdfs(body: ConvexBody) -> List[Callable]:
    """Closed-form coordinate marginal CDFs of ``Unif(body)`` (boxes and balls)."""
    if isinstance(body, Box):
        return [stats.uniform(loc=a, scale=b - a).cdf for a, b in zip(body.lo, body.hi)]
    if isinstance(body, Ball):
        # (x_i - c_i) / R is distributed as 2 Beta((d+1)/2, (d+1)/2) - 1
        k = 0.5 * (body.d + 1)
        R = body.radius
        return [stats.beta(k, k, loc=c - R, scale=2 * R).cdf for c in body.center]
    raise UnsupportedOperation(f"no closed-form marginals for {type(body).__name__}")


@dataclass
class KSResult:
    statistics: List[float]
    pvalues: List[float]
    alpha: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def marginal_ks(samples, body: ConvexBody, alpha: float = 0.01) -> KSResult:
    """Per-coordinate two-sided KS tests with a Bonferroni correction."""
    X = np.asarray(samples, dtype=float)
    cdfs = marginal_cdfs(body)
    if X.ndim != 2 or X.shape[1] != len(cdfs):
        raise ParameterError("samples must be (n, d) for the body's dimension")
    res = [stats.kstest(X[:, i], cdfs[i]) for i in range(len(cdfs))]
    pv = [float(r.pvalue) for r in res]
    return KSResult([float(r.statistic) for r in res], pv, alpha,
                    bool(min(pv) > alpha / len(cdfs)))


def blowup_tail_mc(body: ConvexBody, h: float, delta: float, n: int,
                   rng: np.random.Generator, batch: int = 200_000) -> BoundReport:
    """Fraction of ``y = x + N(0, h I)``, ``x ~ Unif(K)``, outside ``K_delta``."""
    if n < 1 or not h > 0 or delta < 0:
        raise ParameterError("need n >= 1, h > 0, delta >= 0")
    out = 0
    left = n
    while left:
        k = min(batch, left)
        x = body.sample_uniform(rng, k)
        y = x + math.sqrt(h) * rng.standard_normal(x.shape)
        out += int(np.count_nonzero(~np.asarray(body.blowup_contains(y, delta))))
        left -= k
    return BoundReport("blowup_tail", blowup_tail_bound(delta, h, body.d), out / n,
                       wilson_interval(out, n))


_BIN_MASS_CACHE: dict = {}


def _bin_edges(body, bins):
    if isinstance(body, Box):
        return [np.linspace(a, b, bins + 1) for a, b in zip(body.lo, body.hi)]
    return [np.linspace(c - body.D, c + body.D, bins + 1) for c in body.center]


def _reference_masses(body, bins, n_mc, seed):
    if isinstance(body, Box):
        # equal-width bins of a box all carry the same mass
        return np.full((bins,) * body.d, float(bins) ** -body.d)
    key = (type(body).__name__, body.d, tuple(body.center), body.D, bins, n_mc, seed)
    if key not in _BIN_MASS_CACHE:
        x = body.sample_uniform(make_rng(seed), n_mc)
        H, _ = np.histogramdd(x, bins=_bin_edges(body, bins))
        _BIN_MASS_CACHE[key] = H / n_mc
    return _BIN_MASS_CACHE[key]


def histogram_divergence(samples, body: ConvexBody, bins: int, kind: str = "chi",
                         q: float = 2.0, n_mc: int = 10 ** 6, seed: int = 12345) -> float:
    """Plug-in divergence of binned samples from ``Unif(body)``, for ``d <= 3``.

    One pseudo-count is added to every bin of positive reference mass, so the
    value is biased upward and only meaningful for trends. Box bin masses are
    exact; other bodies use cached Monte-Carlo bin masses.
    """
    X = np.asarray(samples, dtype=float)
    if body.d > 3:
        raise UnsupportedOperation("histogram divergences are for d <= 3")
    ref = _reference_masses(body, bins, n_mc, seed)
    H, _ = np.histogramdd(X, bins=_bin_edges(body, bins))
    live = ref > 0
    counts = np.where(live, H + 1.0, H)
    p = counts / counts.sum()
    return divergence_arrays(p.ravel(), ref.ravel(), kind, q)


def trend_sign_test(series: Sequence[Sequence[float]], alpha: float = 0.05) -> dict:
    """Sign test against an increasing trend across checkpoints.

    Counts consecutive increases over all series; the one-sided binomial
    p-value tests whether increases outnumber a fair coin.
    """
    diffs = np.concatenate([np.diff(np.asarray(s, dtype=float)) for s in series])
    diffs = diffs[diffs != 0]
    if diffs.size == 0:
        return {"increases": 0, "total": 0, "pvalue": 1.0, "pass": True}
    k = int(np.count_nonzero(diffs > 0))
    p = float(stats.binomtest(k, diffs.size, 0.5, alternative="greater").pvalue)
    return {"increases": k, "total": int(diffs.size), "pvalue": p, "pass": p > alpha}


def effective_sample_size(x) -> float:
    """Geyer initial-positive-sequence ESS of a scalar chain."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = acf[t] + acf[t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))


@dataclass
class RunReport:
    proper_steps: int
    total_queries: int
    mean_trials_per_iter: float
    mean_trials_ci: tuple
    failure_rate: float
    failure_ci: tuple
    restarts: int
    bounds: List[BoundReport] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.failure_rate <= 1.0:
            raise DiagnosticsError("failure rate outside [0, 1]")
        if self.proper_steps and self.mean_trials_per_iter < 1.0:
            raise DiagnosticsError("mean trials per iteration below 1")

    def to_dict(self):
        d = asdict(self)
        d["mean_trials_ci"] = list(self.mean_trials_ci)
        d["failure_ci"] = list(self.failure_ci)
        d["bounds"] = [b.to_dict() for b in self.bounds]
        return d


def run_report(traces: Sequence[ChainTrace], bounds: Sequence[BoundReport] = ()) -> RunReport:
    """Aggregate chain traces; failure rate is per chain (whole run)."""
    if not traces:
        raise ParameterError("no traces")
    trials = np.concatenate([np.asarray(t.trials_per_iter, dtype=float) for t in traces])
    fails = sum(t.failed for t in traces)
    if trials.size:
        mt, mci = mean_ci(trials)
    else:
        mt, mci = float("nan"), (float("nan"), float("nan"))
    return RunReport(
        proper_steps=int(sum(t.proper_steps for t in traces)),
        total_queries=int(sum(t.total_queries for t in traces)),
        mean_trials_per_iter=mt,
        mean_trials_ci=tuple(mci),
        failure_rate=fails / len(traces),
        failure_ci=wilson_interval(fails, len(traces)),
        restarts=int(sum(t.restarts for t in traces)),
        bounds=list(bounds),
    )


def rejection_scaling_report(body_family: Callable[[int], ConvexBody], d_list: Sequence[int],
                             m: int = 20, M: float = 1.0, eta: float = 0.1,
                             chains: int = 50, seed: int = 0, ratio_limit: float = 3.0) -> dict:
    """Mean backward trials per iteration against ``M log^4(m M / eta)`` across dimensions.

    Chains start from exact uniform samples. One constant ``c_d`` is fitted
    per dimension; the report passes if ``max c_d / min c_d <= ratio_limit``.
    This is a trend check only.
    """
    ref = M * math.log(m * M / eta) ** 4
    rows = []
    for d in d_list:
        body = body_family(d)
        params = InOutParams.from_schedule(d, m, M=M, eta=eta, seed=seed)
        trials = []
        for c in range(chains):
            rng = make_rng(seed, c)
            x0 = body.sample_uniform(rng)
            tr = run_chain(body, x0, params, rng, store_iterates=False)
            trials.extend(tr.trials_per_iter)
        mt, ci = mean_ci(trials)
        rows.append({"d": d, "mean_trials": mt, "ci": list(ci), "min_trials": int(min(trials)),
                     "reference": ref, "constant": mt / ref})
    cs = [r["constant"] for r in rows]
    ratio = max(cs) / min(cs)
    fit = float(np.exp(np.mean(np.log(cs))))
    for r in rows:
        r["residual"] = math.log(r["constant"] / fit)
    return {"rows": rows, "fitted_constant": fit, "ratio": ratio,
            "pass": bool(ratio <= ratio_limit)}


def json_report(config: dict, schedule: Optional[dict], bounds: Sequence[BoundReport],
                tests: Sequence[dict]) -> dict:
    """``{config, schedule, bounds, tests}`` with plain JSON types."""
    return {
        "config": config,
        "schedule": schedule,
        "bounds": [b.to_dict() for b in bounds],
        "tests": [{"name": t["name"], "statistic": float(t["statistic"]), "pass": bool(t["pass"])}
                  for t in tests],
    }

